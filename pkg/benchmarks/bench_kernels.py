"""Numba vs numpy timings for the banded stencil and the fused leapfrog update.

Usage: python3 benchmarks/bench_kernels.py [--reps N]
"""

import argparse
import time

import numpy as np

from lrwh import _kernels as k
from lrwh.sbp import build_sbp


def _best(fn, reps):
    fn()  # warm up (and compile)
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=50)
    args = p.parse_args(argv)
    if not k.HAVE_NUMBA:
        print("numba not available; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':<10} {'shape':>12} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8}")
    for n, m in [(26, 8), (101, 16), (401, 32), (1601, 8)]:
        s = build_sbp(4, n, 1.0 / (n - 1)).d2_stencil
        x = rng.standard_normal((n, m))
        a = _best(lambda: k.banded_apply_numpy(s.left, s.interior, s.right, x, s.scale), args.reps)
        b = _best(lambda: k.banded_apply_numba(s.left, s.interior, s.right, x, s.scale), args.reps)
        print(f"{'banded':<10} {f'{n}x{m}':>12} {a:11.3e} {b:11.3e} {a / b:8.2f}")
    for n in (26, 101, 401):
        w, wp, r = (rng.standard_normal((n, n)) for _ in range(3))
        d = rng.random((n, n))
        q = 1.0 + d
        a = _best(lambda: k.leapfrog_update_numpy(w, wp, r, 1e-4, d, q), args.reps)
        b = _best(lambda: k.leapfrog_update_numba(w, wp, r, 1e-4, d, q), args.reps)
        print(f"{'leapfrog':<10} {f'{n}x{n}':>12} {a:11.3e} {b:11.3e} {a / b:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
