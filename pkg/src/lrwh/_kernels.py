"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``LRWH_DISABLE_NUMBA`` is unset or ``0``.  Both paths are always
importable as ``*_numpy`` / ``*_numba`` so they can be compared directly.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False


def _flag_disabled():
    return os.environ.get("LRWH_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------------------
# banded stencil application along axis 0


def banded_apply_numpy(left, interior, right, x, scale=1.0):
    """Apply a banded operator with boundary closures to the rows of ``x``.

    ``left`` is the (p, q) closure occupying the top-left corner, ``right`` the
    (p', q') closure in the bottom-right corner and ``interior`` the centered
    stencil used on all remaining rows.
    """
    n = x.shape[0]
    out = np.empty_like(x, dtype=np.result_type(x, left))
    pl, ql = left.shape
    pr, qr = right.shape
    w = interior.shape[0]
    o = w // 2
    out[:pl] = left @ x[:ql]
    out[n - pr:] = right @ x[n - qr:]
    lo, hi = pl, n - pr
    if hi > lo:
        acc = interior[0] * x[lo - o:hi - o]
        for k in range(1, w):
            acc = acc + interior[k] * x[lo - o + k:hi - o + k]
        out[lo:hi] = acc
    if scale != 1.0:
        out *= scale
    return out


def leapfrog_update_numpy(w, w_prev, rhs, dt2, damp_prev, denom):
    """Fused explicit/implicit leapfrog update used by the dense solvers.

    Returns ``(2 w - w_prev + dt2 * rhs + damp_prev * w_prev) / denom``.
    """
    return (2.0 * w - w_prev + dt2 * rhs + damp_prev * w_prev) / denom


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def banded_apply_numba(left, interior, right, x, scale=1.0):
        n, m = x.shape
        out = np.zeros((n, m))
        pl, ql = left.shape
        pr, qr = right.shape
        w = interior.shape[0]
        o = w // 2
        for i in range(pl):
            for j in range(ql):
                c = left[i, j]
                if c != 0.0:
                    for k in range(m):
                        out[i, k] += c * x[j, k]
        for i in range(pl, n - pr):
            for s in range(w):
                c = interior[s]
                if c != 0.0:
                    row = i - o + s
                    for k in range(m):
                        out[i, k] += c * x[row, k]
        for i in range(pr):
            for j in range(qr):
                c = right[i, j]
                if c != 0.0:
                    for k in range(m):
                        out[n - pr + i, k] += c * x[n - qr + j, k]
        if scale != 1.0:
            for i in range(n):
                for k in range(m):
                    out[i, k] *= scale
        return out

    @numba.njit(cache=True)
    def leapfrog_update_numba(w, w_prev, rhs, dt2, damp_prev, denom):
        out = np.empty_like(w)
        a = w.ravel()
        b = w_prev.ravel()
        r = rhs.ravel()
        d = damp_prev.ravel()
        q = denom.ravel()
        o = out.ravel()
        for i in range(a.size):
            o[i] = (2.0 * a[i] - b[i] + dt2 * r[i] + d[i] * b[i]) / q[i]
        return out

else:  # pragma: no cover
    banded_apply_numba = None
    leapfrog_update_numba = None


def banded_apply(left, interior, right, x, scale=1.0):
    x = np.asarray(x)
    if USE_NUMBA and x.dtype == np.float64:
        squeeze = x.ndim == 1
        x2 = np.ascontiguousarray(x.reshape(x.shape[0], -1))
        out = banded_apply_numba(left, interior, right, x2, float(scale))
        return out.reshape(x.shape) if not squeeze else out[:, 0]
    return banded_apply_numpy(left, interior, right, x, scale)


def leapfrog_update(w, w_prev, rhs, dt2, damp_prev, denom):
    if USE_NUMBA:
        w, w_prev, rhs = (np.ascontiguousarray(a, dtype=np.float64) for a in (w, w_prev, rhs))
        damp_prev = np.ascontiguousarray(np.broadcast_to(damp_prev, w.shape), dtype=np.float64)
        denom = np.ascontiguousarray(np.broadcast_to(denom, w.shape), dtype=np.float64)
        return leapfrog_update_numba(w, w_prev, rhs, float(dt2), damp_prev, denom)
    return leapfrog_update_numpy(w, w_prev, rhs, dt2, damp_prev, denom)
