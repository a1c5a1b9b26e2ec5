"""Scenario runner: ``lrwh run|time|validate --config FILE``.

Scenario files are INI files (see the bundled ones in ``lrwh/scenarios``).
Every CSV written here starts with a ``# schema_version=N`` line followed by
a header row; floats are written with 17 significant digits in scientific
notation.
"""

import argparse
import configparser
import csv
from dataclasses import dataclass, field
import importlib.resources
import logging
import math
from pathlib import Path
import re
import sys
import time

import numpy as np

from . import lowrank as lr
from .domain import SourceSpec, build_domain, greens_function, ppw
from .sbp import build_sbp

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "RunReport",
    "load_config",
    "parse_config",
    "run_scenario",
    "run_timing_study",
    "greens_rank_table",
    "bundled_scenarios",
    "main",
]

log = logging.getLogger("lrwh")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing

_PI = re.compile(r"^\s*([-+]?[0-9.]*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$")


def _num(text):
    """Float, optionally with a ``pi`` factor: ``5pi``, ``5*pi``, ``pi/2``."""
    text = text.strip()
    m = _PI.match(text)
    if m:
        coef = m.group(1)
        val = (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
        return val / float(m.group(2)) if m.group(2) else val
    return float(text)


def _nums(text):
    return [_num(t) for t in re.split(r"[\s,]+", text.strip()) if t]


def _ints(text):
    return [int(t) for t in re.split(r"[\s,]+", text.strip()) if t]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    study: str = "waveholtz"
    dim: int = 2
    extents: list = field(default_factory=lambda: [(0.0, 1.0), (0.0, 1.0)])
    partition: list = field(default_factory=lambda: [1, 1])
    n: int = 26
    order: int = 4
    tau: float = 15.0
    cfl: float = 0.15
    wave_speed: dict = field(default_factory=lambda: {"default": 1.0})
    boundary: dict = field(default_factory=dict)
    default_boundary: str = "nonreflecting"
    source_kind: str = "gaussian_point"
    source_center: tuple = (0.5, 0.5)
    omega: float = math.pi
    source_width: float = None
    method: str = "lowrank"
    memory: int = 0
    theta: float = 1.0
    K: float = 1e-5
    eps_star: float = 1e-3
    max_iters: int = 200
    init_weight: str = "literal"
    full_taylor: bool = False
    damping: str = "free"
    damping_form: str = "sum"
    compare: str = "none"
    oracle_tol: float = 1e-9
    oracle_max_iters: int = 2000
    eps_scales: list = field(default_factory=lambda: [1e-3])
    resolutions: list = field(default_factory=list)
    repetitions: int = 100
    seed: int = 0
    out: str = None

    def domain_config(self):
        return dict(dim=self.dim, extents=self.extents, partition=self.partition, n=self.n, order=self.order,
                    tau=self.tau, wave_speed=self._speed_fn(), boundary=self.boundary,
                    default_boundary=self.default_boundary)

    def _speed_fn(self):
        ws = self.wave_speed
        layer_axis = ws.get("layer_axis")
        layers = ws.get("layers")
        blocks = ws.get("blocks", {})
        default = ws.get("default", 1.0)

        def speed(index):
            index = tuple(index)
            if index in blocks:
                return blocks[index]
            if layer_axis is not None and layers:
                return layers[index[layer_axis]]
            return default

        return speed

    def source(self):
        return SourceSpec(self.source_kind, tuple(self.source_center), self.omega, self.source_width)


_SCHEMA = {
    "scenario": {"name": str, "study": str, "seed": int},
    "grid": {"dim": int, "extents": "extents", "partition": _ints, "n": int, "order": int, "tau": _num,
             "cfl": _num},
    "boundary": {"default": str, "west": str, "east": str, "south": str, "north": str, "bottom": str, "top": str},
    "source": {"kind": str, "center": _nums, "omega": _num, "width": _num},
    "solver": {"method": str, "memory": int, "theta": _num, "k": _num, "eps_star": _num, "max_iters": int,
               "init_weight": str, "full_taylor": _bool, "damping": str, "damping_form": str},
    "oracle": {"compare": str, "tol": _num, "max_iters": int},
    "study": {"eps_scales": _nums, "resolutions": _ints, "repetitions": int},
    "output": {"dir": str},
}

_FIELD = {
    ("source", "kind"): "source_kind", ("source", "center"): "source_center", ("source", "width"): "source_width",
    ("solver", "k"): "K", ("oracle", "tol"): "oracle_tol", ("oracle", "max_iters"): "oracle_max_iters",
    ("output", "dir"): "out", ("boundary", "default"): "default_boundary",
}

_CHOICES = {
    "study": ("waveholtz", "greens", "timing"),
    "method": ("lowrank", "dense"),
    "init_weight": ("literal", "trapezoid"),
    "damping": ("free", "half_space", "none"),
    "damping_form": ("sum", "product"),
    "compare": ("none", "dense_waveholtz", "helmholtz_direct"),
    "source_kind": ("gaussian_point", "greens_dirichlet"),
}


def _line_of(text, section, key):
    """1-based line of ``key`` inside ``[section]`` (0 if not found)."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
        elif current == section and "=" in s and s.split("=", 1)[0].strip().lower() == key:
            return no
    return 0


def parse_config(text, source="<string>"):
    """Parse scenario text; errors name the file, line and key."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = ScenarioConfig()

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: [{section}] {key}: {msg}")

    for section in cp.sections():
        sec = section.lower()
        if sec == "wave_speed":
            ws = {"default": 1.0, "blocks": {}}
            for key, val in cp.items(section):
                try:
                    if key == "default":
                        ws["default"] = _num(val)
                    elif key == "layer_axis":
                        ws["layer_axis"] = int(val)
                    elif key == "layers":
                        ws["layers"] = _nums(val)
                    elif key.startswith("block"):
                        ws["blocks"][tuple(_ints(key[5:].replace(".", " ")))] = _num(val)
                    else:
                        fail(sec, key, "unknown key")
                except ValueError as exc:
                    if isinstance(exc, ConfigError):
                        raise
                    fail(sec, key, str(exc))
            cfg.wave_speed = ws
            continue
        if sec not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, val in cp.items(section):
            conv = _SCHEMA[sec].get(key)
            if conv is None:
                fail(sec, key, "unknown key")
            try:
                if conv == "extents":
                    parts = [p for p in val.split(",") if p.strip()]
                    value = []
                    for p in parts:
                        lohi = _nums(p)
                        if len(lohi) != 2:
                            raise ValueError(f"extent {p.strip()!r} needs 'lo hi'")
                        value.append(tuple(lohi))
                else:
                    value = conv(val)
            except ValueError as exc:
                fail(sec, key, str(exc))
            if sec == "boundary" and key != "default":
                cfg.boundary[key] = value
                continue
            name = _FIELD.get((sec, key), key)
            if name in _CHOICES and value not in _CHOICES[name]:
                fail(sec, key, f"expected one of {_CHOICES[name]}, got {value!r}")
            setattr(cfg, name, value)
    try:
        cfg.extents = [tuple(e) for e in cfg.extents]
        build_domain(cfg.domain_config())
        if len(cfg.source_center) != cfg.dim:
            raise ValueError(f"source center has {len(cfg.source_center)} coordinates, expected {cfg.dim}")
        if cfg.memory < 0:
            raise ValueError("memory must be nonnegative")
        if cfg.dim == 3 and cfg.memory > 0:
            raise ValueError("acceleration is two-dimensional only")
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def bundled_scenarios():
    root = importlib.resources.files("lrwh") / "scenarios"
    return {p.name: p for p in root.iterdir() if p.name.endswith(".cfg")}


# ---------------------------------------------------------------------------
# reporting


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    if isinstance(v, tuple):
        return ":".join(str(x) for x in v)
    return str(v)


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts of strings."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# schema_version="):
            raise ValueError(f"{path}: missing schema header")
        return list(csv.DictReader(fh))


@dataclass
class RunReport:
    name: str
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    ranks: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    state: object = None
    solver: object = None

    def write(self, out):
        out = Path(out)
        write_csv(out / "residuals.csv", ["iteration", "rho", "rho_G", "rho_X", "picard_fallback", "seconds"],
                  self.residuals)
        write_csv(out / "ranks.csv", ["iteration", "block", "rank", "eps", "reference_rank"], self.ranks)
        write_csv(out / "errors.csv", ["metric", "block", "value"], self.errors)
        write_csv(out / "timings.csv", ["phase", "seconds"], self.timings)


def _block_label(idx):
    return ":".join(str(i) for i in idx)


def _make_solver(cfg, domain, threads):
    src = cfg.source()
    if cfg.dim == 2:
        if cfg.method == "dense":
            from .oracle import DenseWaveSolver

            return DenseWaveSolver(domain, cfg.omega, src, cfg.cfl, cfg.init_weight, cfg.full_taylor)
        from .wave2d import LowRankWaveSolver

        return LowRankWaveSolver(domain, cfg.omega, src, cfg.cfl, cfg.init_weight, cfg.full_taylor, threads)
    from .wave3d import TTWaveSolver

    tts = TTWaveSolver(domain, cfg.omega, src, cfg.cfl, cfg.damping, cfg.damping_form, cfg.init_weight, threads)
    if cfg.method == "dense":
        from .oracle import DenseWaveSolver

        return DenseWaveSolver(domain, cfg.omega, src, cfg.cfl, cfg.init_weight, cfg.full_taylor,
                               damping=tts.damping_grids())
    return tts


def _oracle_solution(cfg, domain, solver):
    """Dense reference pressure per block, or None."""
    from .oracle import DenseWaveSolver, dense_helmholtz_direct, dense_waveholtz

    damping = solver.damping_grids() if hasattr(solver, "damping_grids") else None
    if cfg.compare == "dense_waveholtz":
        ds = DenseWaveSolver(domain, cfg.omega, cfg.source(), cfg.cfl, cfg.init_weight, cfg.full_taylor,
                             damping=damping)
        st, _ = dense_waveholtz(ds, cfg.oracle_tol, cfg.oracle_max_iters, cfg.theta, cfg.K)
        return st.W
    if cfg.compare == "helmholtz_direct":
        u = dense_helmholtz_direct(domain, cfg.omega, cfg.source(), damping=damping)
        return {i: v.real for i, v in u.items()}
    return None


def _reference_rank(ref, eps, dim):
    if ref is None or dim != 2:
        return -1
    return lr.from_dense(ref, eps).rank


def run_scenario(cfg, out=None, threads=1, seed=None):
    """Run a WaveHoltz scenario and (optionally) write its CSVs to ``out``."""
    if cfg.study == "greens":
        return greens_rank_table(cfg, out)
    if cfg.study != "waveholtz":
        raise ConfigError(f"study {cfg.study!r} is not run by run_scenario")
    from .lraa import accelerated_solve

    seed = cfg.seed if seed is None else seed
    np.random.seed(seed % 2**32)
    t_total = time.perf_counter()
    t0 = time.perf_counter()
    domain = build_domain(cfg.domain_config())
    solver = _make_solver(cfg, domain, threads)
    t_setup = time.perf_counter() - t0

    t0 = time.perf_counter()
    ref = _oracle_solution(cfg, domain, solver)
    t_oracle = time.perf_counter() - t0

    def progress(st):
        log.info("iteration %d  rho=%.3e  max rank=%d", st.k, st.rho, max(st.ranks(solver.algebra).values()))

    t0 = time.perf_counter()
    state, converged, _ = accelerated_solve(solver, cfg.memory, cfg.eps_star, cfg.max_iters, cfg.theta, cfg.K,
                                            callback=progress)
    t_iter = time.perf_counter() - t0

    rep = RunReport(name=cfg.name, converged=converged, iterations=state.k, state=state, solver=solver)
    for rec in state.history:
        rep.residuals.append(dict(iteration=rec.iteration, rho=rec.rho, rho_G=rec.rho_G, rho_X=rec.rho_X,
                                  picard_fallback=rec.picard_fallback, seconds=rec.seconds))
        for idx in solver.blocks:
            rep.ranks.append(dict(iteration=rec.iteration, block=_block_label(idx), rank=rec.ranks[idx],
                                  eps=rec.eps[idx], reference_rank=_reference_rank(
                                      None if ref is None else ref[idx], rec.eps[idx], cfg.dim)))
    rep.errors.append(dict(metric="final_residual", block="all", value=state.rho))
    if ref is not None:
        scale = domain.h ** (domain.dim / 2.0)
        tot = 0.0
        for idx in solver.blocks:
            e = np.linalg.norm(solver.algebra.to_dense(state.W[idx]) - ref[idx])
            tot += e * e
            rep.errors.append(dict(metric="error_vs_" + cfg.compare, block=_block_label(idx), value=scale * e))
        rep.errors.append(dict(metric="error_vs_" + cfg.compare, block="all", value=scale * math.sqrt(tot)))
    rep.timings = [dict(phase="setup", seconds=t_setup), dict(phase="oracle", seconds=t_oracle),
                   dict(phase="iterations", seconds=t_iter),
                   dict(phase="total", seconds=time.perf_counter() - t_total)]
    if out is not None:
        rep.write(out)
    return rep


def greens_rank_table(cfg, out=None):
    """Ranks of the truncated Green's function per block for each ``eps = scale / h``."""
    resolutions = cfg.resolutions or [cfg.n]
    rows = []
    for n in resolutions:
        dom = build_domain({**cfg.domain_config(), "n": n})
        src = cfg.source()
        for scale in cfg.eps_scales:
            eps = scale / dom.h
            for idx in dom.block_indices:
                re_, im_ = greens_function(src, dom.grids(idx))
                rows.append(dict(n=n, ppw=ppw(1.0, cfg.omega, dom.h), eps=eps, block=_block_label(idx),
                                 rank_real=lr.from_dense(re_, eps).rank, rank_imag=lr.from_dense(im_, eps).rank))
    rep = RunReport(name=cfg.name, converged=True, iterations=0)
    rep.ranks = rows
    if out is not None:
        write_csv(Path(out) / "ranks.csv", ["n", "ppw", "eps", "block", "rank_real", "rank_imag"], rows)
    return rep


def run_timing_study(cfg, out=None, repetitions=None):
    """Median time of one Laplacian-plus-truncation step, low-rank vs dense, per block.

    The step is ``T_eps(G + dt^2 L G)`` for the Green's function ``G`` of the
    configured source; the dense variant applies the same banded operators.
    """
    reps = cfg.repetitions if repetitions is None else int(repetitions)
    resolutions = cfg.resolutions or [cfg.n]
    rows = []
    for n in resolutions:
        dom = build_domain({**cfg.domain_config(), "n": n})
        ops = build_sbp(dom.order, n, dom.h)
        from .sbp import AxisOperator

        P = AxisOperator(ops.d2_stencil, n)
        dt = cfg.cfl * dom.h
        src = cfg.source()
        for idx in dom.block_indices:
            G, _ = greens_function(src, dom.grids(idx))
            for scale in cfg.eps_scales:
                eps = scale / dom.h
                A = lr.from_dense(G, eps)

                def lowrank_step():
                    return lr.sum_factored([(A.U, np.diag(A.s), A.V),
                                            (P.apply(A.U), np.diag(dt * dt * A.s), A.V),
                                            (A.U, np.diag(dt * dt * A.s), P.apply(A.V))], eps, shape=A.shape)

                def dense_step():
                    return G + dt * dt * (P.apply(G) + P.apply(G.T).T)

                t_lr = _median_time(lowrank_step, reps)
                t_de = _median_time(dense_step, reps)
                diff = np.linalg.norm(lowrank_step().to_dense() - dense_step())
                rows.append(dict(n=n, block=_block_label(idx), ppw=ppw(1.0, cfg.omega, dom.h), eps=eps,
                                 rank=A.rank, t_lowrank=t_lr, t_dense=t_de, step_difference=diff))
    if out is not None:
        write_csv(Path(out) / "timings.csv",
                  ["n", "block", "ppw", "eps", "rank", "t_lowrank", "t_dense", "step_difference"], rows)
    return rows


def _median_time(fn, reps):
    fn()
    ts = []
    for _ in range(max(1, reps)):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(prog="lrwh", description="Low-rank WaveHoltz scenario runner")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a scenario"), ("time", "run the timing study"),
                           ("validate", "check a scenario file")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True,
                        help="scenario file, or the name of a bundled scenario (e.g. free-space-2d-small.cfg)")
        sp.add_argument("--out", default=None, help="output directory for CSV files")
        sp.add_argument("--threads", type=int, default=1, help="per-block worker threads")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (unsigned 64-bit)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _resolve_config(name):
    path = Path(name)
    if path.exists():
        return load_config(path)
    bundled = bundled_scenarios()
    if name in bundled:
        return parse_config(bundled[name].read_text(), name)
    raise ConfigError(f"no such scenario file: {name}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _resolve_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.out or f"out-{cfg.name}"
    if args.command == "validate":
        dom = build_domain(cfg.domain_config())
        print(f"{cfg.name}: {cfg.dim}D, {len(dom.block_indices)} blocks of {dom.n}^{dom.dim}, h={dom.h:.6g}, "
              f"PPW={ppw(1.0, cfg.omega, dom.h):.4g}")
        return EXIT_OK
    if args.command == "time":
        rows = run_timing_study(cfg, out)
        for r in rows:
            print(f"n={r['n']} block={r['block']} eps={r['eps']:.3e} rank={r['rank']} "
                  f"lowrank={r['t_lowrank']:.3e}s dense={r['t_dense']:.3e}s")
        return EXIT_OK
    rep = run_scenario(cfg, out, threads=args.threads, seed=args.seed)
    if cfg.study == "greens":
        print(f"{cfg.name}: wrote {len(rep.ranks)} rank rows to {out}")
        return EXIT_OK
    status = "converged" if rep.converged else "did not converge"
    print(f"{cfg.name}: {status} after {rep.iterations} iterations, rho={rep.state.rho:.3e}; CSVs in {out}")
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
