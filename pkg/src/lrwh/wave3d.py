"""Tensor-train wave solver in three dimensions.

Each block advances

    W+ = 2W - W- + dt^2 [L(W) + F cos(w t)] - dt kappa (W - W-)

with ``L`` the mode-wise SBP Laplacian (own SAT terms folded in, as in 2D)
plus rank-two interface couplings applied to the neighbour's train.  Outer
faces are Neumann-like ("damped") and absorption comes from the interior
damping ``kappa``; the velocity in the damping term is the backward
difference, so the update stays explicit.

By default ``kappa = k_1(x) + k_2(y) + k_3(z)``, which the Laplace-like
mode sum absorbs without extra rank.  The separable product
``k_1 k_2 k_3`` is available as ``damping_form="product"`` and is applied
with rank-one Hadamard products.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import tt as ttm
from .domain import gaussian_source_lowrank
from .lowrank import truncation_rank
from .wave2d import CFL, assemble_all, stable_dt

__all__ = [
    "DampingProfile",
    "damping_profile",
    "damping_grid",
    "WaveState3D",
    "tt_leapfrog_step",
    "tt_backstep",
    "TTWaveSolver",
    "ttwh_iterate",
    "ttwh_solve",
    "dirichlet_face_tt",
]

DAMPING_AMPLITUDE = 50.0
DAMPING_RATE = 100.0


@dataclass(frozen=True)
class DampingProfile:
    """Per-axis damping factors of one block and how they combine."""

    factors: tuple
    form: str = "sum"

    def __post_init__(self):
        if self.form not in ("sum", "product"):
            raise ValueError(f"damping form must be 'sum' or 'product', got {self.form!r}")
        vs = tuple(np.asarray(v, float) for v in self.factors)
        if len(vs) != 3:
            raise ValueError("need three damping factors")
        if any(np.any(v < 0) for v in vs):
            raise ValueError("damping must be nonnegative")
        object.__setattr__(self, "factors", vs)

    def is_zero(self):
        if self.form == "sum":
            return all(not np.any(v) for v in self.factors)
        return any(not np.any(v) for v in self.factors)


def damping_profile(domain, index, preset="free", form="sum", amplitude=DAMPING_AMPLITUDE, rate=DAMPING_RATE,
                    undamped_faces=()):
    """Sample ``amplitude (exp(-rate (s - lo)^2) + exp(-rate (s - hi)^2))`` per axis.

    ``preset="half_space"`` drops the top (north) term on axis 1, leaving that
    face reflecting; ``undamped_faces`` lists further ``(axis, side)`` faces
    whose term is dropped.  ``preset="none"`` returns zero damping.
    """
    if preset not in ("free", "half_space", "none"):
        raise ValueError(f"unknown damping preset {preset!r}")
    drop = set(map(tuple, undamped_faces))
    if preset == "half_space":
        drop.add((1, 1))
    factors = []
    for a in range(domain.dim):
        s = domain.axis_grid(index, a)
        lo, hi = domain.extents[a]
        k = np.zeros_like(s)
        if preset != "none":
            if (a, 0) not in drop:
                k += np.exp(-rate * (s - lo) ** 2)
            if (a, 1) not in drop:
                k += np.exp(-rate * (s - hi) ** 2)
        factors.append(amplitude * k)
    return DampingProfile(tuple(factors), form)


def damping_grid(profile):
    """Dense damping on the block grid (oracle use)."""
    k1, k2, k3 = profile.factors
    if profile.form == "sum":
        return k1[:, None, None] + k2[None, :, None] + k3[None, None, :]
    return k1[:, None, None] * k2[None, :, None] * k3[None, None, :]


def dirichlet_face_tt(left, axis, g, delta=0.0):
    """Train of ``left (x)_axis g`` with the face values ``g`` compressed by SVD."""
    g = np.asarray(g, float)
    left = np.asarray(left, float)
    u, s, vt = np.linalg.svd(g, full_matrices=False)
    nrm = np.linalg.norm(s)
    if nrm == 0:
        return None
    r = max(truncation_rank(s, delta * nrm / np.sqrt(2.0)), 1)
    U = u[:, :r]
    SV = s[:r, None] * vt[:r]
    n = left.size
    if axis == 0:
        cores = (left[None, :, None], U[None], SV[:, :, None])
    elif axis == 1:
        mid = np.zeros((r, n, r))
        for p in range(r):
            mid[p, :, p] = left
        cores = (U[None], mid, SV[:, :, None])
    else:
        cores = (U[None], SV[:, :, None], left[None, :, None])
    return ttm.TensorTrain(cores)


@dataclass
class WaveState3D:
    W_prev: dict
    W_curr: dict
    damping: dict
    dt: float
    k: int = 0

    def ranks(self):
        return {i: w.max_rank for i, w in self.W_curr.items()}


class _BlockOperators:
    """Dense per-mode update matrices for one block."""

    def __init__(self, lap, dt, profile):
        if any(k == "nonreflecting" for k in lap.face_kinds.values()):
            raise ValueError(f"block {lap.index}: nonreflecting faces are not available in 3D; use 'damped'")
        n = lap.n
        self.lap = lap
        self.dt = dt
        eye = np.eye(n)
        P = [op.dense() for op in lap.axes]
        self.laplace = P
        kap = profile.factors if profile is not None and profile.form == "sum" else (np.zeros(n),) * 3
        self.product = profile if profile is not None and profile.form == "product" and not profile.is_zero() else None
        # coefficients of W and of W_prev in the mode sums
        self.cur = [dt * dt * P[a] - dt * np.diag(kap[a]) for a in range(3)]
        self.cur[0] = self.cur[0] + 2.0 * eye
        self.has_prev_damping = any(np.any(k) for k in kap)
        self.prev = [dt * np.diag(kap[a]) for a in range(3)]
        self.prev[0] = self.prev[0] - eye
        self.couplings = [(cp.axis, cp.neighbor, cp.left @ cp.sel.T) for cp in lap.couplings]


def _data_terms(lap, t, scale, delta):
    out = []
    for df in lap.dirichlet:
        g = df.values(t, lap.face_grids[(df.axis, df.side)])
        if g is None:
            continue
        T = dirichlet_face_tt(scale * df.left, df.axis, g, delta)
        if T is not None:
            out.append(T)
    return out


def _block_step(ops, W_curr, W_prev, forcing, t, delta, omega):
    lap = ops.lap
    idx = lap.index
    dt = ops.dt
    W, Wm = W_curr[idx], W_prev[idx]
    terms = [ttm.tt_mode_sum(W, ops.cur)]
    if ops.has_prev_damping:
        terms.append(ttm.tt_mode_sum(Wm, ops.prev))
    else:
        terms.append(ttm.tt_scale(Wm, -1.0))
    if ops.product is not None:
        k1, k2, k3 = ops.product.factors
        terms.append(ttm.tt_scale(ttm.tt_hadamard_rank1(W, k1, k2, k3), -dt))
        terms.append(ttm.tt_scale(ttm.tt_hadamard_rank1(Wm, k1, k2, k3), dt))
    for axis, nb, M in ops.couplings:
        Wn = W_curr[nb]
        if not Wn.is_zero():
            terms.append(ttm.tt_scale(ttm.tt_apply_mode(M, Wn, axis), dt * dt))
    F = forcing.get(idx) if forcing else None
    if F is not None and not F.is_zero():
        terms.append(ttm.tt_scale(F, dt * dt * np.cos(omega * t)))
    terms += _data_terms(lap, t, dt * dt, delta)
    return idx, ttm.tt_round(ttm.tt_sum(terms), delta)


def _delta_for(eps, index):
    d = eps[index] if isinstance(eps, dict) else eps
    if not 0 <= d <= 1:
        raise ValueError(f"relative rounding parameter must lie in [0, 1], got {d}")
    return float(d)


def tt_leapfrog_step(state, block_ops, forcing, t, eps_rel, omega=0.0, executor=None):
    """Advance every block from ``t`` to ``t + dt``; ``eps_rel`` is a relative rounding parameter."""
    jobs = [(ops, state.W_curr, state.W_prev, forcing, t, _delta_for(eps_rel, idx), omega)
            for idx, ops in block_ops.items()]
    if executor is None:
        results = [_block_step(*j) for j in jobs]
    else:
        results = list(executor.map(lambda j: _block_step(*j), jobs))
    return WaveState3D(W_prev=state.W_curr, W_curr=dict(results), damping=state.damping, dt=state.dt,
                       k=state.k + 1)


def tt_backstep(W0, Wp0, block_ops, eps_rel):
    """``W0 - dt W0' + dt^2/2 L(W0)`` rounded once per block."""
    out = {}
    for idx, ops in block_ops.items():
        dt = ops.dt
        W = W0[idx]
        terms = [W, ttm.tt_scale(Wp0[idx], -dt),
                 ttm.tt_scale(ttm.tt_mode_sum(W, ops.laplace), 0.5 * dt * dt)]
        for axis, nb, M in ops.couplings:
            if not W0[nb].is_zero():
                terms.append(ttm.tt_scale(ttm.tt_apply_mode(M, W0[nb], axis), 0.5 * dt * dt))
        terms += _data_terms(ops.lap, 0.0, 0.5 * dt * dt, _delta_for(eps_rel, idx))
        out[idx] = ttm.tt_round(ttm.tt_sum(terms), _delta_for(eps_rel, idx))
    return out


class TTWaveSolver:
    """Time stepper used by the WaveHoltz iteration in 3D.

    ``damping`` is ``"free"``, ``"half_space"`` or ``"none"`` (a preset for
    :func:`damping_profile`), or a mapping from block index to a
    :class:`DampingProfile`.
    """

    def __init__(self, domain, omega, source=None, cfl=CFL, damping="free", damping_form="sum",
                 init_weight="literal", threads=None):
        from .waveholtz import FilterKernel, TTAlgebra

        if domain.dim != 3:
            raise ValueError("TTWaveSolver is three-dimensional")
        self.domain = domain
        self.omega = float(omega)
        self.h = domain.h
        self.blocks = domain.block_indices
        self.laps = assemble_all(domain)
        _, nt = stable_dt(domain.h, 2.0 * np.pi / self.omega, cfl)
        self.kernel = FilterKernel(self.omega, nt, init_weight)
        self.dt = self.kernel.dt
        self.algebra = TTAlgebra(domain.block_shape)
        if isinstance(damping, str):
            self.damping = {i: damping_profile(domain, i, damping, damping_form) for i in self.blocks}
        else:
            self.damping = dict(damping)
        self.ops = {i: _BlockOperators(self.laps[i], self.dt, self.damping.get(i)) for i in self.blocks}
        self.forcing = {}
        if source is not None:
            self.forcing = {i: ttm.tt_scale(gaussian_source_lowrank(source, domain, i), -1.0) for i in self.blocks}
        self.executor = ThreadPoolExecutor(max_workers=int(threads)) if threads and threads > 1 else None

    def damping_grids(self):
        return {i: damping_grid(p) for i, p in self.damping.items()}

    def backstep(self, W0, Wp0, eps):
        return tt_backstep(W0, Wp0, self.ops, eps)

    def step(self, W_prev, W_curr, t, eps):
        st = WaveState3D(W_prev=W_prev, W_curr=W_curr, damping=self.damping, dt=self.dt)
        return tt_leapfrog_step(st, self.ops, self.forcing, t, eps, self.omega, self.executor).W_curr


def ttwh_iterate(state, solver, theta=0.5, K=1e-4):
    """One TTWH iteration; the schedule is the relative 3D one."""
    from .waveholtz import lrwh_iteration

    if solver.algebra.dim != 3:
        raise ValueError("ttwh_iterate needs a tensor-train solver")
    return lrwh_iteration(state, solver, theta, K)


def ttwh_solve(solver, eps_star, max_iters, theta=0.5, K=1e-4, callback=None):
    from .waveholtz import run_to_convergence

    return run_to_convergence(solver, eps_star, max_iters, theta, K, callback=callback)
