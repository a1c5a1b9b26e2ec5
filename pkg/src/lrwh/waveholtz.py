"""The WaveHoltz outer iteration on compressed block fields.

One iteration integrates the periodically forced wave equation over a period
``T = 2 pi / w`` starting from the current iterate ``(W0, W0')`` and
accumulates the filtered pressure and velocity with a trapezoid rule.  The
code is format-generic: a *solver* object supplies time stepping, and its
``algebra`` supplies truncated linear combinations and norms for the block
values (truncated SVD in 2D, tensor trains in 3D).

Quadrature, for ``l = 1 .. N_t + 1`` with ``t_l = (l - 1) dt``:

* pressure: ``W^{l+1}`` (time ``l dt``) weighted by ``eta_l`` with
  ``eta_l = 1`` for ``l < N_t``, ``1/2`` at ``l = N_t`` and ``0`` past the
  period; the t=0 term is the literal ``3 dt / (2T) W0`` (full weight) unless
  ``init_weight="trapezoid"`` selects the half weight ``3 dt / (4T)``.
* velocity: ``(W^{l+1} - W^{l-1}) / (2 dt)`` (time ``t_l``) weighted by
  ``1/2`` at both ends ``l = 1`` and ``l = N_t + 1`` and 1 otherwise.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from . import lowrank as lr
from . import tt as ttm

__all__ = [
    "filter_weight",
    "FilterKernel",
    "LowRankAlgebra",
    "TTAlgebra",
    "WaveHoltzState",
    "IterationRecord",
    "schedule_tolerance",
    "schedule_tolerance_tt",
    "initial_state",
    "lrwh_iteration",
    "filtered_map",
    "run_to_convergence",
    "assemble_helmholtz_solution",
]


def filter_weight(t, omega):
    """Kernel ``(2/T)(cos(w t) - 1/4)`` of the WaveHoltz filter."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    T = 2.0 * np.pi / omega
    return (2.0 / T) * (np.cos(omega * np.asarray(t)) - 0.25)


@dataclass(frozen=True)
class FilterKernel:
    omega: float
    nt: int
    init_weight: str = "literal"

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.nt < 1:
            raise ValueError("need at least one step per period")
        if self.init_weight not in ("literal", "trapezoid"):
            raise ValueError("init_weight must be 'literal' or 'trapezoid'")

    @property
    def period(self):
        return 2.0 * np.pi / self.omega

    @property
    def dt(self):
        return self.period / self.nt

    def eta(self, l):
        """Pressure weight for the level reached at step ``l`` (time ``l dt``)."""
        if l < self.nt:
            return 1.0
        if l == self.nt:
            return 0.5
        return 0.0

    def eta_prime(self, l):
        """Velocity weight for step ``l`` (time ``(l - 1) dt``)."""
        return 0.5 if l in (1, self.nt + 1) else 1.0

    def initial_coefficient(self):
        base = 3.0 * self.dt / (2.0 * self.period)
        return base if self.init_weight == "literal" else 0.5 * base

    def pressure_coefficient(self, l):
        return (2.0 * self.dt / self.period) * self.eta(l) * (np.cos(self.omega * l * self.dt) - 0.25)

    def velocity_coefficient(self, l):
        t = (l - 1) * self.dt
        return (2.0 * self.dt / self.period) * self.eta_prime(l) / (2.0 * self.dt) * (np.cos(self.omega * t) - 0.25)

    def quadrature(self, values):
        """Pressure rule applied to samples ``values[j]`` at ``t = j dt``, ``j = 0..N_t``."""
        values = np.asarray(values, float)
        total = self.initial_coefficient() * values[0]
        for l in range(1, self.nt + 1):
            total = total + self.pressure_coefficient(l) * values[l]
        return total


class LowRankAlgebra:
    """Truncated-SVD block values; tolerances are absolute."""

    dim = 2

    def __init__(self, shape):
        self.shape = tuple(shape)

    def zeros(self):
        return lr.LowRankMatrix.zeros(*self.shape)

    def combine(self, pairs, eps):
        pairs = [(c, X) for c, X in pairs if c != 0]
        return lr.lr_combine(pairs, eps, shape=self.shape)

    def norm(self, X):
        return lr.norm(X)

    def inner(self, X, Y):
        return lr.inner(X, Y)

    def diff_norm(self, X, Y):
        return lr.norm(self.combine([(1.0, X), (-1.0, Y)], 0.0))

    def rank(self, X):
        return X.rank

    def to_dense(self, X):
        return X.to_dense()


class TTAlgebra:
    """Tensor-train block values; tolerances are relative rounding parameters."""

    dim = 3

    def __init__(self, shape):
        self.shape = tuple(shape)

    def zeros(self):
        return ttm.TensorTrain.zeros(self.shape)

    def combine(self, pairs, eps):
        terms = [ttm.tt_scale(X, c) for c, X in pairs if c != 0 and not X.is_zero()]
        if not terms:
            return self.zeros()
        return ttm.tt_round(ttm.tt_sum(terms), eps)

    def norm(self, X):
        return ttm.tt_norm(X)

    def inner(self, X, Y):
        return ttm.tt_inner(X, Y)

    def diff_norm(self, X, Y):
        return ttm.tt_norm(ttm.tt_sum([X, ttm.tt_scale(Y, -1.0)]))

    def rank(self, X):
        return X.max_rank

    def to_dense(self, X):
        return ttm.tt_to_dense(X)


def schedule_tolerance(rho_block, theta, K, h):
    """Absolute truncation tolerance ``max(K, theta h rho)``."""
    return max(K, theta * h * rho_block)


def schedule_tolerance_tt(rho_block, theta, K, h, block_norm, cap=1.0):
    """Relative rounding parameter ``max(K, sqrt(2) theta h rho) / ||W||`` (capped)."""
    num = max(K, math.sqrt(2.0) * theta * h * rho_block)
    if block_norm <= 0:
        return cap
    return min(cap, num / block_norm)


@dataclass
class IterationRecord:
    iteration: int
    rho: float
    rho_blocks: dict
    eps: dict
    ranks: dict
    seconds: float
    rho_G: float = float("nan")
    rho_X: float = float("nan")
    picard_fallback: bool = False


@dataclass
class WaveHoltzState:
    W: dict
    Wp: dict
    eps: dict
    eps_wave: dict
    rho: float
    rho_blocks: dict
    k: int
    nt: int
    period: float
    history: list = field(default_factory=list)

    def ranks(self, algebra):
        return {i: algebra.rank(w) for i, w in self.W.items()}


def _schedule(solver, rho_blocks, norms, theta, K):
    eps = {}
    for idx, r in rho_blocks.items():
        if solver.algebra.dim == 2:
            eps[idx] = schedule_tolerance(r, theta, K, solver.h)
        else:
            eps[idx] = schedule_tolerance_tt(r, theta, K, solver.h, norms[idx])
    return eps


def initial_state(solver, theta, K, W0=None, Wp0=None):
    """Zero (or given) data with ``rho^0 = 1`` and the matching first tolerances."""
    alg = solver.algebra
    W0 = W0 if W0 is not None else {i: alg.zeros() for i in solver.blocks}
    Wp0 = Wp0 if Wp0 is not None else {i: alg.zeros() for i in solver.blocks}
    rho_blocks = {i: 1.0 for i in solver.blocks}
    eps = _schedule(solver, rho_blocks, {i: alg.norm(W0[i]) for i in solver.blocks}, theta, K)
    nt = solver.kernel.nt
    return WaveHoltzState(W=W0, Wp=Wp0, eps=eps, eps_wave={i: e / (2 * nt) for i, e in eps.items()},
                          rho=1.0, rho_blocks=rho_blocks, k=0, nt=nt, period=solver.kernel.period)


def filtered_map(solver, W0, Wp0, eps, eps_wave):
    """One application of the discrete filter: returns the new pressure/velocity dicts."""
    alg = solver.algebra
    kern = solver.kernel
    dt = kern.dt
    Wm = solver.backstep(W0, Wp0, eps_wave)
    acc = {i: alg.combine([(kern.initial_coefficient(), W0[i])], eps[i]) for i in solver.blocks}
    accp = {i: alg.zeros() for i in solver.blocks}
    W = dict(W0)
    for l in range(1, kern.nt + 2):
        t = (l - 1) * dt
        Wn = solver.step(Wm, W, t, eps_wave)
        cp = kern.pressure_coefficient(l)
        cv = kern.velocity_coefficient(l)
        for i in solver.blocks:
            acc[i] = alg.combine([(1.0, acc[i]), (cp, Wn[i])], eps[i])
            accp[i] = alg.combine([(1.0, accp[i]), (cv, Wn[i]), (-cv, Wm[i])], eps[i])
        Wm, W = W, Wn
    return acc, accp


def lrwh_iteration(state, solver, theta, K):
    """Algorithm body: filter, residual per block, new tolerances."""
    t0 = time.perf_counter()
    alg = solver.algebra
    acc, accp = filtered_map(solver, state.W, state.Wp, state.eps, state.eps_wave)
    rho_blocks = {i: alg.diff_norm(acc[i], state.W[i]) for i in solver.blocks}
    rho = math.sqrt(sum(r * r for r in rho_blocks.values()))
    eps = _schedule(solver, rho_blocks, {i: alg.norm(acc[i]) for i in solver.blocks}, theta, K)
    new = WaveHoltzState(W=acc, Wp=accp, eps=eps, eps_wave={i: e / (2 * state.nt) for i, e in eps.items()},
                         rho=rho, rho_blocks=rho_blocks, k=state.k + 1, nt=state.nt, period=state.period,
                         history=state.history)
    new.history.append(IterationRecord(iteration=new.k, rho=rho, rho_blocks=rho_blocks, eps=dict(state.eps),
                                       ranks=new.ranks(alg), seconds=time.perf_counter() - t0))
    return new


def run_to_convergence(solver, eps_star, max_iters, theta=1.0, K=1e-5, state=None, callback=None):
    """Iterate until ``rho <= eps_star`` or ``max_iters``; returns (state, converged)."""
    if not eps_star > 0:
        raise ValueError("eps_star must be positive")
    state = state if state is not None else initial_state(solver, theta, K)
    converged = False
    while state.k < max_iters:
        state = lrwh_iteration(state, solver, theta, K)
        if callback is not None:
            callback(state)
        if not np.isfinite(state.rho):
            break
        if state.rho <= eps_star:
            converged = True
            break
    return state, converged


def assemble_helmholtz_solution(W, Wp, omega):
    """Real part ``W`` and imaginary part ``W' / omega`` of the Helmholtz solution.

    Values stay in their compressed format; dicts of blocks are mapped blockwise.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    if isinstance(W, dict):
        return {i: assemble_helmholtz_solution(W[i], Wp[i], omega) for i in W}
    if isinstance(Wp, lr.LowRankMatrix):
        return W, Wp.scaled(1.0 / omega)
    if isinstance(Wp, ttm.TensorTrain):
        return W, ttm.tt_scale(Wp, 1.0 / omega)
    return W, np.asarray(Wp) / omega
