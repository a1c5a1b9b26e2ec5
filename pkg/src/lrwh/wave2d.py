"""Low-rank multiblock wave solver in two dimensions.

Each block carries ``W_tt = P_x W + W P_y^T + (neighbour terms) - P W_t + F cos(w t)``
where ``P_x``, ``P_y`` are ``c^2 D2`` with every own-block SAT contribution
folded in as rank-one corrections (see :func:`assemble_laplacian`), the
neighbour terms are rank <= 2 couplings through interface traces and fluxes,
and ``P`` is the diagonal implicit weight of nonreflecting faces.

SAT conventions (``d_1``, ``d_n`` are boundary derivative rows oriented along
+x, ``H`` the norm matrix, ``c_av = (c_u^2 + c_v^2) / 2``):

* nonreflecting face: ``-c H^{-1} e_f (c dw/dn + w_t)``
* Neumann face: ``-c^2 H^{-1} e_f dw/dn``
* Dirichlet face, west: ``-c^2 H^{-1} (d_1 + (tau/h) e_1)(w_1 - g)``;
  east: ``c^2 H^{-1} (d_n - (tau/h) e_n)(w_n - g)``
* interface, east side of u against v::

      (c_u^2/2) H^{-1} d_n [u]  - 1/2 H^{-1} e_n (c_u^2 d_n^T u - c_v^2 d_1^T v)
      - c_av (tau/h) H^{-1} e_n [u]          with [u] = e_n^T u - e_1^T v

  and the mirror image on the west side of v.

These are the signs that make ``H L`` symmetric negative semidefinite.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lowrank as lr
from .domain import face_name
from .fadi import SylvesterSpec, corner_solve
from .lowrank import LowRankMatrix
from .sbp import AxisOperator, build_sbp

__all__ = [
    "Coupling",
    "DirichletFace",
    "DiscreteLaplacian",
    "WaveState2D",
    "assemble_laplacian",
    "assemble_all",
    "laplacian_terms",
    "apply_laplacian",
    "leapfrog_step",
    "backstep_initialize",
    "wave_velocity",
    "stable_dt",
    "CFL",
]

CFL = 0.15


@dataclass(frozen=True)
class Coupling:
    """Contribution ``left @ (sel^T W_nb)`` along ``axis`` from the neighbour block."""

    axis: int
    side: int
    neighbor: tuple
    left: np.ndarray
    sel: np.ndarray


@dataclass(frozen=True)
class DirichletFace:
    """Forcing ``left (x)_axis g(t)`` from Dirichlet data ``g`` on one face."""

    axis: int
    side: int
    left: np.ndarray
    data: object

    def values(self, t, face_grids):
        if self.data is None:
            return None
        return np.asarray(self.data(t, *face_grids), float)


@dataclass
class DiscreteLaplacian:
    index: tuple
    wave_speed: float
    n: int
    dim: int
    axes: list
    implicit: list
    couplings: list
    dirichlet: list
    face_kinds: dict
    face_grids: dict = field(default_factory=dict)

    @property
    def has_implicit(self):
        return any(np.any(p) for p in self.implicit)

    @property
    def implicit_faces(self):
        return [f for f, k in self.face_kinds.items() if k == "nonreflecting"]

    def describe(self):
        return {face_name(f): k for f, k in sorted(self.face_kinds.items())}


def assemble_laplacian(domain, index, ops=None):
    """Fold all own-block SAT terms into per-axis operators and list the couplings."""
    index = tuple(index)
    block = domain.block(index)
    if ops is None:
        ops = build_sbp(domain.order, domain.n, domain.h)
    n, h, tau = ops.n, ops.h, domain.tau
    c = block.wave_speed
    c2 = c * c
    hd = ops.hdiag
    e1, en = ops.e_first, ops.e_last
    d1, dn = ops.d_first, ops.d_last
    He1, Hen = e1 / hd[0], en / hd[-1]
    Hd1, Hdn = d1 / hd, dn / hd

    axes, implicit, couplings, dirichlet, kinds, face_grids = [], [], [], [], {}, {}
    for axis in range(domain.dim):
        P = AxisOperator(ops.d2_stencil, n, scale=c2)
        p = np.zeros(n)
        for side in (0, 1):
            tag = block.tag(axis, side)
            kinds[(axis, side)] = tag.kind
            if tag.kind == "damped" and domain.dim == 2:
                raise ValueError(f"block {index}: damped faces are only supported in 3D")
            if tag.kind in ("nonreflecting", "neumann", "damped"):
                # cancel the boundary flux of D2
                P = P.with_correction(c2 * He1, d1) if side == 0 else P.with_correction(-c2 * Hen, dn)
                if tag.kind == "nonreflecting":
                    p[0 if side == 0 else -1] += c / hd[0 if side == 0 else -1]
            elif tag.kind == "dirichlet":
                if side == 0:
                    P = P.with_correction(-c2 * Hd1, e1).with_correction(-c2 * tau / h * He1, e1)
                    left = c2 * Hd1 + c2 * tau / h * He1
                else:
                    P = P.with_correction(c2 * Hdn, en).with_correction(-c2 * tau / h * Hen, en)
                    left = -c2 * Hdn + c2 * tau / h * Hen
                dirichlet.append(DirichletFace(axis, side, left, tag.data))
                face_grids[(axis, side)] = tuple(domain.axis_grid(index, a) for a in range(domain.dim) if a != axis)
            elif tag.kind == "interface":
                nb = tuple(tag.neighbor)
                cn2 = domain.block(nb).wave_speed ** 2
                cav = 0.5 * (c2 + cn2)
                pen = cav * tau / h
                if side == 1:
                    P = (P.with_correction(0.5 * c2 * Hdn, en)
                          .with_correction(-0.5 * c2 * Hen, dn)
                          .with_correction(-pen * Hen, en))
                    left = np.column_stack([-0.5 * c2 * Hdn + pen * Hen, 0.5 * cn2 * Hen])
                    sel = np.column_stack([e1, d1])
                else:
                    P = (P.with_correction(-0.5 * c2 * Hd1, e1)
                          .with_correction(0.5 * c2 * He1, d1)
                          .with_correction(-pen * He1, e1))
                    left = np.column_stack([0.5 * c2 * Hd1 + pen * He1, -0.5 * cn2 * He1])
                    sel = np.column_stack([en, dn])
                couplings.append(Coupling(axis, side, nb, left, sel))
            else:  # pragma: no cover - FaceTag validates kinds
                raise ValueError(f"unknown face tag {tag.kind!r}")
        axes.append(P)
        implicit.append(p)
    return DiscreteLaplacian(index=index, wave_speed=c, n=n, dim=domain.dim, axes=axes, implicit=implicit,
                             couplings=couplings, dirichlet=dirichlet, face_kinds=kinds, face_grids=face_grids)


def assemble_all(domain):
    ops = build_sbp(domain.order, domain.n, domain.h)
    return {idx: assemble_laplacian(domain, idx, ops) for idx in domain.block_indices}


def stable_dt(h, period=None, cfl=CFL):
    """``cfl * h``, shortened so that ``period`` is an integer number of steps."""
    dt = cfl * h
    if period is None:
        return dt, None
    nt = int(np.ceil(period / dt - 1e-12))
    return period / nt, nt


# ---------------------------------------------------------------------------
# low-rank operator application


def laplacian_terms(lap, W, neighbors, t=0.0):
    """Factored terms ``(L, C, R)`` whose sum is ``L(W)`` including neighbour and data terms."""
    terms = []
    if W.rank:
        Px, Py = lap.axes
        terms.append((Px.apply(W.U), np.diag(W.s), W.V))
        terms.append((W.U, np.diag(W.s), Py.apply(W.V)))
    for cp in lap.couplings:
        Wn = neighbors[cp.neighbor]
        if Wn.rank == 0:
            continue
        if cp.axis == 0:
            terms.append((cp.left, (cp.sel.T @ Wn.U) * Wn.s, Wn.V))
        else:
            terms.append((Wn.U, Wn.s[:, None] * (Wn.V.T @ cp.sel), cp.left))
    for df in lap.dirichlet:
        g = df.values(t, lap.face_grids[(df.axis, df.side)])
        if g is None:
            continue
        if df.axis == 0:
            terms.append((df.left[:, None], np.ones((1, 1)), g[:, None]))
        else:
            terms.append((g[:, None], np.ones((1, 1)), df.left[:, None]))
    return terms


def apply_laplacian(lap, W, neighbors, eps, t=0.0):
    return lr.sum_factored(laplacian_terms(lap, W, neighbors, t), eps, shape=W.shape)


def _implicit_history(lap, W_prev, dt):
    """Factored ``(dt/2)(P_x W + W P_y)`` for the diagonal implicit weights."""
    px, py = lap.implicit
    terms = []
    if W_prev.rank == 0:
        return terms
    for p, axis in ((px, 0), (py, 1)):
        idx = np.flatnonzero(p)
        if idx.size == 0:
            continue
        E = np.zeros((lap.n, idx.size))
        E[idx, np.arange(idx.size)] = 0.5 * dt * p[idx]
        if axis == 0:
            terms.append((E, W_prev.U[idx] * W_prev.s, W_prev.V))
        else:
            terms.append((W_prev.U, W_prev.s[:, None] * W_prev.V[idx].T, E))
    return terms


def _sylvester_spec(lap, dt, rhs):
    px, py = lap.implicit
    n = lap.n

    def vec(p, i):
        v = np.zeros(n)
        v[i] = np.sqrt(0.5 * dt * p[i])
        return v

    return SylvesterSpec(vec(px, 0), vec(px, -1), vec(py, 0), vec(py, -1), rhs)


@dataclass
class WaveState2D:
    W_prev: dict
    W_curr: dict
    k: int
    dt: float

    def ranks(self):
        return {i: w.rank for i, w in self.W_curr.items()}


def _eps_for(eps, index):
    e = eps[index] if isinstance(eps, dict) else eps
    if not e > 0:
        raise ValueError(f"truncation tolerance must be positive, got {e}")
    return float(e)


def _block_step(lap, state, forcing, t, eps, omega):
    idx = lap.index
    W, Wm = state.W_curr[idx], state.W_prev[idx]
    dt = state.dt
    terms = laplacian_terms(lap, W, state.W_curr, t)
    F = forcing.get(idx) if forcing else None
    if F is not None and F.rank:
        terms.append((F.U, np.diag(F.s * np.cos(omega * t)), F.V))
    What = lr.sum_factored(terms, eps, shape=W.shape)
    nxt = [(W.U, np.diag(2.0 * W.s), W.V), (Wm.U, np.diag(-Wm.s), Wm.V),
           (What.U, np.diag(dt * dt * What.s), What.V)]
    if lap.has_implicit:
        nxt += _implicit_history(lap, Wm, dt)
    Wn = lr.sum_factored(nxt, eps, shape=W.shape)
    if lap.has_implicit:
        Wn = corner_solve(_sylvester_spec(lap, dt, Wn), eps)
    return idx, Wn


def leapfrog_step(state, laplacians, forcing, t, eps, omega=0.0, executor=None):
    """Advance every block from ``t`` to ``t + dt``; neighbour reads use the frozen level-k state."""
    missing = [cp.neighbor for lap in laplacians.values() for cp in lap.couplings if cp.neighbor not in state.W_curr]
    if missing:
        raise KeyError(f"missing neighbour data for blocks {sorted(set(missing))}")
    jobs = [(lap, state, forcing, t, _eps_for(eps, idx), omega) for idx, lap in laplacians.items()]
    if executor is None:
        results = [_block_step(*j) for j in jobs]
    else:
        results = list(executor.map(lambda j: _block_step(*j), jobs))
    return WaveState2D(W_prev=state.W_curr, W_curr=dict(results), k=state.k + 1, dt=state.dt)


def backstep_initialize(W0, W0p, laplacians, dt, eps, forcing=None, omega=0.0, full_taylor=False):
    """Solution at ``-dt`` from ``W0 - dt W0' + dt^2/2 T(L W0)``.

    With ``full_taylor`` the forcing at t=0 and the implicit boundary damping
    are included in the second-derivative estimate.
    """
    out = {}
    for idx, lap in laplacians.items():
        e = _eps_for(eps, idx)
        terms = laplacian_terms(lap, W0[idx], W0, 0.0)
        if full_taylor:
            F = forcing.get(idx) if forcing else None
            if F is not None and F.rank:
                terms.append((F.U, np.diag(F.s), F.V))
            Vp = W0p[idx]
            if lap.has_implicit and Vp.rank:
                # -P W'  with P the implicit weights (history helper scales by dt/2)
                for L, C, R in _implicit_history(lap, Vp, 2.0):
                    terms.append((L, -C, R))
        LW = lr.sum_factored(terms, e, shape=W0[idx].shape)
        W, Wp = W0[idx], W0p[idx]
        out[idx] = lr.sum_factored([(W.U, np.diag(W.s), W.V), (Wp.U, np.diag(-dt * Wp.s), Wp.V),
                                    (LW.U, np.diag(0.5 * dt * dt * LW.s), LW.V)], e, shape=W.shape)
    return out


def wave_velocity(W_next, W_prev, dt, eps=0.0):
    """Centered difference ``(W^{k+1} - W^{k-1}) / (2 dt)``."""
    return lr.lr_combine([(0.5 / dt, W_next), (-0.5 / dt, W_prev)], eps, shape=W_next.shape)


def make_executor(threads):
    if threads is None or threads <= 1:
        return None
    return ThreadPoolExecutor(max_workers=int(threads))


class LowRankWaveSolver:
    """Time stepper used by the WaveHoltz iteration in 2D.

    The wave equation is driven by ``-f cos(w t)`` so that the filtered fixed
    point is the Helmholtz solution for the source ``f``.
    """

    def __init__(self, domain, omega, source=None, cfl=CFL, init_weight="literal", full_taylor=False,
                 threads=None, forcing_eps=1e-14):
        from .domain import gaussian_source_lowrank
        from .waveholtz import FilterKernel, LowRankAlgebra

        if domain.dim != 2:
            raise ValueError("LowRankWaveSolver is two-dimensional")
        self.domain = domain
        self.omega = float(omega)
        self.h = domain.h
        self.blocks = domain.block_indices
        self.laps = assemble_all(domain)
        period = 2.0 * np.pi / self.omega
        _, nt = stable_dt(domain.h, period, cfl)
        self.kernel = FilterKernel(self.omega, nt, init_weight)
        self.dt = self.kernel.dt
        self.algebra = LowRankAlgebra(domain.block_shape)
        self.full_taylor = full_taylor
        self.forcing = {}
        if source is not None:
            for idx in self.blocks:
                f = gaussian_source_lowrank(source, domain, idx)
                self.forcing[idx] = lr.truncate(f, forcing_eps * max(1.0, lr.norm(f))).scaled(-1.0)
        self.executor = make_executor(threads)

    def backstep(self, W0, Wp0, eps):
        return backstep_initialize(W0, Wp0, self.laps, self.dt, eps, self.forcing, self.omega, self.full_taylor)

    def step(self, W_prev, W_curr, t, eps):
        st = WaveState2D(W_prev=W_prev, W_curr=W_curr, k=0, dt=self.dt)
        return leapfrog_step(st, self.laps, self.forcing, t, eps, self.omega, self.executor).W_curr
