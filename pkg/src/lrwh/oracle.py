"""Dense full-rank reference implementations.

Everything here works on plain arrays and is meant for tests and small
instances only.  The dense wave solvers use the same SAT terms as the
compressed ones but apply the operators as dense matrices and resolve the
implicit boundary terms by elementwise division, so they share no code path
with the factored arithmetic beyond the operator assembly.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .domain import gaussian_factors
from .lowrank import truncation_rank
from .wave2d import CFL, assemble_all, stable_dt

__all__ = [
    "SizeGuardError",
    "DENSE_SOLVE_LIMIT",
    "dense_truncate",
    "dense_sylvester",
    "dense_aa_weights",
    "dense_apply_laplacian",
    "dense_wave_step",
    "dense_backstep",
    "dense_wave_solve",
    "DenseAlgebra",
    "DenseWaveSolver",
    "dense_waveholtz",
    "global_operator",
    "dense_helmholtz_direct",
    "dense_source",
]

DENSE_SOLVE_LIMIT = 10**4


class SizeGuardError(ValueError):
    pass


def _guard(n, limit=DENSE_SOLVE_LIMIT, what="unknowns"):
    if n > limit:
        raise SizeGuardError(f"{n} {what} exceeds the dense oracle limit {limit}")


def dense_truncate(M, eps):
    """SVD truncation with the same tail rule as the factored code; returns (matrix, s)."""
    u, s, vt = np.linalg.svd(np.asarray(M, float), full_matrices=False)
    r = truncation_rank(s, eps)
    return (u[:, :r] * s[:r]) @ vt[:r], s[:r]


def dense_sylvester(A, B, R):
    """Solve ``A X - X B^T = R`` through the Kronecker system."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n, m = R.shape
    _guard(n * m)
    K = np.kron(A, np.eye(m)) - np.kron(np.eye(n), B)
    return np.linalg.solve(K, np.asarray(R, float).ravel()).reshape(n, m)


def dense_aa_weights(dF, F):
    """Least-squares ``argmin ||sum_j dF_j g_j - F||`` on stacked vectors.

    ``dF`` is a list over history entries, each a list of block arrays; ``F``
    a list of block arrays.
    """
    cols = [np.concatenate([np.ravel(b) for b in blocks]) for blocks in dF]
    rhs = np.concatenate([np.ravel(b) for b in F])
    g, *_ = np.linalg.lstsq(np.column_stack(cols), rhs, rcond=None)
    return g


def _along(M, X, axis):
    return np.moveaxis(np.tensordot(M, X, axes=(1, axis)), 0, axis)


def dense_apply_laplacian(lap, W, neighbors, t=0.0):
    """Dense ``L(W)`` with neighbour couplings and Dirichlet data at time ``t``."""
    out = np.zeros_like(W)
    for a, P in enumerate(lap.axes):
        out += _along(P.dense(), W, a)
    for cp in lap.couplings:
        out += _along(cp.left, _along(cp.sel.T, neighbors[cp.neighbor], cp.axis), cp.axis)
    for df in lap.dirichlet:
        g = df.values(t, lap.face_grids[(df.axis, df.side)])
        if g is not None:
            out += np.moveaxis(np.multiply.outer(df.left, g), 0, df.axis)
    return out


def _damping_grid(lap, extra=None):
    shape = (lap.n,) * lap.dim
    p = np.zeros(shape)
    for a, v in enumerate(lap.implicit):
        idx = [None] * lap.dim
        idx[a] = slice(None)
        p = p + v[tuple(idx)]
    if extra is not None:
        p = p + extra
    return p


def dense_wave_step(laps, W_prev, W_curr, dt, t, forcing=None, omega=0.0, damping=None, damping_mode="centered"):
    """One leapfrog step on dense blocks.

    ``damping`` optionally maps blocks to an interior damping grid; with
    ``damping_mode="backward"`` it enters explicitly as ``-kappa (W - W_prev)/dt``
    (the 3D discretization), otherwise it is treated like the boundary terms.
    """
    out = {}
    for idx, lap in laps.items():
        W, Wm = W_curr[idx], W_prev[idx]
        rhs = dense_apply_laplacian(lap, W, W_curr, t)
        if forcing is not None and idx in forcing:
            rhs = rhs + forcing[idx] * np.cos(omega * t)
        kap = None if damping is None else damping.get(idx)
        if kap is not None and damping_mode == "backward":
            rhs = rhs - kap * (W - Wm) / dt
            kap = None
        p = 0.5 * dt * _damping_grid(lap, kap)
        out[idx] = _kernels.leapfrog_update(W, Wm, rhs, dt * dt, p, 1.0 + p)
    return out


def dense_backstep(laps, W0, Wp0, dt, forcing=None, full_taylor=False):
    out = {}
    for idx, lap in laps.items():
        acc = dense_apply_laplacian(lap, W0[idx], W0, 0.0)
        if full_taylor:
            if forcing is not None and idx in forcing:
                acc = acc + forcing[idx]
            acc = acc - _damping_grid(lap) * Wp0[idx]
        out[idx] = W0[idx] - dt * Wp0[idx] + 0.5 * dt * dt * acc
    return out


def dense_wave_solve(laps, W_prev, W_curr, dt, steps, t0=0.0, forcing=None, omega=0.0, damping=None,
                     damping_mode="centered"):
    """Run ``steps`` leapfrog steps; returns the final (previous, current) pair."""
    for idx in W_curr:
        _guard(W_curr[idx].size, 10**6, "grid points per block")
    for k in range(steps):
        nxt = dense_wave_step(laps, W_prev, W_curr, dt, t0 + k * dt, forcing, omega, damping, damping_mode)
        W_prev, W_curr = W_curr, nxt
    return W_prev, W_curr


class DenseAlgebra:
    """Plain arrays with exact arithmetic; tolerances are ignored."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.dim = len(shape)

    def zeros(self):
        return np.zeros(self.shape)

    def combine(self, pairs, eps):
        out = np.zeros(self.shape)
        for c, X in pairs:
            if c != 0:
                out = out + c * X
        return out

    def norm(self, X):
        return float(np.linalg.norm(X))

    def inner(self, X, Y):
        return float(np.sum(X * Y))

    def diff_norm(self, X, Y):
        return float(np.linalg.norm(X - Y))

    def rank(self, X):
        return int(np.linalg.matrix_rank(X)) if X.ndim == 2 else -1

    def to_dense(self, X):
        return X


def dense_source(source, domain, idx):
    vecs, scale = gaussian_factors(source, domain.grids(idx))
    f = scale * vecs[0]
    for v in vecs[1:]:
        f = np.multiply.outer(f, v)
    return f


class DenseWaveSolver:
    """Dense counterpart of the compressed solvers for the WaveHoltz driver."""

    def __init__(self, domain, omega, source=None, cfl=CFL, init_weight="literal", full_taylor=False,
                 damping=None):
        from .waveholtz import FilterKernel

        _guard(domain.n ** domain.dim, 10**6, "grid points per block")
        self.domain = domain
        self.omega = float(omega)
        self.h = domain.h
        self.blocks = domain.block_indices
        self.laps = assemble_all(domain)
        _, nt = stable_dt(domain.h, 2 * np.pi / self.omega, cfl)
        self.kernel = FilterKernel(self.omega, nt, init_weight)
        self.dt = self.kernel.dt
        self.algebra = DenseAlgebra(domain.block_shape)
        self.full_taylor = full_taylor
        self.damping = damping
        self.forcing = {}
        if source is not None:
            self.forcing = {i: -dense_source(source, domain, i) for i in self.blocks}

    def backstep(self, W0, Wp0, eps):
        return dense_backstep(self.laps, W0, Wp0, self.dt, self.forcing, self.full_taylor)

    def step(self, W_prev, W_curr, t, eps):
        mode = "backward" if self.damping is not None else "centered"
        return dense_wave_step(self.laps, W_prev, W_curr, self.dt, t, self.forcing, self.omega,
                               self.damping, mode)


def dense_waveholtz(solver, tol=1e-12, max_iters=500, theta=1.0, K=1e-5, W0=None):
    """Plain dense WaveHoltz fixed-point iteration until the update is below ``tol``."""
    from .waveholtz import initial_state, run_to_convergence

    state = initial_state(solver, theta, K, W0=W0)
    return run_to_convergence(solver, tol, max_iters, theta, K, state=state)


def _place(M, axis, dim, n):
    """Sparse ``M`` acting along ``axis`` of a C-ordered ``n^dim`` block vector."""
    mats = [sp.identity(n, format="csr")] * dim
    mats[axis] = sp.csr_matrix(M)
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def global_operator(laps, blocks, n, dim, damping=None):
    """Global sparse ``L`` and diagonal implicit weights over all blocks (C-ordered)."""
    nb = n**dim
    pos = {idx: k for k, idx in enumerate(blocks)}
    N = nb * len(blocks)
    rows = [[None] * len(blocks) for _ in blocks]
    p = np.zeros(N)
    for idx in blocks:
        lap = laps[idx]
        i = pos[idx]
        own = None
        for a, P in enumerate(lap.axes):
            term = _place(P.dense(), a, dim, n)
            own = term if own is None else own + term
        rows[i][i] = own
        for cp in lap.couplings:
            j = pos[cp.neighbor]
            term = _place(cp.left @ cp.sel.T, cp.axis, dim, n)
            rows[i][j] = term if rows[i][j] is None else rows[i][j] + term
        kap = None if damping is None else damping.get(idx)
        p[i * nb:(i + 1) * nb] = _damping_grid(lap, kap).ravel()
    return sp.bmat(rows, format="csc"), p


def dense_helmholtz_direct(domain, omega, source, damping=None, limit=None):
    """Solve ``(L + w^2 I + i w P) u = f`` directly.

    This is the time-harmonic limit of the wave problem driven by
    ``-f cos(w t)`` with ``w = Re(u exp(-i w t))``.  Returns a dict of complex
    block arrays.
    """
    laps = assemble_all(domain)
    blocks = domain.block_indices
    N = domain.n**domain.dim * len(blocks)
    if limit is not None:
        _guard(N, limit)
    L, p = global_operator(laps, blocks, domain.n, domain.dim, damping)
    A = (L + omega**2 * sp.identity(N) + 1j * omega * sp.diags(p)).tocsc()
    f = np.concatenate([dense_source(source, domain, i).ravel() for i in blocks])
    try:
        u = spla.spsolve(A, f.astype(complex))
    except RuntimeError as exc:  # pragma: no cover - singular factorization
        raise np.linalg.LinAlgError(str(exc)) from exc
    if not np.all(np.isfinite(u)):
        raise np.linalg.LinAlgError("singular Helmholtz system")
    nb = domain.n**domain.dim
    return {idx: u[k * nb:(k + 1) * nb].reshape(domain.block_shape) for k, idx in enumerate(blocks)}


def dense_sylvester_from_spec(spec):
    return dense_sylvester(spec.A.dense(), spec.B.dense(), spec.rhs.to_dense())


def dense_solve_shifted(M, sigma, X):
    return sla.solve(M - sigma * np.eye(M.shape[0]), X)
