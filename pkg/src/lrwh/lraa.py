"""Anderson acceleration of the compressed WaveHoltz iteration.

The fixed-point map is ``G(X) = (acc, accp)``, the filtered pressure and
velocity.  With residuals ``F_i = G(X_i) - X_i`` and differences
``dF_i = F_{i+1} - F_i`` the weights solve

    min_gamma  sum_l || F_k,l - sum_j gamma_j dF_{k-m_k+j},l ||^2

over all blocks ``l`` through the normal equations, assembled from
factor-only inner products.  The velocity part is scaled by ``1/omega`` so
both components carry the units of the Helmholtz solution.  The accelerated
iterate is ``G_k - sum_j gamma_j (G_{k-m_k+j+1} - G_{k-m_k+j})`` regrouped so
every history entry appears once.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from .waveholtz import IterationRecord, WaveHoltzState, _schedule, filtered_map, initial_state

__all__ = [
    "AccelerationWindow",
    "compute_weights",
    "aa_update",
    "accelerated_solve",
    "update_coefficients",
]

COND_LIMIT = 1e12


@dataclass
class AccelerationWindow:
    """Shared history of ``G(X_i)`` and ``dF_i`` for every block.

    ``G`` holds up to ``m + 1`` entries oldest first; ``dF`` holds up to
    ``m``.  Each entry maps a block index to a ``(pressure, velocity)`` pair.
    """

    m: int
    algebra: object
    velocity_weight: float = 1.0
    G: list = field(default_factory=list)
    dF: list = field(default_factory=list)
    last_F: dict = None
    fallbacks: int = 0

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"memory parameter must be nonnegative, got {self.m}")

    @property
    def depth(self):
        return len(self.dF)

    def push(self, G, F, eps):
        """Append ``G(X_k)`` and ``F_k``; ``eps`` maps blocks to truncation tolerances."""
        alg = self.algebra
        if self.last_F is not None and self.m > 0:
            d = {}
            for i, (fw, fp) in F.items():
                pw, pp = self.last_F[i]
                d[i] = (alg.combine([(1.0, fw), (-1.0, pw)], eps[i]), alg.combine([(1.0, fp), (-1.0, pp)], eps[i]))
            self.dF.append(d)
        self.G.append(G)
        self.last_F = F
        del self.G[:-(self.m + 1)]
        if self.m == 0:
            self.dF.clear()
        else:
            del self.dF[:-self.m]

    def blocks(self):
        return sorted(self.last_F) if self.last_F is not None else []

    def _inner(self, X, Y):
        alg = self.algebra
        w2 = self.velocity_weight**2
        return sum(alg.inner(X[i][0], Y[i][0]) + w2 * alg.inner(X[i][1], Y[i][1]) for i in X)

    def normal_equations(self):
        mk = self.depth
        A = np.empty((mk, mk))
        b = np.empty(mk)
        for i in range(mk):
            for j in range(i, mk):
                A[i, j] = A[j, i] = self._inner(self.dF[i], self.dF[j])
            b[i] = self._inner(self.last_F, self.dF[i])
        return A, b


def compute_weights(window, cond_limit=COND_LIMIT):
    """Return ``(gamma, fell_back)``; an unusable Gram matrix gives the Picard step."""
    mk = window.depth
    if mk == 0:
        return np.zeros(0), False
    A, b = window.normal_equations()
    if not np.any(b):
        return np.zeros(mk), False
    bad = not np.all(np.isfinite(A)) or np.linalg.cond(A) > cond_limit
    if not bad:
        try:
            gamma = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            bad = True
    if bad or not np.all(np.isfinite(gamma)):
        window.fallbacks += 1
        return np.zeros(mk), True
    return gamma, False


def update_coefficients(gamma):
    """Weights on ``G_{k-m_k} .. G_k`` (oldest first) for the accelerated iterate."""
    gamma = np.asarray(gamma, float)
    mk = gamma.size
    if mk == 0:
        return np.ones(1)
    c = np.empty(mk + 1)
    c[0] = gamma[0]
    c[1:mk] = gamma[1:] - gamma[:-1]
    c[mk] = 1.0 - gamma[-1]
    return c


def aa_update(window, gamma, eps):
    """Accelerated iterate per block as a truncated combination of the stored ``G``."""
    alg = window.algebra
    coef = update_coefficients(gamma)
    hist = window.G[-coef.size:]
    if len(hist) != coef.size:
        raise ValueError(f"window holds {len(hist)} iterates, weights need {coef.size}")
    if coef.size == 1:
        return dict(hist[0])
    out = {}
    for i in hist[-1]:
        out[i] = (alg.combine([(c, g[i][0]) for c, g in zip(coef, hist)], eps[i]),
                  alg.combine([(c, g[i][1]) for c, g in zip(coef, hist)], eps[i]))
    return out


def accelerated_solve(solver, m, eps_star, max_iters, theta=1.0, K=1e-5, state=None, callback=None,
                      cond_limit=COND_LIMIT, stop_on="min"):
    """LRAA(m): returns ``(state, converged, window)``.

    With ``rho_G = ||G(X_k) - X_k||`` and ``rho_X = ||X_{k+1} - X_k||``
    (pressure, all blocks) the iteration stops once ``min(rho_G, rho_X)``
    reaches ``eps_star``; ``stop_on="rho_G"`` uses the smoother ``rho_G``
    alone.  The schedule always uses the per-block minimum.  With ``m = 0``
    the two residuals coincide and this is the plain iteration.
    """
    if m < 0:
        raise ValueError("memory parameter must be nonnegative")
    if stop_on not in ("min", "rho_G"):
        raise ValueError(f"stop_on must be 'min' or 'rho_G', got {stop_on!r}")
    if not eps_star > 0:
        raise ValueError("eps_star must be positive")
    alg = solver.algebra
    state = state if state is not None else initial_state(solver, theta, K)
    window = AccelerationWindow(m, alg, velocity_weight=1.0 / solver.kernel.omega)
    converged = False
    while state.k < max_iters:
        t0 = time.perf_counter()
        acc, accp = filtered_map(solver, state.W, state.Wp, state.eps, state.eps_wave)
        G = {i: (acc[i], accp[i]) for i in solver.blocks}
        if m > 0:
            F = {i: (alg.combine([(1.0, acc[i]), (-1.0, state.W[i])], state.eps[i]),
                     alg.combine([(1.0, accp[i]), (-1.0, state.Wp[i])], state.eps[i])) for i in solver.blocks}
        else:
            F = {i: (None, None) for i in solver.blocks}
        window.push(G, F, state.eps)
        gamma, fell_back = compute_weights(window, cond_limit)
        X = aa_update(window, gamma, state.eps)
        rho_G_blocks = {i: alg.diff_norm(acc[i], state.W[i]) for i in solver.blocks}
        if m > 0:
            rho_X_blocks = {i: alg.diff_norm(X[i][0], state.W[i]) for i in solver.blocks}
        else:
            rho_X_blocks = dict(rho_G_blocks)
        rho_G = math.sqrt(sum(r * r for r in rho_G_blocks.values()))
        rho_X = math.sqrt(sum(r * r for r in rho_X_blocks.values()))
        sched = {i: min(rho_G_blocks[i], rho_X_blocks[i]) for i in solver.blocks}
        W = {i: X[i][0] for i in solver.blocks}
        Wp = {i: X[i][1] for i in solver.blocks}
        eps = _schedule(solver, sched, {i: alg.norm(W[i]) for i in solver.blocks}, theta, K)
        new = WaveHoltzState(W=W, Wp=Wp, eps=eps, eps_wave={i: e / (2 * state.nt) for i, e in eps.items()},
                             rho=rho_G, rho_blocks=rho_G_blocks, k=state.k + 1, nt=state.nt,
                             period=state.period, history=state.history)
        new.history.append(IterationRecord(iteration=new.k, rho=rho_G, rho_blocks=rho_G_blocks, eps=dict(state.eps),
                                           ranks=new.ranks(alg), seconds=time.perf_counter() - t0,
                                           rho_G=rho_G, rho_X=rho_X, picard_fallback=fell_back))
        state = new
        if callback is not None:
            callback(state)
        if not np.isfinite(rho_G):
            break
        if (min(rho_G, rho_X) if stop_on == "min" else rho_G) <= eps_star:
            converged = True
            break
    return state, converged, window
