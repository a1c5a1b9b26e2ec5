"""Sylvester solves for the implicit nonreflecting boundary terms.

The implicit step of a block with nonreflecting faces reads
``A X - X B^T = R`` with ``A = I/2 + a a^T + b b^T`` and
``B = -I/2 - c c^T - d d^T`` where ``a ⊥ b`` and ``c ⊥ d``.  Both spectra have
three distinct values, so factored ADI with those values as shifts is exact
after three sweeps.  :func:`corner_solve` evaluates that three-sweep result in
closed form without any n x n work; :func:`fadi_solve` is the general sweep.

Sign convention: with the shifts ``alpha = eig(A)``, ``beta = eig(B)`` the
right factor obtained from ``(B - alpha_1 I)^{-T} V sqrt(S)`` carries a factor
-1 relative to the bracketed closed-form ``Y_1``.  The closed form therefore
uses weights ``alpha_i - beta_i`` with the bracketed ``Y_1``; both produce the
same X.
"""

from dataclasses import dataclass

import numpy as np

from .lowrank import LowRankMatrix, from_factors

__all__ = [
    "SylvesterSpec",
    "RankTwoShifted",
    "sherman_morrison_inverse_apply",
    "lemma_coefficients",
    "corner_solve",
    "fadi_solve",
    "spectral_shifts",
]

_ORTH_TOL = 1e-12


def sherman_morrison_inverse_apply(v_norm_sq, u, x):
    """Apply ``[(1 + v^T v) I + u u^T]^{-1}`` to ``x`` (vector or matrix)."""
    u = np.asarray(u, float)
    x = np.asarray(x, float)
    s = 1.0 + float(v_norm_sq)
    if s <= 0:
        raise ValueError("1 + v^T v must be positive")
    return (x - np.multiply.outer(u, u @ x) / (s + u @ u)) / s


class RankTwoShifted:
    """``sign * (I/2 + u1 u1^T + u2 u2^T)`` with ``u1 ⊥ u2``; shifted solves in closed form."""

    def __init__(self, u1, u2, sign=1.0):
        self.u1 = np.asarray(u1, float)
        self.u2 = np.asarray(u2, float)
        self.sign = float(sign)
        self.n = self.u1.size
        self.shape = (self.n, self.n)

    def apply(self, X):
        X = np.asarray(X, float)
        out = 0.5 * X + np.multiply.outer(self.u1, self.u1 @ X) + np.multiply.outer(self.u2, self.u2 @ X)
        return self.sign * out

    def shifted_solve(self, sigma, X, transpose=False):
        """``(M - sigma I)^{-1} X``; M is symmetric so ``transpose`` is a no-op."""
        k = 0.5 - self.sign * sigma
        if k == 0:
            raise ZeroDivisionError("singular shift")
        X = np.asarray(X, float)
        out = X.copy()
        for u in (self.u1, self.u2):
            uu = u @ u
            if uu > 0:
                out -= np.multiply.outer(u, u @ X) / (k + uu)
        return self.sign * out / k

    def dense(self):
        m = 0.5 * np.eye(self.n) + np.outer(self.u1, self.u1) + np.outer(self.u2, self.u2)
        return self.sign * m

    def eigenvalues(self):
        """The three distinct-by-construction eigenvalues in the fixed order."""
        return self.sign * np.array([0.5 + self.u1 @ self.u1, 0.5 + self.u2 @ self.u2, 0.5])


@dataclass(frozen=True)
class SylvesterSpec:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    rhs: LowRankMatrix

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        n, m = self.rhs.shape
        if self.a.shape != (n,) or self.b.shape != (n,) or self.c.shape != (m,) or self.d.shape != (m,):
            raise ValueError("perturbation vectors do not match the right-hand side shape")

    def check(self):
        for x, y, tag in ((self.a, self.b, "a^T b"), (self.c, self.d, "c^T d")):
            scale = max(1.0, np.linalg.norm(x) * np.linalg.norm(y))
            if abs(x @ y) > _ORTH_TOL * scale:
                raise ValueError(f"{tag} = {x @ y:.3e} violates the orthogonality precondition")

    @property
    def A(self):
        return RankTwoShifted(self.a, self.b, 1.0)

    @property
    def B(self):
        return RankTwoShifted(self.c, self.d, -1.0)


def spectral_shifts(spec):
    """Shifts ``alpha = eig(A)`` and ``beta = eig(B)`` in the fixed listing order."""
    return spec.A.eigenvalues(), spec.B.eigenvalues()


def lemma_coefficients(aa, bb, cc, dd):
    """The twelve scalar coefficients of the closed form, keyed by name."""
    return {
        "kz1": -aa / (1 + dd),
        "kz2": 1.0 / (1 + dd),
        "kz3": (1 + aa + dd) / ((1 + dd) * (1 + bb + dd)),
        "tkz1": aa * bb / (1 + dd),
        "tkz2": -bb / (1 + dd),
        "tkz3": -aa / (1 + dd),
        "ky1": -cc / (1 + bb),
        "ky2": 1.0 / (1 + bb),
        "ky3": (1 + bb + cc) / ((1 + bb) * (1 + bb + dd)),
        "tky1": cc * dd / (1 + bb),
        "tky2": -dd / (1 + bb),
        "tky3": -cc / (1 + bb),
    }


def _first_factor(Q, s_half, p, q, scale_self, cross):
    """Coefficients of ``Z_1`` (or ``Y_1``) in the basis ``Q = [U p q]``."""
    r = s_half.size
    U = Q[:, :r]
    pp, qq = p @ p, q @ q
    C = np.zeros((r + 2, r))
    C[:r] = np.diag(s_half) / scale_self
    C[r] = -(p @ U) * s_half / (scale_self * (scale_self + pp))
    C[r + 1] = -(q @ U) * s_half / (scale_self * (scale_self + qq))
    return C


def _poly(Q, C, p, q, k1, k2, k3):
    """Coefficients of ``(k1 I + k2 p p^T + k3 q q^T) Q C`` in the basis Q."""
    r2 = C.shape[0]
    out = k1 * C
    gp = p @ Q @ C
    gq = q @ Q @ C
    out = out.copy()
    out[r2 - 2] += k2 * gp
    out[r2 - 1] += k3 * gq
    return out


def corner_solve(spec, eps=0.0):
    """Exact solution of ``A X - X B^T = R`` from the closed-form three-term sum.

    Only ``n x (r + 2)`` factors and ``(r + 2)``-sized cores are formed.
    """
    spec.check()
    R = spec.rhs
    n, m = R.shape
    if R.rank == 0:
        return LowRankMatrix.zeros(n, m)
    a, b, c, d = spec.a, spec.b, spec.c, spec.d
    aa, bb, cc, dd = a @ a, b @ b, c @ c, d @ d
    k = lemma_coefficients(aa, bb, cc, dd)
    sh = np.sqrt(R.s)
    Qz = np.column_stack([R.U, a, b])
    Qy = np.column_stack([R.V, c, d])
    Cz1 = _first_factor(Qz, sh, a, b, 1 + cc, None)
    Cy1 = _first_factor(Qy, sh, c, d, 1 + aa, None)
    Cz2 = _poly(Qz, Cz1, a, b, k["kz1"], k["kz2"], k["kz3"])
    Cz3 = _poly(Qz, Cz1, a, b, k["tkz1"], k["tkz2"], k["tkz3"])
    Cy2 = _poly(Qy, Cy1, c, d, k["ky1"], k["ky2"], k["ky3"])
    Cy3 = _poly(Qy, Cy1, c, d, k["tky1"], k["tky2"], k["tky3"])
    # alpha_i - beta_i
    w = (1 + aa + cc, 1 + bb + dd, 1.0)
    core = w[0] * Cz1 @ Cy1.T + w[1] * Cz2 @ Cy2.T + w[2] * Cz3 @ Cy3.T
    return from_factors(Qz, core, Qy, eps)


def _shifted(M, sigma, X):
    if hasattr(M, "shifted_solve"):
        return M.shifted_solve(sigma, X)
    M = np.asarray(M, float)
    return np.linalg.solve(M - sigma * np.eye(M.shape[0]), X)


def _shifted_T(M, sigma, X):
    if hasattr(M, "shifted_solve"):
        return M.shifted_solve(sigma, X, transpose=True)
    M = np.asarray(M, float)
    return np.linalg.solve((M - sigma * np.eye(M.shape[0])).T, X)


def fadi_solve(A, B, G, F, alpha, beta, m=None, eps=0.0):
    """Factored ADI for ``A X - X B^T = G F^T``.

    ``A`` and ``B`` are arrays or objects with ``shifted_solve``.  Returns the
    iterate after ``m`` sweeps (default: all given shifts) as a truncated SVD.
    """
    G = np.atleast_2d(np.asarray(G, float))
    F = np.atleast_2d(np.asarray(F, float))
    if G.shape[1] != F.shape[1]:
        raise ValueError("G and F must have the same number of columns")
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    m = len(alpha) if m is None else int(m)
    if m < 1 or m > len(alpha) or m > len(beta):
        raise ValueError("need at least one and at most len(shifts) sweeps")
    n_rows, n_cols = G.shape[0], F.shape[0]
    if not np.any(G) or not np.any(F):
        return LowRankMatrix.zeros(n_rows, n_cols)
    Z = _shifted(A, beta[0], G)
    Y = _shifted_T(B, alpha[0], F)
    Zs, Ys = [Z], [Y]
    for i in range(1, m):
        Z = Z + (beta[i] - alpha[i - 1]) * _shifted(A, beta[i], Z)
        Y = Y + (alpha[i] - beta[i - 1]) * _shifted_T(B, alpha[i], Y)
        Zs.append(Z)
        Ys.append(Y)
    r = G.shape[1]
    D = np.concatenate([np.full(r, beta[i] - alpha[i]) for i in range(m)])
    return from_factors(np.hstack(Zs), np.diag(D), np.hstack(Ys), eps)
