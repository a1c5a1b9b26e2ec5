"""Truncated-SVD grid functions and their factor-only arithmetic.

A :class:`LowRankMatrix` stores ``U diag(s) V^T`` with orthonormal ``U`` and
``V`` and strictly positive, nonincreasing ``s``.  Rank zero is a valid value
(empty factors).  None of the routines here form an ``n_rows x n_cols`` array
except :meth:`LowRankMatrix.to_dense` and :func:`from_dense`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
import scipy.sparse as sp

__all__ = [
    "LowRankMatrix",
    "truncation_rank",
    "truncate",
    "lr_sum",
    "lr_combine",
    "sum_factored",
    "apply_left",
    "apply_right",
    "inner",
    "norm",
    "from_dense",
    "from_factors",
    "outer",
]


@dataclass(frozen=True)
class LowRankMatrix:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2 or self.s.ndim != 1:
            raise ValueError("U, V must be 2D and s 1D")
        r = self.s.size
        if self.U.shape[1] != r or self.V.shape[1] != r:
            raise ValueError(f"factor widths {self.U.shape[1]}, {self.V.shape[1]} do not match rank {r}")

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self):
        return int(self.s.size)

    @classmethod
    def zeros(cls, n_rows, n_cols):
        return cls(np.zeros((n_rows, 0)), np.zeros(0), np.zeros((n_cols, 0)))

    def to_dense(self):
        return (self.U * self.s) @ self.V.T

    def scaled(self, c):
        """Return ``c * self`` keeping the factor invariants."""
        if c == 0 or self.rank == 0:
            return LowRankMatrix.zeros(*self.shape)
        if c > 0:
            return LowRankMatrix(self.U, self.s * c, self.V)
        return LowRankMatrix(-self.U, self.s * (-c), self.V)

    def __neg__(self):
        return self.scaled(-1.0)

    @property
    def T(self):
        return LowRankMatrix(self.V, self.s, self.U)

    def storage(self):
        return self.U.size + self.s.size + self.V.size


def truncation_rank(s, eps):
    """Smallest r with sqrt(sum_{i>=r} s_i^2) < eps; drops exact zeros when eps == 0."""
    s = np.asarray(s)
    if s.size == 0:
        return 0
    if eps <= 0:
        return int(np.count_nonzero(s > 0))
    # tail[r] = sqrt(sum_{i>=r} s_i^2), tail[len] = 0
    tail = np.sqrt(np.concatenate([np.cumsum((s * s)[::-1])[::-1], [0.0]]))
    return int(np.argmax(tail < eps))


def truncate(A, eps):
    """Discard the largest trailing singular values whose root-sum-square is below ``eps``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    r = truncation_rank(A.s, eps)
    return LowRankMatrix(A.U[:, :r], A.s[:r], A.V[:, :r])


def _inverse_perm(p):
    inv = np.empty_like(p)
    inv[p] = np.arange(p.size)
    return inv


def _pivoted_qr(A):
    """Economic column-pivoted QR straight from LAPACK (``A[:, p] = Q R``)."""
    qr, jpvt, tau, _, info = lapack.dgeqp3(A)
    if info != 0:  # pragma: no cover
        raise np.linalg.LinAlgError(f"dgeqp3 failed with info={info}")
    k = min(A.shape)
    r = np.triu(qr[:k])
    q, _, info = lapack.dorgqr(qr[:, :k], tau[:k])
    if info != 0:  # pragma: no cover
        raise np.linalg.LinAlgError(f"dorgqr failed with info={info}")
    return q, r, jpvt - 1


def _small_svd(M):
    u, s, vt, info = lapack.dgesdd(M, full_matrices=0)
    if info != 0:  # pragma: no cover - fall back to the slower driver
        u, s, vt = sla.svd(M, full_matrices=False, lapack_driver="gesvd")
    return u, s, vt


def _svd_core(left, core, right, eps):
    """Truncated SVD of ``left @ core @ right.T`` with tall factors, via pivoted QR."""
    n_rows, n_cols = left.shape[0], right.shape[0]
    if left.shape[1] == 0 or right.shape[1] == 0:
        return LowRankMatrix.zeros(n_rows, n_cols)
    q1, r1, p1 = _pivoted_qr(left)
    q2, r2, p2 = _pivoted_qr(right)
    # left = q1 r1 P1^T  ->  r1 P1^T = r1[:, inv(p1)]
    small = r1[:, _inverse_perm(p1)] @ core @ r2[:, _inverse_perm(p2)].T
    u, s, vt = _small_svd(small)
    r = truncation_rank(s, eps)
    return LowRankMatrix(q1 @ u[:, :r], s[:r].copy(), q2 @ vt[:r].T)


def sum_factored(terms, eps, shape=None):
    """Truncated sum of ``sum_j L_j C_j R_j^T`` given as (L, C, R) triples.

    This is the summation algorithm with the diagonal middle factor generalized
    to a block-diagonal one; factors need not be orthonormal.
    """
    terms = [t for t in terms if t[0].shape[1] > 0 and t[2].shape[1] > 0]
    if not terms:
        if shape is None:
            raise ValueError("shape required for an empty sum")
        return LowRankMatrix.zeros(*shape)
    n_rows = terms[0][0].shape[0]
    n_cols = terms[0][2].shape[0]
    for L, C, R in terms:
        if L.shape[0] != n_rows or R.shape[0] != n_cols:
            raise ValueError("dimension mismatch in low-rank sum")
    left = np.hstack([t[0] for t in terms])
    right = np.hstack([t[2] for t in terms])
    core = sla.block_diag(*[np.atleast_2d(t[1]) for t in terms])
    return _svd_core(left, core, right, eps)


def lr_sum(terms, eps):
    """Truncated sum of low-rank matrices (concatenate, pivoted QR, small SVD)."""
    terms = list(terms)
    if not terms:
        raise ValueError("lr_sum needs at least one term")
    shape = terms[0].shape
    for t in terms:
        if t.shape != shape:
            raise ValueError(f"dimension mismatch: {t.shape} vs {shape}")
    live = [t for t in terms if t.rank > 0]
    if not live:
        return LowRankMatrix.zeros(*shape)
    U = np.hstack([t.U for t in live])
    V = np.hstack([t.V for t in live])
    S = np.diag(np.concatenate([t.s for t in live]))
    return _svd_core(U, S, V, eps)


def lr_combine(pairs, eps, shape=None):
    """Truncated linear combination ``sum c_j X_j`` of low-rank matrices."""
    pairs = list(pairs)
    if shape is None:
        if not pairs:
            raise ValueError("shape required for an empty combination")
        shape = pairs[0][1].shape
    terms = [(X.U, c * X.s, X.V) for c, X in pairs if c != 0 and X.rank > 0]
    for _, X in pairs:
        if X.shape != shape:
            raise ValueError(f"dimension mismatch: {X.shape} vs {shape}")
    if not terms:
        return LowRankMatrix.zeros(*shape)
    left = np.hstack([t[0] for t in terms])
    right = np.hstack([t[2] for t in terms])
    core = np.diag(np.concatenate([t[1] for t in terms]))
    return _svd_core(left, core, right, eps)


def _apply(M, X):
    if hasattr(M, "apply"):
        return M.apply(X)
    if sp.issparse(M):
        return M @ X
    return np.asarray(M) @ X


def _refactor(left, s, right):
    """Re-orthonormalize ``left diag(s) right^T`` where ``right`` is orthonormal."""
    if s.size == 0:
        return LowRankMatrix.zeros(left.shape[0], right.shape[0])
    q, r = np.linalg.qr(left * s)
    u, sv, vt = np.linalg.svd(r)
    keep = sv > 0
    return LowRankMatrix(q @ u[:, keep], sv[keep], right @ vt[keep].T)


def _check_operator(M, n):
    m = getattr(M, "shape", None)
    if m is None:
        m = (M.n, M.n)
    if m[1] != n:
        raise ValueError(f"operator with {m[1]} columns cannot act on {n} rows")


def apply_left(M, A):
    """``M @ A`` kept in factored form; ``M`` may be an array, a sparse matrix or an operator with ``apply``."""
    _check_operator(M, A.shape[0])
    if A.rank == 0:
        n = getattr(M, "shape", (getattr(M, "n", A.shape[0]),))[0]
        return LowRankMatrix.zeros(n, A.shape[1])
    return _refactor(_apply(M, A.U), A.s, A.V)


def apply_right(M, A):
    """``A @ M.T``; with M acting along the second grid axis."""
    return apply_left(M, A.T).T


def inner(A, B):
    """Frobenius inner product from the factors only."""
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    if A.rank == 0 or B.rank == 0:
        return 0.0
    gu = A.U.T @ B.U
    gv = B.V.T @ A.V
    return float(np.einsum("i,ij,j,ji->", A.s, gu, B.s, gv))


def norm(A):
    return float(np.sqrt(np.sum(A.s**2)))


def from_dense(M, eps=0.0):
    u, s, vt = np.linalg.svd(np.asarray(M, float), full_matrices=False)
    r = truncation_rank(s, eps)
    return LowRankMatrix(u[:, :r], s[:r], vt[:r].T)


def from_factors(left, core, right, eps=0.0):
    """SVD form of ``left @ core @ right.T`` for arbitrary tall factors."""
    return _svd_core(np.asarray(left, float), np.asarray(core, float), np.asarray(right, float), eps)


def outer(u, v):
    """Rank-one matrix ``u v^T`` (rank zero if either vector vanishes)."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return LowRankMatrix.zeros(u.size, v.size)
    return LowRankMatrix((u / nu)[:, None], np.array([nu * nv]), (v / nv)[:, None])
