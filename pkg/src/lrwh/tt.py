"""Three-core tensor trains.

A :class:`TensorTrain` holds cores ``G_k`` of shape ``(r_{k-1}, n_k, r_k)``
with ``r_0 = r_3 = 1``.  Internal ranks may be zero, which represents the
zero tensor without storage.  Rounding follows the usual two sweeps: a
right-to-left QR pass, then a left-to-right truncated SVD pass.
"""

from dataclasses import dataclass

import numpy as np

from .lowrank import truncation_rank

__all__ = [
    "TensorTrain",
    "tt_round",
    "tt_truncate_abs",
    "tt_add",
    "tt_scale",
    "tt_sum",
    "tt_apply_mode",
    "tt_mode_sum",
    "tt_hadamard_rank1",
    "tt_inner",
    "tt_norm",
    "tt_from_dense",
    "tt_to_dense",
    "tt_rank1",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 10**6


@dataclass(frozen=True)
class TensorTrain:
    cores: tuple

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=float) for c in self.cores)
        if len(cores) != 3:
            raise ValueError(f"expected 3 cores, got {len(cores)}")
        if any(c.ndim != 3 for c in cores):
            raise ValueError("cores must be 3-way arrays")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores[:-1], cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"rank mismatch between cores: {a.shape} / {b.shape}")
        object.__setattr__(self, "cores", cores)

    @property
    def shape(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self):
        return max(self.ranks)

    def storage(self):
        return sum(c.size for c in self.cores)

    @classmethod
    def zeros(cls, shape):
        n1, n2, n3 = shape
        return cls((np.zeros((1, n1, 0)), np.zeros((0, n2, 0)), np.zeros((0, n3, 1))))

    def is_zero(self):
        return min(self.ranks) == 0


def tt_rank1(v1, v2, v3):
    """The rank-(1,1,1,1) tensor ``v1 (x) v2 (x) v3``."""
    return TensorTrain((np.asarray(v1, float)[None, :, None],
                        np.asarray(v2, float)[None, :, None],
                        np.asarray(v3, float)[None, :, None]))


def _check_same(A, B):
    if A.shape != B.shape:
        raise ValueError(f"mode sizes differ: {A.shape} vs {B.shape}")


def tt_scale(A, c):
    if c == 0:
        return TensorTrain.zeros(A.shape)
    g = list(A.cores)
    g[0] = g[0] * c
    return TensorTrain(tuple(g))


def tt_add(A, B):
    """Exact sum by block-diagonal core concatenation (ranks add)."""
    _check_same(A, B)
    return tt_sum([A, B])


def tt_sum(terms):
    """Exact sum of several trains; zero-rank terms are skipped."""
    terms = list(terms)
    if not terms:
        raise ValueError("tt_sum needs at least one term")
    shape = terms[0].shape
    for t in terms:
        _check_same(terms[0], t)
    live = [t for t in terms if not t.is_zero()]
    if not live:
        return TensorTrain.zeros(shape)
    if len(live) == 1:
        return live[0]
    first = np.concatenate([t.cores[0] for t in live], axis=2)
    last = np.concatenate([t.cores[2] for t in live], axis=0)
    r0 = sum(t.cores[1].shape[0] for t in live)
    r1 = sum(t.cores[1].shape[2] for t in live)
    mid = np.zeros((r0, shape[1], r1))
    i = j = 0
    for t in live:
        a, _, b = t.cores[1].shape
        mid[i:i + a, :, j:j + b] = t.cores[1]
        i += a
        j += b
    return TensorTrain((first, mid, last))


def _apply_mat(M, X):
    """``M @ X`` along axis 0 of a 2D array; M may expose ``apply``."""
    if hasattr(M, "apply"):
        return M.apply(X)
    return np.asarray(M) @ X


def _mode_apply_core(M, core):
    r0, n, r1 = core.shape
    flat = np.ascontiguousarray(core.transpose(1, 0, 2)).reshape(n, r0 * r1)
    out = _apply_mat(M, flat)
    return out.reshape(-1, r0, r1).transpose(1, 0, 2)


def tt_apply_mode(M, A, mode):
    """Apply ``M`` along ``mode`` (0, 1 or 2); only that core changes."""
    if mode not in (0, 1, 2):
        raise ValueError(f"mode must be 0, 1 or 2, got {mode}")
    n = A.shape[mode]
    m = getattr(M, "shape", None) or (M.n, M.n)
    if m[1] != n:
        raise ValueError(f"operator with {m[1]} columns cannot act on mode of size {n}")
    if A.is_zero():
        return TensorTrain.zeros(A.shape[:mode] + (m[0],) + A.shape[mode + 1:])
    g = list(A.cores)
    g[mode] = _mode_apply_core(M, g[mode])
    return TensorTrain(tuple(g))


def tt_mode_sum(A, ops):
    """``sum_k M_k (x)_k A`` as one train of rank 2r (Laplace-like structure).

    ``ops`` is a sequence of three operators; ``None`` entries are skipped.
    """
    if len(ops) != 3:
        raise ValueError("need one operator (or None) per mode")
    if A.is_zero() or all(M is None for M in ops):
        return TensorTrain.zeros(A.shape)
    G1, G2, G3 = A.cores
    z = [np.zeros_like(G) for G in (G1, G2, G3)]
    MG = [(_mode_apply_core(M, G) if M is not None else zero) for M, G, zero in zip(ops, (G1, G2, G3), z)]
    c1 = np.concatenate([MG[0], G1], axis=2)
    top = np.concatenate([G2, z[1]], axis=2)
    bot = np.concatenate([MG[1], G2], axis=2)
    c2 = np.concatenate([top, bot], axis=0)
    c3 = np.concatenate([G3, MG[2]], axis=0)
    return TensorTrain((c1, c2, c3))


def tt_hadamard_rank1(A, v1, v2, v3):
    """Elementwise product with ``v1 (x) v2 (x) v3``; ranks are unchanged."""
    vs = [np.asarray(v, float) for v in (v1, v2, v3)]
    for v, n in zip(vs, A.shape):
        if v.shape != (n,):
            raise ValueError(f"vector of shape {v.shape} does not match mode size {n}")
    return TensorTrain(tuple(c * v[None, :, None] for c, v in zip(A.cores, vs)))


def tt_inner(A, B):
    """Frobenius inner product by left-to-right core contraction."""
    _check_same(A, B)
    if A.is_zero() or B.is_zero():
        return 0.0
    w = np.ones((1, 1))
    for a, b in zip(A.cores, B.cores):
        # w[p, q] a[p, i, s] b[q, i, t] -> [s, t]
        w = np.einsum("pq,pis,qit->st", w, a, b, optimize=True)
    return float(w[0, 0])


def tt_norm(A):
    if A.is_zero():
        return 0.0
    # orthogonalize right-to-left so the norm sits in the first core
    return float(np.linalg.norm(_right_orthogonalize(A.cores)[0]))


def _noise_floor(cores):
    """Roundoff level of a represented tensor: a multiple of eps times ``prod ||G_k||``."""
    return 16 * np.finfo(float).eps * float(np.prod([np.linalg.norm(c) for c in cores]))


def _right_orthogonalize(cores):
    cores = list(cores)
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(-1, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], r.T, axes=(2, 0))
    return cores


def _round_threshold(cores, threshold):
    """Left-to-right truncation of right-orthogonal cores at absolute per-unfolding threshold."""
    cores = list(cores)
    for k in range(len(cores) - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * n, r1), full_matrices=False)
        r = truncation_rank(s, threshold)
        if r == 0:
            return None
        cores[k] = u[:, :r].reshape(r0, n, r)
        cores[k + 1] = np.tensordot(s[:r, None] * vt[:r], cores[k + 1], axes=(1, 0))
    return cores


def tt_round(A, delta):
    """Recompress so that ``||A - out|| <= delta / sqrt(2) * ||A||``.

    The budget is split evenly over the two internal unfoldings, each truncated
    at ``delta * ||A|| / 2``.  The result is left-orthogonal except the last core.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if A.is_zero():
        return TensorTrain.zeros(A.shape)
    floor = _noise_floor(A.cores)
    cores = _right_orthogonalize(A.cores)
    nrm = np.linalg.norm(cores[0])
    if nrm <= floor:
        return TensorTrain.zeros(A.shape)
    cores = _round_threshold(cores, delta * nrm / 2.0)
    if cores is None:
        return TensorTrain.zeros(A.shape)
    return TensorTrain(tuple(cores))


def tt_truncate_abs(A, eps):
    """Absolute-tolerance rounding: ``||A - out|| <= eps``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if A.is_zero():
        return TensorTrain.zeros(A.shape)
    cores = _right_orthogonalize(A.cores)
    nrm = np.linalg.norm(cores[0])
    if nrm == 0 or eps >= nrm:
        return TensorTrain.zeros(A.shape)
    cores = _round_threshold(cores, eps / np.sqrt(2.0))
    if cores is None:
        return TensorTrain.zeros(A.shape)
    return TensorTrain(tuple(cores))


def tt_from_dense(T, delta=0.0):
    """TT-SVD with error at most ``delta / sqrt(2) * ||T||``."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 3:
        raise ValueError("expected a 3-way array")
    n1, n2, n3 = T.shape
    nrm = np.linalg.norm(T)
    if nrm == 0:
        return TensorTrain.zeros(T.shape)
    thr = delta * nrm / 2.0
    u, s, vt = np.linalg.svd(T.reshape(n1, n2 * n3), full_matrices=False)
    r1 = max(truncation_rank(s, thr), 1)
    g1 = u[:, :r1].reshape(1, n1, r1)
    rest = (s[:r1, None] * vt[:r1]).reshape(r1 * n2, n3)
    u, s, vt = np.linalg.svd(rest, full_matrices=False)
    r2 = max(truncation_rank(s, thr), 1)
    g2 = u[:, :r2].reshape(r1, n2, r2)
    g3 = (s[:r2, None] * vt[:r2]).reshape(r2, n3, 1)
    return TensorTrain((g1, g2, g3))


def tt_to_dense(A, limit=DENSE_LIMIT):
    """Full array of ``A``; refused above ``limit`` entries."""
    size = int(np.prod(A.shape))
    if size > limit:
        raise ValueError(f"refusing to densify a tensor with {size} entries (limit {limit})")
    if A.is_zero():
        return np.zeros(A.shape)
    g1, g2, g3 = A.cores
    return np.einsum("aip,pjq,qkb->ijk", g1, g2, g3, optimize=True)
