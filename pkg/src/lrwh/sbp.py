"""Narrow-stencil diagonal-norm SBP operators of interior order 2 and 4.

The coefficient tables are the standard constant-coefficient operators
(boundary closure orders 1 and 2).  Every operator set carries dense n x n
matrices, used by the reference solvers, and a banded description used to
apply the second derivative to tall factor matrices.

The identities enforced by construction are::

    H D1 + (H D1)^T = e_n e_n^T - e_1 e_1^T
    D2 = H^{-1} (-A + (e_n e_n^T - e_1 e_1^T) S),   A = A^T >= 0
"""

from dataclasses import dataclass, field
from fractions import Fraction as Fr

import numpy as np

from . import _kernels

__all__ = [
    "Stencil",
    "SbpOperatorSet",
    "AxisOperator",
    "build_sbp",
    "quadrature_inner",
    "verify_sbp_identity",
]


def _frac(rows):
    return np.array([[float(Fr(v)) for v in row] for row in rows])


# order -> (norm closure, Q closure, Q interior, D2 closure, D2 interior, boundary derivative)
_TABLES = {
    2: dict(
        norm=["1/2"],
        q_left=[["-1/2", "1/2"]],
        q_int=["-1/2", "0", "1/2"],
        d2_left=[["1", "-2", "1"]],
        d2_int=["1", "-2", "1"],
        bd=["-3/2", "2", "-1/2"],
        min_n=4,
    ),
    4: dict(
        norm=["17/48", "59/48", "43/48", "49/48"],
        q_left=[
            ["-1/2", "59/96", "-1/12", "-1/32", "0", "0"],
            ["-59/96", "0", "59/96", "0", "0", "0"],
            ["1/12", "-59/96", "0", "59/96", "-1/12", "0"],
            ["1/32", "0", "-59/96", "0", "2/3", "-1/12"],
        ],
        q_int=["1/12", "-2/3", "0", "2/3", "-1/12"],
        d2_left=[
            ["2", "-5", "4", "-1", "0", "0"],
            ["1", "-2", "1", "0", "0", "0"],
            ["-4/43", "59/43", "-110/43", "59/43", "-4/43", "0"],
            ["-1/49", "0", "59/49", "-118/49", "64/49", "-4/49"],
        ],
        d2_int=["-1/12", "4/3", "-5/2", "4/3", "-1/12"],
        bd=["-11/6", "3", "-3/2", "1/3"],
        min_n=8,
    ),
}


@dataclass(frozen=True)
class Stencil:
    """Banded operator: closures in the corners, centered stencil elsewhere."""

    left: np.ndarray
    interior: np.ndarray
    right: np.ndarray
    scale: float = 1.0

    def apply(self, x):
        return _kernels.banded_apply(self.left, self.interior, self.right, x, self.scale)

    def dense(self, n):
        m = np.zeros((n, n))
        w = self.interior.size
        o = w // 2
        pl, ql = self.left.shape
        pr, qr = self.right.shape
        for i in range(pl, n - pr):
            m[i, i - o:i - o + w] = self.interior
        m[:pl, :ql] = self.left
        m[n - pr:, n - qr:] = self.right
        return self.scale * m


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class SbpOperatorSet:
    n: int
    h: float
    order: int
    H: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    S: np.ndarray
    A: np.ndarray
    e_first: np.ndarray
    e_last: np.ndarray
    d2_stencil: Stencil = field(repr=False)

    @property
    def hdiag(self):
        return np.diag(self.H)

    @property
    def d_first(self):
        """Boundary derivative row at the first point (oriented along +x)."""
        return self.S[0]

    @property
    def d_last(self):
        return self.S[-1]

    @property
    def boundary(self):
        return np.outer(self.e_last, self.e_last) - np.outer(self.e_first, self.e_first)

    def grid(self, start=0.0):
        return start + self.h * np.arange(self.n)


def build_sbp(order, n, h):
    """Build the order-2 or order-4 SBP operator set on ``n`` points with spacing ``h``."""
    if order not in _TABLES:
        raise ValueError(f"unsupported SBP order {order!r}; expected 2 or 4")
    tab = _TABLES[order]
    if n < tab["min_n"]:
        raise ValueError(f"order-{order} operators need n >= {tab['min_n']}, got {n}")
    if not h > 0:
        raise ValueError(f"grid spacing must be positive, got {h}")

    norm = np.array([float(Fr(v)) for v in tab["norm"]])
    hd = np.ones(n)
    hd[: norm.size] = norm
    hd[n - norm.size:] = norm[::-1]
    hd *= h
    H = np.diag(hd)

    q_left = _frac(tab["q_left"])
    q = Stencil(q_left, _frac([tab["q_int"]])[0], -q_left[::-1, ::-1]).dense(n)
    D1 = q / hd[:, None]

    d2_left = _frac(tab["d2_left"])
    d2 = Stencil(d2_left, _frac([tab["d2_int"]])[0], d2_left[::-1, ::-1], scale=1.0 / h**2)
    D2 = d2.dense(n)

    bd = np.array([float(Fr(v)) for v in tab["bd"]]) / h
    S = np.zeros((n, n))
    S[0, : bd.size] = bd
    S[-1, n - bd.size:] = -bd[::-1]

    e1 = np.zeros(n)
    e1[0] = 1.0
    en = np.zeros(n)
    en[-1] = 1.0
    B = np.outer(en, en) - np.outer(e1, e1)
    A = -H @ D2 + B @ S
    # symmetric by construction up to rounding; remove the rounding
    A = 0.5 * (A + A.T)

    _readonly(H, D1, D2, S, A, e1, en, d2.left, d2.interior, d2.right)
    return SbpOperatorSet(n=n, h=float(h), order=order, H=H, D1=D1, D2=D2, S=S, A=A,
                          e_first=e1, e_last=en, d2_stencil=d2)


def quadrature_inner(ops, u, v):
    """Discrete inner product ``u^T H v`` approximating the integral of u v."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[0] != ops.n or v.shape[0] != ops.n:
        raise ValueError(f"expected vectors of length {ops.n}, got {u.shape[0]} and {v.shape[0]}")
    return float(np.dot(u * ops.hdiag, v))


def verify_sbp_identity(ops):
    """Max-norm residual of both SBP identities.

    The second identity is checked through the symmetry of ``A`` recomputed
    from ``D2`` and ``S``; that residual is multiplied by ``h`` so both terms
    are dimensionless.
    """
    HD1 = ops.H @ ops.D1
    r1 = np.abs(HD1 + HD1.T - ops.boundary).max()
    A = -ops.H @ ops.D2 + ops.boundary @ ops.S
    r2 = np.abs(A - A.T).max() * ops.h
    r3 = np.abs(ops.D2 - np.linalg.solve(ops.H, -ops.A + ops.boundary @ ops.S)).max() * ops.h**2
    return float(max(r1, r2, r3))


class AxisOperator:
    """``scale * banded + sum_k u_k v_k^T`` acting along one grid axis.

    Used for c^2 D2 with the own-block parts of the SAT terms folded in as
    rank-one boundary corrections.
    """

    def __init__(self, stencil, n, scale=1.0, corrections=()):
        self.stencil = stencil
        self.n = n
        self.scale = scale
        self.corrections = tuple((np.asarray(u, float), np.asarray(v, float)) for u, v in corrections)
        self._dense = None

    def with_correction(self, u, v):
        return AxisOperator(self.stencil, self.n, self.scale, self.corrections + ((u, v),))

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if self.scale != 0.0:
            out = self.stencil.apply(x)
            if self.scale != 1.0:
                out *= self.scale
        else:
            out = np.zeros_like(x)
        for u, v in self.corrections:
            out += np.multiply.outer(u, v @ x)
        return out

    def dense(self):
        if self._dense is None:
            m = self.scale * self.stencil.dense(self.n)
            for u, v in self.corrections:
                m = m + np.outer(u, v)
            m.setflags(write=False)
            self._dense = m
        return self._dense

    def __matmul__(self, x):
        return self.apply(x)
