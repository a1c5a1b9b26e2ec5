import numpy as np
import pytest
import scipy.linalg as sla

from lrwh.domain import SourceSpec, build_domain
from lrwh.oracle import (DENSE_SOLVE_LIMIT, SizeGuardError, dense_helmholtz_direct, dense_source, dense_sylvester,
                         dense_truncate, global_operator)
from lrwh.wave2d import assemble_all


def test_dense_sylvester_against_scipy():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    B = rng.standard_normal((5, 5)) - 6 * np.eye(5)
    R = rng.standard_normal((6, 5))
    X = dense_sylvester(A, B, R)
    assert np.allclose(X, sla.solve_sylvester(A, -B.T, R))


def test_dense_sylvester_guard():
    n = int(np.sqrt(DENSE_SOLVE_LIMIT)) + 1
    with pytest.raises(SizeGuardError):
        dense_sylvester(np.eye(n), np.eye(n), np.zeros((n, n)))


def test_dense_truncate_tail():
    u, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((8, 4)))
    s = np.array([1.0, 1e-2, 1e-4, 1e-6])
    M = (u * s) @ u.T
    T, kept = dense_truncate(M, 1.5e-4)
    assert kept.size == 2
    assert np.linalg.norm(M - T) <= 1.5e-4


def test_helmholtz_direct_residual_and_guard():
    d = build_domain(dict(extents=[(0, 2), (0, 1)], partition=(2, 1), n=15, boundary={"north": "neumann"}))
    w = 3 * np.pi
    src = SourceSpec("gaussian_point", (0.5, 0.5), w)
    u = dense_helmholtz_direct(d, w, src)
    L, p = global_operator(assemble_all(d), d.block_indices, d.n, d.dim)
    x = np.concatenate([u[i].ravel() for i in d.block_indices])
    f = np.concatenate([dense_source(src, d, i).ravel() for i in d.block_indices])
    r = L @ x + w**2 * x + 1j * w * p * x - f
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(f)
    assert np.any(p > 0)
    with pytest.raises(SizeGuardError):
        dense_helmholtz_direct(d, w, src, limit=100)


def test_helmholtz_direct_symmetric_in_source_mirror():
    d = build_domain(dict(extents=[(0, 1), (0, 1)], partition=(1, 1), n=17))
    w = 2 * np.pi
    u = dense_helmholtz_direct(d, w, SourceSpec("gaussian_point", (0.5, 0.5), w))[(0, 0)]
    assert np.allclose(u, u[::-1, :], atol=1e-10)
    assert np.allclose(u, u.T, atol=1e-10)
