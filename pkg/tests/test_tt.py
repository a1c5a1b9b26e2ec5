import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrwh import tt as ttm
from lrwh.sbp import build_sbp


def _random_tt(rng, shape, ranks, decay=1.0):
    r = (1,) + tuple(ranks) + (1,)
    cores = []
    for k, n in enumerate(shape):
        c = rng.standard_normal((r[k], n, r[k + 1]))
        if k < 2:
            c = c * np.exp(-decay * np.arange(r[k + 1]))[None, None, :]
        cores.append(c)
    return ttm.TensorTrain(tuple(cores))


def test_structure_and_storage():
    A = _random_tt(np.random.default_rng(0), (5, 6, 7), (2, 3))
    assert A.shape == (5, 6, 7)
    assert A.ranks == (1, 2, 3, 1)
    assert A.max_rank == 3
    assert A.storage() <= 3 * 7 * 9 + 2 * 3
    with pytest.raises(ValueError):
        ttm.TensorTrain((np.zeros((2, 3, 1)), np.zeros((1, 3, 1)), np.zeros((1, 3, 1))))


def test_round_bound_random():
    rng = np.random.default_rng(1)
    A = _random_tt(rng, (20, 20, 20), (8, 8), decay=0.7)
    D = ttm.tt_to_dense(A)
    R = ttm.tt_round(A, 1e-2)
    assert np.linalg.norm(D - ttm.tt_to_dense(R)) <= 1e-2 / np.sqrt(2) * np.linalg.norm(D)
    assert R.max_rank < 8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-10, 0.5))
def test_round_bound_property(seed, delta):
    rng = np.random.default_rng(seed)
    A = _random_tt(rng, (9, 10, 11), tuple(rng.integers(1, 7, 2)), decay=float(rng.uniform(0.1, 3)))
    D = ttm.tt_to_dense(A)
    R = ttm.tt_round(A, delta)
    assert np.linalg.norm(D - ttm.tt_to_dense(R)) <= delta / np.sqrt(2) * np.linalg.norm(D) * (1 + 1e-10)


def test_round_zero_delta_is_exact():
    A = _random_tt(np.random.default_rng(2), (8, 9, 10), (3, 4))
    assert np.allclose(ttm.tt_to_dense(ttm.tt_round(A, 0.0)), ttm.tt_to_dense(A), atol=1e-12)


def test_rank_one_unchanged():
    rng = np.random.default_rng(3)
    A = ttm.tt_rank1(*(rng.standard_normal(6) for _ in range(3)))
    assert ttm.tt_round(A, 0.3).ranks == (1, 1, 1, 1)


def test_add_ranks_and_cancellation():
    rng = np.random.default_rng(4)
    A = _random_tt(rng, (15, 15, 15), (2, 3))
    B = _random_tt(rng, (15, 15, 15), (4, 1))
    C = ttm.tt_add(A, B)
    assert C.ranks == (1, 6, 4, 1)
    assert np.allclose(ttm.tt_to_dense(C), ttm.tt_to_dense(A) + ttm.tt_to_dense(B), atol=1e-12)
    Z = ttm.tt_round(ttm.tt_add(A, ttm.tt_scale(A, -1.0)), 1e-12)
    assert Z.is_zero()


def test_apply_mode():
    rng = np.random.default_rng(5)
    A = _random_tt(rng, (12, 12, 12), (3, 2))
    M = rng.standard_normal((12, 12))
    D = ttm.tt_to_dense(A)
    for mode in range(3):
        out = ttm.tt_to_dense(ttm.tt_apply_mode(M, A, mode))
        ref = np.moveaxis(np.tensordot(M, D, axes=(1, mode)), 0, mode)
        assert np.allclose(out, ref, atol=1e-12 * np.abs(ref).max())
    assert np.allclose(ttm.tt_to_dense(ttm.tt_apply_mode(np.eye(12), A, 1)), D)
    with pytest.raises(ValueError):
        ttm.tt_apply_mode(np.eye(5), A, 0)


def test_apply_d2_along_third_mode():
    n = 41
    ops = build_sbp(4, n, 1 / (n - 1))
    x = ops.grid()
    A = ttm.tt_rank1(np.exp(x), np.cos(x), np.sin(np.pi * x))
    out = ttm.tt_to_dense(ttm.tt_apply_mode(ops.D2, A, 2))
    ref = -np.pi**2 * ttm.tt_to_dense(A)
    inner = (slice(None), slice(None), slice(4, -4))
    assert np.abs(out - ref)[inner].max() < 1e-4


def test_mode_sum():
    rng = np.random.default_rng(6)
    A = _random_tt(rng, (7, 8, 9), (2, 3))
    Ms = [rng.standard_normal((n, n)) for n in (7, 8, 9)]
    D = ttm.tt_to_dense(A)
    ref = sum(np.moveaxis(np.tensordot(M, D, axes=(1, k)), 0, k) for k, M in enumerate(Ms))
    S = ttm.tt_mode_sum(A, Ms)
    assert S.ranks == (1, 4, 6, 1)
    assert np.allclose(ttm.tt_to_dense(S), ref, atol=1e-11)
    ref2 = np.moveaxis(np.tensordot(Ms[1], D, axes=(1, 1)), 0, 1)
    assert np.allclose(ttm.tt_to_dense(ttm.tt_mode_sum(A, [None, Ms[1], None])), ref2, atol=1e-11)


def test_hadamard_rank1():
    rng = np.random.default_rng(7)
    A = _random_tt(rng, (10, 10, 10), (3, 3))
    v = [rng.standard_normal(10) for _ in range(3)]
    H = ttm.tt_hadamard_rank1(A, *v)
    assert H.ranks == A.ranks
    ref = ttm.tt_to_dense(A) * np.einsum("i,j,k->ijk", *v)
    assert np.allclose(ttm.tt_to_dense(H), ref, atol=1e-12)
    e = np.zeros(10)
    e[4] = 1.0
    M = ttm.tt_to_dense(ttm.tt_hadamard_rank1(A, e, np.ones(10), np.ones(10)))
    assert np.count_nonzero(np.delete(M, 4, axis=0)) == 0


def test_inner_norm():
    rng = np.random.default_rng(8)
    A = _random_tt(rng, (14, 14, 14), (3, 4))
    B = _random_tt(rng, (14, 14, 14), (2, 5))
    ref = np.sum(ttm.tt_to_dense(A) * ttm.tt_to_dense(B))
    assert ttm.tt_inner(A, B) == pytest.approx(ref, rel=1e-11)
    assert ttm.tt_norm(A) == pytest.approx(np.linalg.norm(ttm.tt_to_dense(A)), rel=1e-12)
    u, v, w = np.arange(1.0, 4), np.ones(3), np.array([2.0, 0, 0])
    assert ttm.tt_norm(ttm.tt_rank1(u, v, w)) == pytest.approx(np.linalg.norm(u) * np.sqrt(3) * 2)


def test_dense_round_trip():
    rng = np.random.default_rng(9)
    T = rng.standard_normal((10, 10, 10))
    assert np.abs(ttm.tt_to_dense(ttm.tt_from_dense(T, 1e-12)) - T).max() <= 1e-10
    x = np.linspace(0, 1, 12)
    sep = np.einsum("i,j,k->ijk", np.exp(x), np.cos(x), 1 + x**2)
    assert ttm.tt_from_dense(sep, 1e-10).ranks == (1, 1, 1, 1)
    assert ttm.tt_from_dense(np.zeros((3, 4, 5))).is_zero()


def test_dense_guard():
    big = ttm.tt_rank1(np.ones(101), np.ones(101), np.ones(101))
    with pytest.raises(ValueError):
        ttm.tt_to_dense(big)


def test_truncate_abs():
    rng = np.random.default_rng(10)
    A = _random_tt(rng, (9, 9, 9), (5, 5), decay=0.8)
    D = ttm.tt_to_dense(A)
    for eps in (1e-1, 1e-3):
        assert np.linalg.norm(D - ttm.tt_to_dense(ttm.tt_truncate_abs(A, eps))) <= eps
    assert ttm.tt_truncate_abs(A, 2 * np.linalg.norm(D)).is_zero()
