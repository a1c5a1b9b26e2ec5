import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lrwh import lowrank as lr
from lrwh.domain import SourceSpec, build_domain
from lrwh.lraa import AccelerationWindow, accelerated_solve, aa_update, compute_weights, update_coefficients
from lrwh.oracle import DenseAlgebra, DenseWaveSolver, dense_aa_weights
from lrwh.wave2d import LowRankWaveSolver
from lrwh.waveholtz import LowRankAlgebra, run_to_convergence


def _lr(rng, n=8, r=2):
    return lr.from_dense(rng.standard_normal((n, r)) @ rng.standard_normal((r, n)))


@pytest.mark.parametrize("m,steps", [(1, 2), (3, 4), (3, 6)])
def test_weights_match_stacked_least_squares(m, steps):
    rng = np.random.default_rng(m + steps)
    w = 0.25
    win = AccelerationWindow(m, LowRankAlgebra((8, 8)), velocity_weight=w)
    blocks = [0, 1]
    eps = {b: 0.0 for b in blocks}
    Fs = []
    for _ in range(steps):
        F = {b: (_lr(rng), _lr(rng)) for b in blocks}
        win.push({b: F[b] for b in blocks}, F, eps)
        Fs.append(F)
    gamma, fb = compute_weights(win)
    assert not fb and gamma.size == min(m, steps - 1)

    def stack(F):
        return [F[b][0].to_dense() for b in blocks] + [w * F[b][1].to_dense() for b in blocks]

    dF = []
    for a, b in zip(Fs[:-1], Fs[1:]):
        dF.append([y - x for x, y in zip(stack(a), stack(b))])
    ref = dense_aa_weights(dF[-gamma.size:], stack(Fs[-1]))
    assert np.allclose(gamma, ref, rtol=1e-8, atol=1e-10)


def test_single_difference_is_scalar_projection():
    alg = DenseAlgebra((3,))
    win = AccelerationWindow(1, alg, velocity_weight=1.0)
    f0 = np.array([1.0, 0.0, 0.0])
    f1 = np.array([1.0, 2.0, 0.0])
    z = np.zeros(3)
    win.push({0: (f0, z)}, {0: (f0, z)}, {0: 0})
    win.push({0: (f1, z)}, {0: (f1, z)}, {0: 0})
    gamma, _ = compute_weights(win)
    d = f1 - f0
    assert gamma[0] == pytest.approx(d @ f1 / (d @ d))


@given(arrays(float, st.integers(1, 6), elements=st.floats(-5, 5)))
def test_update_coefficients_sum_to_one(gamma):
    c = update_coefficients(gamma)
    assert c.size == gamma.size + 1
    assert c.sum() == pytest.approx(1.0)


def test_update_coefficients_cases():
    assert np.array_equal(update_coefficients([]), [1.0])
    assert np.allclose(update_coefficients([0.5]), [0.5, 0.5])
    assert np.allclose(update_coefficients([0.2, 0.7]), [0.2, 0.5, 0.3])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_aa_update_matches_dense_formula(m, seed):
    rng = np.random.default_rng(seed)
    alg = DenseAlgebra((5,))
    win = AccelerationWindow(m, alg)
    Gs = []
    for _ in range(m + 2):
        G = rng.standard_normal(5)
        Gs.append(G)
        win.push({0: (G, G)}, {0: (rng.standard_normal(5), G)}, {0: 0})
    gamma = rng.standard_normal(win.depth)
    out = aa_update(win, gamma, {0: 0})[0][0]
    hist = Gs[-(gamma.size + 1):]
    ref = hist[-1] - sum(g * (hist[j + 1] - hist[j]) for j, g in enumerate(gamma))
    assert np.allclose(out, ref)


def test_singular_gram_falls_back_to_picard():
    alg = DenseAlgebra((3,))
    win = AccelerationWindow(2, alg)
    z = np.zeros(3)
    f = np.array([1.0, 1.0, 0.0])
    for k in range(3):
        win.push({0: (f, z)}, {0: ((k + 1) * f, z)}, {0: 0})
    # dF entries are parallel
    gamma, fb = compute_weights(win)
    assert fb and np.all(gamma == 0) and win.fallbacks == 1


def test_memory_validation():
    with pytest.raises(ValueError):
        AccelerationWindow(-1, DenseAlgebra((2,)))
    d, src = _problem()
    with pytest.raises(ValueError, match="stop_on"):
        accelerated_solve(DenseWaveSolver(d, 3 * np.pi, src), 2, 1e-3, 1, stop_on="rho_X")


def test_stopping_rule_variants():
    d, src = _problem()
    ds = DenseWaveSolver(d, 3 * np.pi, src)
    a, conv_a, _ = accelerated_solve(ds, 3, 1e-5, 400)
    b, conv_b, _ = accelerated_solve(ds, 3, 1e-5, 400, stop_on="rho_G")
    assert conv_a and conv_b and a.k <= b.k
    last = a.history[-1]
    assert min(last.rho_G, last.rho_X) <= 1e-5
    assert b.history[-1].rho_G <= 1e-5


def _problem():
    d = build_domain(dict(extents=[(0, 2), (0, 1)], partition=(2, 1), n=11, boundary={"north": "neumann"}))
    return d, SourceSpec("gaussian_point", (0.5, 0.6), 3 * np.pi)


def test_memory_zero_reproduces_plain_iteration():
    d, src = _problem()
    s = LowRankWaveSolver(d, 3 * np.pi, src)
    a, conv_a, _ = accelerated_solve(s, 0, 1e-30, 4)
    b, conv_b = run_to_convergence(s, 1e-30, 4)
    assert [r.rho for r in a.history] == pytest.approx([r.rho for r in b.history], rel=1e-12)
    for i in s.blocks:
        assert np.allclose(a.W[i].to_dense(), b.W[i].to_dense(), atol=1e-14)


def test_acceleration_beats_plain_on_dense_problem():
    d, src = _problem()
    ds = DenseWaveSolver(d, 3 * np.pi, src)
    plain, conv_p = run_to_convergence(ds, 1e-6, 400)
    acc, conv_a, win = accelerated_solve(ds, 5, 1e-6, 400)
    assert conv_p and conv_a
    assert acc.k < plain.k
    for i in ds.blocks:
        assert np.allclose(acc.W[i], plain.W[i], atol=1e-4)
    assert all(np.isfinite(r.rho_X) for r in acc.history)


def test_normal_equation_gradient_vanishes():
    rng = np.random.default_rng(9)
    alg = DenseAlgebra((6, 6))
    win = AccelerationWindow(4, alg, velocity_weight=0.3)
    for _ in range(6):
        F = {b: (rng.standard_normal((6, 6)), rng.standard_normal((6, 6))) for b in range(3)}
        win.push(F, F, {b: 0 for b in range(3)})
    A, b = win.normal_equations()
    gamma, fb = compute_weights(win)
    assert not fb
    assert np.linalg.norm(A @ gamma - b) <= 1e-8 * np.linalg.norm(b)


@pytest.mark.parametrize("m", [1, 2, 5])
def test_window_discipline(m):
    rng = np.random.default_rng(m)
    win = AccelerationWindow(m, DenseAlgebra((3,)))
    z = np.zeros(3)
    for k in range(1, 9):
        f = rng.standard_normal(3)
        win.push({0: (f, z)}, {0: (f, z)}, {0: 0})
        assert win.depth == min(k - 1, m)
        assert len(win.G) == min(k, m + 1)
