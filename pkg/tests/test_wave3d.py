import numpy as np
import pytest

from lrwh import tt as ttm
from lrwh.domain import SourceSpec, build_domain
from lrwh.oracle import DenseWaveSolver
from lrwh.wave3d import (DampingProfile, TTWaveSolver, damping_grid, damping_profile, dirichlet_face_tt,
                         ttwh_solve)


def _domain(n=13, **kw):
    cfg = dict(dim=3, extents=[(0, 2), (0, 1), (0, 1)], partition=(2, 1, 1), n=n, default_boundary="damped",
               wave_speed={(0, 0, 0): 1.0, (1, 0, 0): 0.7})
    cfg.update(kw)
    return build_domain(cfg)


def _smooth(d, i):
    x, y, z = d.grids(i)
    return np.sin(3 * np.add.outer(np.add.outer(x, y**2), z)) * np.exp(-5 * (x[:, None, None] - 0.7) ** 2)


def test_damping_profile_values():
    d = _domain()
    p = damping_profile(d, (0, 0, 0))
    x = d.axis_grid((0, 0, 0), 0)
    assert np.allclose(p.factors[0], 50 * (np.exp(-100 * x**2) + np.exp(-100 * (x - 2) ** 2)))
    assert p.factors[0][0] == pytest.approx(50.0, rel=1e-12)
    hs = damping_profile(d, (0, 0, 0), "half_space")
    y = d.axis_grid((0, 0, 0), 1)
    assert np.allclose(hs.factors[1], 50 * np.exp(-100 * y**2))
    assert damping_profile(d, (0, 0, 0), "none").is_zero()
    g = damping_grid(p)
    assert g[0, 0, 0] == pytest.approx(sum(f[0] for f in p.factors))


def test_damping_profile_validation():
    with pytest.raises(ValueError):
        DampingProfile((np.ones(3), np.ones(3), -np.ones(3)))
    with pytest.raises(ValueError):
        DampingProfile((np.ones(3),) * 3, "mixed")
    with pytest.raises(ValueError):
        damping_profile(_domain(), (0, 0, 0), "ocean")


def test_product_profile_zero_when_any_axis_zero():
    p = DampingProfile((np.ones(3), np.zeros(3), np.ones(3)), "product")
    assert p.is_zero()
    assert np.all(damping_grid(p) == 0)


def test_dirichlet_face_train():
    rng = np.random.default_rng(0)
    left = rng.standard_normal(5)
    g = rng.standard_normal((5, 5))
    for axis in range(3):
        T = ttm.tt_to_dense(dirichlet_face_tt(left, axis, g))
        ref = np.moveaxis(np.multiply.outer(left, g), 0, axis)
        assert np.allclose(T, ref)
    assert dirichlet_face_tt(left, 0, np.zeros((5, 5))) is None


def test_zero_data_stays_zero():
    d = _domain()
    s = TTWaveSolver(d, 2 * np.pi)
    Z = {i: s.algebra.zeros() for i in s.blocks}
    out = s.step(Z, Z, 0.0, 1e-8)
    assert all(w.is_zero() for w in out.values())


@pytest.mark.parametrize("damping", ["free", "none"])
def test_matches_dense_stepper(damping):
    d = _domain(boundary={"north": "neumann"} if damping == "none" else None)
    w = 4 * np.pi
    src = SourceSpec("gaussian_point", (0.3, 0.5, 0.45), w)
    s = TTWaveSolver(d, w, src, damping=damping)
    ds = DenseWaveSolver(d, w, src, damping=s.damping_grids() if damping != "none" else None)
    W = {i: ttm.tt_from_dense(_smooth(d, i)) for i in s.blocks}
    Wp = {i: s.algebra.zeros() for i in s.blocks}
    D = {i: ttm.tt_to_dense(W[i]) for i in s.blocks}
    Dp = {i: np.zeros(d.block_shape) for i in s.blocks}
    Wm, Dm = s.backstep(W, Wp, 1e-13), ds.backstep(D, Dp, 0)
    for k in range(15):
        Wn, Dn = s.step(Wm, W, k * s.dt, 1e-13), ds.step(Dm, D, k * s.dt, 0)
        Wm, W, Dm, D = W, Wn, D, Dn
    err = np.sqrt(sum(np.sum((ttm.tt_to_dense(W[i]) - D[i]) ** 2) for i in s.blocks))
    nrm = np.sqrt(sum(np.sum(D[i] ** 2) for i in s.blocks))
    assert err <= 1e-10 * nrm


def test_damping_removes_energy():
    d = _domain(n=15)
    s = TTWaveSolver(d, 2 * np.pi, damping="free")
    W = {i: ttm.tt_from_dense(_smooth(d, i), 1e-12) for i in s.blocks}
    Wm = s.backstep(W, {i: s.algebra.zeros() for i in s.blocks}, 1e-12)
    n0 = np.sqrt(sum(ttm.tt_norm(w) ** 2 for w in W.values()))
    for k in range(600):
        W, Wm = s.step(Wm, W, 0.0, 1e-10), W
    n1 = np.sqrt(sum(ttm.tt_norm(w) ** 2 for w in W.values()))
    assert np.isfinite(n1) and n1 < 0.2 * n0


def test_nonreflecting_rejected():
    d = _domain(default_boundary="nonreflecting")
    with pytest.raises(ValueError, match="nonreflecting"):
        TTWaveSolver(d, 2 * np.pi)


def test_two_dimensional_domain_rejected():
    d = build_domain(dict(extents=[(0, 1), (0, 1)], partition=(1, 1), n=9))
    with pytest.raises(ValueError):
        TTWaveSolver(d, 2 * np.pi)


@pytest.mark.slow
def test_ttwh_small_run_reduces_residual():
    d = _domain(n=13)
    w = 2 * np.pi
    s = TTWaveSolver(d, w, SourceSpec("gaussian_point", (0.5, 0.5, 0.5), w))
    state, _ = ttwh_solve(s, 1e-12, 6)
    rhos = [r.rho for r in state.history]
    assert rhos[-1] < rhos[1]


def test_dense_damped_energy_decays_over_periods():
    d = _domain(n=21)
    w = 2 * np.pi
    s = TTWaveSolver(d, w)
    ds = DenseWaveSolver(d, w, damping=s.damping_grids())
    W = {i: _smooth(d, i) for i in s.blocks}
    Wm = ds.backstep(W, {i: np.zeros(d.block_shape) for i in s.blocks}, 0.0)
    nt = s.kernel.nt
    norms = {}
    for k in range(1, 5 * nt + 1):
        W, Wm = ds.step(Wm, W, 0.0, 0.0), W
        if k in (nt, 5 * nt):
            norms[k] = np.sqrt(sum(np.sum(v**2) for v in W.values()))
    assert norms[5 * nt] < norms[nt]
