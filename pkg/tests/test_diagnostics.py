import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablercm.diagnostics import (
    box_sites,
    cutoff_gap,
    fit_rate,
    good_vertex_fraction,
    l2_errors,
    multiscale_poincare_gap,
    operator_gap_bar,
    operator_gap_random,
    poincare_ratio,
    sup_l2_error,
)
from stablercm.environment import EnvironmentSpec, MarginalLaw, MeanProfile, eval_w, make_environment
from stablercm.lattice import Lattice, block_average, dyadic_blocks, dyadic_lattice
from stablercm.solver import Trajectory
from stablercm.testfn import SmoothProfile


def const_env(K=1.0):
    return make_environment(EnvironmentSpec("constant", profile=MeanProfile("constant", K=K)))


def pl_env(seed=0):
    return make_environment(EnvironmentSpec("piecewise-linear", MarginalLaw(), seed=seed))


# -- rate fits ---------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(slope=st.floats(-4, 2), c=st.floats(0.1, 10))
def test_fit_recovers_exact_power_law(slope, c):
    pts = [(x, c * x**slope) for x in (4.0, 8.0, 16.0, 32.0)]
    fit = fit_rate(pts)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.predict(64.0) == pytest.approx(c * 64.0**slope, rel=1e-8)
    assert fit.recompute() == pytest.approx((fit.slope, fit.intercept))
    assert fit.residual_rms < 1e-9 and fit.window == (4.0, 32.0)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_rate([(2, 1.0), (1, 0.5), (4, 0.2)])
    with pytest.raises(ValueError):
        fit_rate([(1, 1.0), (2, 0.5)])
    with pytest.warns(RuntimeWarning, match="dropping"):
        fit = fit_rate([(1, 1.0), (2, 0.0), (4, 0.25), (8, 0.125)])
    assert fit.excluded == [(2.0, 0.0)]


# -- local inequalities ------------------------------------------------------


def test_box_sites():
    s = box_sites([3], 2, 1)
    assert s[:, 0].tolist() == [2, 3, 4, 5]
    assert len(box_sites([0, 0], 2, 2)) == 16


def test_good_vertex_fraction_constant_environment():
    env = const_env(1.0)
    frac = good_vertex_fraction(env, 0.0, [0], [1], [0], 4, 0.5)
    assert frac == pytest.approx(6 / 8)
    assert good_vertex_fraction(env, 0.0, [0], [1], [0], 4, 1.5) == 0.0
    with pytest.raises(ValueError):
        good_vertex_fraction(env, 0.0, [0], [0], [0], 4, 0.5)
    with pytest.raises(ValueError):
        good_vertex_fraction(env, 0.0, [0], [1], [0], 0, 0.5)


def test_good_vertex_fraction_matches_probability():
    law = MarginalLaw("bernoulli-degenerate", q=0.3)
    env = make_environment(EnvironmentSpec("static-iid", law, seed=5))
    frac = good_vertex_fraction(env, 0.0, [0], [1], [0], 2000, 0.5)
    p = law.prob_at_least(0.5) ** 2
    assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / 4000)


def test_poincare_ratio():
    env = pl_env()
    r = 8
    assert poincare_ratio(env, 0.5, [0], r, np.full(16, 2.0), alpha=1.2) == 0.0
    f = np.arange(16.0)
    q = poincare_ratio(env, 0.5, [0], r, f, alpha=1.2)
    assert 0 < q < math.inf
    # invariant under affine changes of f
    assert poincare_ratio(env, 0.5, [0], r, 3 * f - 7, alpha=1.2) == pytest.approx(q, rel=1e-12)
    with pytest.raises(ValueError):
        poincare_ratio(env, 0.5, [0], r, np.zeros(5), alpha=1.2)


def test_poincare_ratio_disconnected_is_infinite():
    env = make_environment(EnvironmentSpec("static-iid", MarginalLaw("bernoulli-degenerate", q=0.3), seed=0))
    # B_1(y) = {y, y + 1}; pick a pair joined by a zero conductance
    y = next(y for y in range(200) if eval_w(env, 0.0, [y], [y + 1]) == 0.0)
    assert poincare_ratio(env, 0.0, [y], 1, np.array([0.0, 1.0]), alpha=1.0) == math.inf


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 4), data=st.data())
def test_multiscale_block_identity(seed, m, data):
    n = data.draw(st.integers(0, m))
    rng = np.random.default_rng(seed)
    box = dyadic_lattice(m, 1)
    f, g = rng.normal(size=box.n_sites), rng.normal(size=box.n_sites)
    gap = multiscale_poincare_gap(pl_env(seed), 0.3, m, n, f, g, alpha=1.3)
    # lhs - block_term = sum_B |B| f_B g_B - |box| mean(f) mean(g)
    direct = -box.n_sites * f.mean() * g.mean()
    for blk in dyadic_blocks(m, n, 1):
        idx = np.flatnonzero(np.isin(box.int_coords[:, 0], blk.sites()[:, 0]))
        direct += len(idx) * block_average(f, idx) * block_average(g, idx)
    assert gap.lhs - gap.block_term == pytest.approx(direct, abs=1e-10 * (1 + abs(direct)))
    if n == m:
        assert gap.lhs == pytest.approx(gap.block_term, abs=1e-10)
        assert math.isnan(gap.constant)
    else:
        assert gap.energy_term > 0


def test_multiscale_rejects_bad_levels():
    with pytest.raises(ValueError):
        multiscale_poincare_gap(pl_env(), 0.0, 2, 3, np.zeros(8), np.zeros(8), alpha=1.0)
    with pytest.raises(ValueError):
        multiscale_poincare_gap(pl_env(), 0.0, 2, 1, np.zeros(5), np.zeros(5), alpha=1.0)


# -- operator gaps -------------------------------------------------------------


def test_bar_gap_constant_profile():
    f = SmoothProfile("compact-bump", radius=3.0)
    res = operator_gap_bar(f, [8, 16, 32], 1.0, 1.5, MeanProfile("constant", K=1.0), L=16)
    assert all(p.pi_term == 0.0 for p in res.points)
    assert all(p.residual == p.D for p in res.points)
    assert res.residual_fit is None
    assert res.points[0].D > res.points[1].D > res.points[2].D
    assert res.fit.slope < -0.5
    with pytest.raises(ValueError):
        operator_gap_bar(f, [8, 16], 1.0, 1.5, MeanProfile("constant", K=1.0))


def test_bar_gap_is_quadratic_in_K_for_constant_profiles():
    f = SmoothProfile("compact-bump", radius=3.0)
    a = operator_gap_bar(f, [8, 16, 32], 1.0, 1.2, MeanProfile("constant", K=1.0), L=16)
    b = operator_gap_bar(f, [8, 16, 32], 1.0, 1.2, MeanProfile("constant", K=2.0), L=16)
    for p, q in zip(a.points, b.points):
        assert q.D == pytest.approx(4 * p.D, rel=1e-9)


def test_random_gap_vanishes_for_constant_environment():
    f = SmoothProfile("compact-bump", radius=1.0)
    assert operator_gap_random(const_env(1.3), f, 4, 1.0, alpha=0.8, L=4) == 0.0
    assert operator_gap_random(const_env(1.3), f, 4, 1.0, alpha=1.5, variant="hat", L=4) < 1e-20
    assert operator_gap_random(pl_env(), f, 4, 1.0, alpha=0.8, L=4) > 0.0
    with pytest.raises(ValueError):
        operator_gap_random(pl_env(), f, 4, 1.0, alpha=0.8, variant="other")


def test_cutoff_gap_zero_when_cutoff_covers_support():
    f = SmoothProfile("compact-bump", radius=1.0)
    fit, pairs = cutoff_gap(f, [4, 8, 16], alpha=1.0, h=0.25, L_factor=4)
    assert fit is None and all(v == 0.0 for _, v in pairs)


def test_cutoff_gap_decays_for_decaying_profile():
    f = SmoothProfile("polynomial-decay", beta=1.0)
    fit, pairs = cutoff_gap(f, [4, 8, 16], alpha=1.0, h=0.25, L_factor=8)
    vals = [v for _, v in pairs]
    assert vals[0] > vals[1] > vals[2] > 0
    assert fit.slope < 0


# -- homogenization errors ---------------------------------------------------


def _traj(values, lat, times=(0.0, 1.0)):
    return Trajectory(times=np.array(times), values=np.array(values), coords=lat.coords, dt=0.5,
                      steps=2, scheme="euler", lattice=lat)


def test_l2_errors():
    lat = Lattice(1, 2, 2)
    u = _traj([np.zeros(lat.n_sites), np.ones(lat.n_sites)], lat)
    v = _traj([np.zeros(lat.n_sites), np.ones(lat.n_sites) + 0.5], lat)
    err = l2_errors(u, v)
    assert err[0] == 0.0
    assert err[1] == pytest.approx(0.5 * math.sqrt(lat.total_measure))
    assert sup_l2_error(u, v, outside_sq=np.array([0.0, 1.0])) == pytest.approx(math.sqrt(0.25 * 4 + 1.0))
    with pytest.raises(ValueError):
        l2_errors(u, _traj(v.values, lat, times=(0.0, 2.0)))
    with pytest.raises(ValueError):
        l2_errors(u, np.zeros((3, lat.n_sites)))
