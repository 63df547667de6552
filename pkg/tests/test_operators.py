import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import zeta

from stablercm.environment import EnvironmentSpec, MarginalLaw, MeanProfile, eval_w, make_environment
from stablercm.lattice import Lattice
from stablercm.operators import (
    PeriodicGrid,
    apply_bar_continuum,
    apply_bar_discrete,
    apply_hat,
    apply_regional,
    apply_scaled,
    build_kernel_table,
    dirichlet_energy,
    grid_for_lattice,
    make_operator,
    pair_energy,
    regional_operator,
    stable_constant,
    stable_constant_closed_form,
)

CONST = MeanProfile("constant", K=1.0)


def const_env(K=1.0):
    return make_environment(EnvironmentSpec("constant", profile=MeanProfile("constant", K=K)))


def pl_env(seed=4):
    return make_environment(EnvironmentSpec("piecewise-linear", MarginalLaw(), seed=seed))


# -- stable constant -----------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.5, 1.9])
def test_stable_constant_matches_closed_form(d, alpha):
    assert stable_constant(d, alpha) == pytest.approx(stable_constant_closed_form(d, alpha), rel=1e-8)


def test_stable_constant_cauchy_case_is_pi():
    assert stable_constant(1, 1.0) == pytest.approx(math.pi, rel=1e-9)


# -- continuum operator ------------------------------------------------------


def test_continuum_annihilates_constants():
    grid = PeriodicGrid(1, 8.0, 64)
    assert np.max(np.abs(apply_bar_continuum(np.full(64, 2.0), grid, 1.3))) < 1e-13


@pytest.mark.parametrize("d", [1, 2])
def test_continuum_fourier_mode(d):
    grid = PeriodicGrid(d, 2 * math.pi, 32)
    xi = np.array([3.0] + [2.0] * (d - 1))
    g = np.cos(grid.points @ xi)
    K, alpha = 1.7, 0.8
    expected = -K * stable_constant(d, alpha) * np.linalg.norm(xi) ** alpha * g
    assert np.max(np.abs(apply_bar_continuum(g, grid, alpha, K) - expected)) < 1e-11


def test_continuum_rejects_wrong_shape():
    with pytest.raises(ValueError):
        apply_bar_continuum(np.zeros(10), PeriodicGrid(1, 4.0, 16), 1.0)


# -- kernel tables -----------------------------------------------------------


def test_kernel_weights_positive_and_symmetric():
    lat = Lattice(d=2, k=2, R=2)
    for mode in ("regional", "periodic"):
        tab = build_kernel_table(lat, 1.2, mode)
        assert np.all(tab.matrix >= 0)
        assert np.allclose(tab.matrix, tab.matrix.T, rtol=1e-14, atol=0)
    # regional offsets are plain differences, so the set is closed under z -> -z
    tab = build_kernel_table(lat, 1.2, "regional")
    assert np.all(np.diag(tab.matrix) == 0)
    z, w = tab.offsets()
    assert np.all(w > 0)
    zs = {tuple(np.round(v, 12)) for v in z}
    assert all(tuple(np.round(-v, 12)) in zs for v in z)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
@pytest.mark.parametrize("k", [1, 4])
def test_periodic_row_sum_closed_form(alpha, k):
    lat = Lattice(d=1, k=k, R=4)
    P = lat.side
    tab = build_kernel_table(lat, alpha, "periodic")
    expected = k**alpha * 2 * zeta(1 + alpha) * (1 - P ** (-1 - alpha))
    assert np.allclose(tab.row_sums, expected, rtol=1e-12)


def test_row_sums_scale_like_k_alpha():
    alpha = 1.3
    sums = [build_kernel_table(Lattice(1, k, 4), alpha, "regional").max_row_sum for k in (4, 8, 16)]
    ratios = [b / a for a, b in zip(sums, sums[1:])]
    assert all(abs(r / 2**alpha - 1) < 0.05 for r in ratios)


def test_periodic_tail_below_tolerance_in_two_dimensions():
    lat = Lattice(d=2, k=1, R=3)
    tab = build_kernel_table(lat, 1.0, "periodic", tail_tol=1e-3)
    assert tab.tail_mass <= 1e-3 * tab.max_row_sum


def test_regional_truncation_tail_accounting():
    lat = Lattice(1, 1, 16)
    env = const_env()
    f = np.random.default_rng(0).normal(size=lat.n_sites)
    short = make_operator("scaled", lat, 1.5, env=env, rho_trunc=6.0)
    full = make_operator("scaled", lat, 1.5, env=env)
    assert short.kernel.tail_mass > 0
    assert full.kernel.tail_mass == 0
    gap = np.max(np.abs(short.apply(0.0, f) - full.apply(0.0, f)))
    assert gap <= short.kernel.tail_mass * 2 * np.max(np.abs(f))


# -- scaled / regional -------------------------------------------------------


def test_scaled_kills_constants():
    lat = Lattice(1, 4, 2)
    op = make_operator("scaled", lat, 0.7, env=pl_env())
    assert np.max(np.abs(op.apply(0.3, np.full(lat.n_sites, 3.25)))) < 1e-12


@pytest.mark.parametrize("mode", ["regional", "periodic"])
def test_constant_environment_equals_bar_discrete_bitwise(mode):
    lat = Lattice(1, 8, 2)
    tab = build_kernel_table(lat, 1.5, mode)
    K = 1.3
    scaled = make_operator("scaled", lat, 1.5, env=const_env(K), kernel=tab)
    bar = make_operator("bar-discrete", lat, 1.5, profile=MeanProfile("constant", K=K), kernel=tab)
    f = np.random.default_rng(1).normal(size=lat.n_sites)
    assert np.array_equal(apply_scaled(scaled, 0.4, f), apply_bar_discrete(bar, 0.4, f))


def test_three_term_hand_sum():
    lat = Lattice(1, 1, 2)  # sites -1, 0, 1, 2
    op = make_operator("scaled", lat, 1.5, env=const_env())
    f = (lat.int_coords[:, 0] == 0).astype(float)
    Lf = op.apply(0.0, f)
    assert Lf[lat.index_of([1])] == pytest.approx(1.0, abs=1e-15)
    # site 0 loses mass to its three neighbours
    assert Lf[lat.index_of([0])] == pytest.approx(-(1 + 1 + 2**-2.5), rel=1e-14)


def test_scaled_matches_direct_pair_sum():
    lat = Lattice(1, 2, 2)
    env = pl_env()
    alpha = 0.9
    op = make_operator("scaled", lat, alpha, env=env)
    f = np.random.default_rng(2).normal(size=lat.n_sites)
    t = 0.37
    z = lat.int_coords
    direct = np.zeros(lat.n_sites)
    for i in range(lat.n_sites):
        for j in range(lat.n_sites):
            if i != j:
                w = eval_w(env, 2**alpha * t, z[i], z[j])
                dist = abs(z[i, 0] - z[j, 0]) / 2
                direct[i] += (f[j] - f[i]) * w * 0.5 * dist ** (-1 - alpha)
    assert np.allclose(op.apply(t, f), direct, rtol=1e-12, atol=1e-12)


def test_lattice_mismatch_is_an_argument_error():
    op = make_operator("scaled", Lattice(1, 1, 2), 1.0, env=const_env())
    with pytest.raises(ValueError):
        op.apply(0.0, np.zeros(5))


def test_regional_singleton_is_zero():
    out = apply_regional(pl_env(), np.array([[3]]), 0.5, np.array([7.0]), alpha=1.2)
    assert np.array_equal(out, [0.0])


def test_regional_on_full_box_equals_scaled_with_unit_k():
    lat = Lattice(1, 1, 4)
    env = pl_env()
    f = np.random.default_rng(3).normal(size=lat.n_sites)
    a = apply_regional(env, lat, 1.7, f, alpha=1.1)
    b = make_operator("scaled", lat, 1.1, env=env).apply(1.7, f)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.floats(0, 10), alpha=st.floats(0.2, 1.9), r=st.integers(1, 16))
def test_regional_algebra(seed, t, alpha, r):
    env = pl_env(seed)
    sites = np.arange(-r + 1, r + 1)[:, None]
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=len(sites)), rng.normal(size=len(sites))
    Lf = apply_regional(env, sites, t, f, alpha=alpha)
    Lg = apply_regional(env, sites, t, g, alpha=alpha)
    scale = np.abs(f).sum() * max(1.0, np.abs(Lf).max())
    # mass antisymmetry, self-adjointness, negativity and the energy identity
    assert abs(Lf.sum()) <= 1e-10 * scale
    assert f @ Lg == pytest.approx(g @ Lf, rel=1e-10, abs=1e-12)
    assert f @ Lf <= 1e-12
    energy = dirichlet_energy(env, sites, t, f, alpha=alpha)
    assert -(f @ Lf) == pytest.approx(energy, rel=1e-10, abs=1e-13)


def test_dirichlet_energy_examples():
    sites = np.array([[0], [1]])
    assert dirichlet_energy(const_env(), sites, 0.0, np.array([0.0, 1.0]), alpha=1.5) == pytest.approx(1.0)
    assert dirichlet_energy(pl_env(), np.arange(8)[:, None], 2.0, np.full(8, 4.0), alpha=1.5) == 0.0


def test_pair_energy_vector_fields_are_componentwise():
    rates = regional_operator(pl_env(), np.arange(6)[:, None], 1.4).rate_matrix(0.2)
    rng = np.random.default_rng(5)
    f = rng.normal(size=(6, 2))
    assert pair_energy(rates, f) == pytest.approx(pair_energy(rates, f[:, 0]) + pair_energy(rates, f[:, 1]))


# -- hat and compensated forms ---------------------------------------------------


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.5])
def test_hat_with_constant_environment_matches_compensated_bar(alpha):
    lat = Lattice(1, 4, 2)
    tab = build_kernel_table(lat, alpha, "periodic")
    hat = make_operator("hat", lat, alpha, env=const_env(), kernel=tab)
    bar = make_operator("bar-discrete", lat, alpha, profile=CONST, kernel=tab)
    x = lat.coords[:, 0]
    f, grad = np.sin(x), np.cos(x)
    a = apply_hat(hat, 0.2, f, grad)
    b = apply_bar_discrete(bar, 0.2, f, grad, compensated=True)
    assert np.max(np.abs(a - b)) < 1e-12


def test_hat_needs_gradient():
    lat = Lattice(1, 1, 2)
    op = make_operator("hat", lat, 1.5, env=const_env())
    with pytest.raises(ValueError):
        apply_hat(op, 0.0, np.zeros(lat.n_sites), None)
    bar = make_operator("bar-discrete", lat, 1.5, profile=CONST)
    with pytest.raises(ValueError):
        apply_bar_discrete(bar, 0.0, np.zeros(lat.n_sites), compensated=True)


def test_hat_annihilates_linear_functions_above_one():
    lat = Lattice(1, 2, 4)
    op = make_operator("hat", lat, 1.5, env=pl_env(), mode="regional")
    a = 0.7
    out = apply_hat(op, 0.3, a * lat.coords[:, 0], np.full(lat.n_sites, a))
    assert np.max(np.abs(out)) < 1e-12


def test_hat_on_linear_functions_below_one_leaves_the_long_jumps():
    lat = Lattice(1, 2, 4)
    alpha, k, a = 0.7, 2, 0.7
    env = pl_env()
    op = make_operator("hat", lat, alpha, env=env, mode="regional")
    t = 0.3
    out = apply_hat(op, t, a * lat.coords[:, 0], np.full(lat.n_sites, a))
    x = lat.coords[:, 0]
    z = lat.int_coords
    expected = np.zeros(lat.n_sites)
    for i in range(lat.n_sites):
        for j in range(lat.n_sites):
            dz = x[j] - x[i]
            if abs(dz) > 1.0:
                w = eval_w(env, k**alpha * t, z[i], z[j])
                expected[i] += a * dz * w * abs(dz) ** (-1 - alpha) / k
    assert np.allclose(out, expected, rtol=1e-12, atol=1e-12)


# -- discrete symbol ---------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_plane_wave_is_an_eigenfunction(alpha):
    lat = Lattice(1, 4, 2)
    op = make_operator("bar-discrete", lat, alpha, profile=CONST, mode="periodic")
    L = 2 * lat.R
    xi = 2 * math.pi * 3 / L
    f = np.cos(xi * lat.coords[:, 0])
    k = lat.k
    n = np.arange(1, 2_000_001, dtype=float)
    symbol = 2 * k**alpha * np.sum(n ** (-1 - alpha) * (np.cos(xi * n / k) - 1.0))
    tail = 4 * k**alpha * n[-1] ** (-alpha) / alpha
    out = apply_bar_discrete(op, 0.0, f)
    assert np.max(np.abs(out - symbol * f)) <= tail + 1e-10


def test_bar_discrete_approaches_continuum():
    f = lambda x: np.exp(-4 * x**2)
    errs = []
    for k in (8, 16, 32):
        lat = Lattice(1, k, 4)
        op = make_operator("bar-discrete", lat, 1.0, profile=CONST, mode="periodic")
        grid = grid_for_lattice(lat)
        cont = apply_bar_continuum(f(grid.points[..., 0]), grid, 1.0)
        errs.append(np.sqrt(np.sum((op.apply(0.0, f(lat.coords[:, 0])) - cont) ** 2) / k))
    assert errs[0] > errs[1] > errs[2]


def test_family_requirements():
    lat = Lattice(1, 1, 2)
    with pytest.raises(ValueError):
        make_operator("scaled", lat, 1.0)
    with pytest.raises(ValueError):
        make_operator("bar-discrete", lat, 1.0)
    with pytest.raises(ValueError):
        make_operator("nonsense", lat, 1.0, env=const_env())
