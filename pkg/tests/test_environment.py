import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from stablercm import prf
from stablercm.environment import (
    EnvironmentSpec,
    MarginalLaw,
    MeanProfile,
    centered,
    eval_w,
    make_environment,
    pi,
    time_change,
)
from stablercm.errors import ConfigurationError

DECAYING = MeanProfile("decaying", K=1.0, A=0.5, rho=1.0)


def env_of(kind="piecewise-linear", marginal=None, profile=None, seed=11):
    return make_environment(EnvironmentSpec(kind, marginal or MarginalLaw(), profile or MeanProfile(), seed=seed))


def random_pairs(n, rng, span=200):
    x = rng.integers(-span, span, size=(n, 1))
    y = rng.integers(-span, span, size=(n, 1))
    y[np.all(x == y, axis=1)] += 1
    return x, y


# -- marginal laws -----------------------------------------------------------


@pytest.mark.parametrize("law", [MarginalLaw("uniform02"), MarginalLaw("bernoulli-degenerate", q=0.3),
                                 MarginalLaw("two-point", lo=0.25, hi=3.0)])
def test_marginals_have_unit_mean(law):
    assert law.mean == pytest.approx(1.0, abs=1e-14)
    u = prf.uniforms(prf.pair_keys(5, np.arange(200000)[:, None], np.arange(200000)[:, None] + 1), 1, 1)
    z = law.transform(u)
    assert np.all((z >= 0) & (z <= law.upper))
    assert abs(z.mean() - 1.0) < 4 * math.sqrt(law.variance / len(z))


def test_bernoulli_degenerate_atoms():
    law = MarginalLaw("bernoulli-degenerate", q=0.3)
    u = np.linspace(0, 1, 100001)[:-1]
    z = law.transform(u)
    assert np.mean(z == 0) == pytest.approx(0.3, abs=1e-4)
    assert np.unique(z) == pytest.approx([0.0, 1 / 0.7])
    with pytest.raises(ConfigurationError):
        MarginalLaw("bernoulli-degenerate", q=1.0)


def test_prob_at_least():
    assert MarginalLaw("bernoulli-degenerate", q=0.3).prob_at_least(0.5) == pytest.approx(0.7)
    assert MarginalLaw("uniform02").prob_at_least(0.5) == pytest.approx(0.75)
    assert MarginalLaw("uniform02").prob_at_least(3.0) == 0.0


# -- conductances ------------------------------------------------------------


def test_constant_environment_is_K():
    env = env_of("constant", profile=MeanProfile("constant", K=1.7))
    assert eval_w(env, 3.2, [0], [5]) == 1.7
    assert eval_w(env, 0.0, [2], [2]) == 0.0


@pytest.mark.parametrize("n", [0, 1, 4])
def test_piecewise_linear_at_integer_times(n):
    env = env_of()
    x, y = np.array([[3]]), np.array([[-7]])
    assert eval_w(env, float(n), x, y) == env.z(n + 1, 1, x, y)[0]


def test_piecewise_linear_quarter_time_is_midpoint():
    env = env_of()
    x, y = np.array([[1]]), np.array([[4]])
    expected = 0.5 * (env.z(3, 1, x, y)[0] + env.z(3, 2, x, y)[0])
    assert eval_w(env, 2.25, x, y) == pytest.approx(expected, rel=1e-15)


def test_piecewise_linear_continuous_across_blocks():
    env = env_of()
    x, y = np.array([[1]]), np.array([[4]])
    before = eval_w(env, 3.0 - 1e-12, x, y)
    assert before == pytest.approx(eval_w(env, 3.0, x, y), abs=1e-10)


def test_diagonal_is_zero_and_negative_time_rejected():
    env = env_of()
    assert eval_w(env, 1.3, [4], [4]) == 0.0
    with pytest.raises(ValueError):
        eval_w(env, -0.1, [0], [1])


def test_monte_carlo_mean_near_one():
    env = env_of()
    rng = np.random.default_rng(1)
    x, y = random_pairs(100000, rng, span=10**6)
    w = eval_w(env, 0.7, x, y)
    sigma = math.sqrt(np.var(w) / len(w))
    assert abs(w.mean() - 1.0) < 3 * sigma


@pytest.mark.parametrize("kind", ["piecewise-linear", "trigonometric", "static-iid"])
def test_symmetry_bit_for_bit(kind):
    env = env_of(kind)
    rng = np.random.default_rng(2)
    x, y = random_pairs(10000, rng)
    t = rng.uniform(0, 20, size=10000)
    for tt in t[:20]:
        assert np.array_equal(eval_w(env, tt, x, y), eval_w(env, tt, y, x))


@pytest.mark.parametrize("kind,marginal,profile", [
    ("piecewise-linear", MarginalLaw(), MeanProfile()),
    ("trigonometric", MarginalLaw("two-point", lo=0.2, hi=2.5), MeanProfile()),
    ("static-iid", MarginalLaw("bernoulli-degenerate", q=0.4), MeanProfile()),
    ("modulated-static", MarginalLaw(), DECAYING),
])
def test_bounds(kind, marginal, profile):
    env = env_of(kind, marginal, profile)
    rng = np.random.default_rng(3)
    x, y = random_pairs(5000, rng)
    for t in rng.uniform(0, 10, size=10):
        w = eval_w(env, t, x, y)
        assert np.all(w >= 0) and np.all(w <= env.upper + 1e-12)


def test_pair_independence_proxy():
    env = env_of("static-iid")
    rng = np.random.default_rng(4)
    x, y = random_pairs(2000, rng, span=10**5)
    w = eval_w(env, 0.0, x, y)
    a, b = w[:1000], w[1000:]
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 4 / math.sqrt(1000)


@pytest.mark.parametrize("kind", ["piecewise-linear", "trigonometric"])
def test_temporal_lipschitz(kind):
    env = env_of(kind)
    rng = np.random.default_rng(5)
    x, y = random_pairs(500, rng)
    ts = np.sort(rng.uniform(0, 5, size=200))
    vals = np.array([eval_w(env, t, x, y) for t in ts])
    slopes = np.abs(np.diff(vals, axis=0)) / np.diff(ts)[:, None]
    assert slopes.max() <= env.lipschitz * (1 + 1e-9)


def test_static_and_constant_are_time_invariant():
    for env in (env_of("static-iid"), env_of("constant")):
        assert np.array_equal(eval_w(env, 0.1, [0], [3]), eval_w(env, 17.9, [0], [3]))


def test_seed_determinism():
    a, b = env_of(seed=99), env_of(seed=99)
    x, y = random_pairs(100, np.random.default_rng(0))
    assert np.array_equal(eval_w(a, 2.7, x, y), eval_w(b, 2.7, x, y))
    assert not np.array_equal(eval_w(a, 2.7, x, y), eval_w(env_of(seed=98), 2.7, x, y))


def test_centered_has_zero_mean():
    env = env_of()
    x, y = random_pairs(50000, np.random.default_rng(6), span=10**5)
    c = centered(env, 1.5, x, y)
    assert abs(c.mean()) < 4 * c.std() / math.sqrt(len(c))


def test_inconsistent_specs_rejected():
    with pytest.raises(ConfigurationError):
        EnvironmentSpec("trigonometric", profile=DECAYING)
    with pytest.raises(ConfigurationError):
        EnvironmentSpec("modulated-static", profile=MeanProfile())
    with pytest.raises(ConfigurationError):
        EnvironmentSpec("piecewise-linear", seed=1.5)


# -- mean profile and pi -----------------------------------------------------


def test_pi_constant_profile_is_zero():
    for t in (0.1, 1.0, 50.0):
        assert pi(MeanProfile("constant", K=2.0), t) == 0.0


def test_pi_decaying_closed_form():
    assert pi(DECAYING, 1.0) == pytest.approx(0.125, rel=1e-12)


def test_pi_closed_form_matches_quadrature():
    for t in (0.5, 3.0, 40.0):
        assert pi(DECAYING, t) == pytest.approx(pi(DECAYING, t, quadrature=True), rel=1e-10)


def test_pi_asymptotic_bound():
    t = 1e4
    assert pi(DECAYING, t) <= DECAYING.A**2 / ((2 * DECAYING.rho - 1) * t)


def test_pi_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        pi(DECAYING, 0.0)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(0.0, 1e3))
def test_cumulative_inverse_round_trip(s):
    t = DECAYING.cumulative_inverse(s)
    assert DECAYING.cumulative(t) == pytest.approx(s, abs=1e-12 * max(1.0, s))


def test_cumulative_matches_quadrature():
    val, _ = integrate.quad(lambda r: DECAYING.value(r), 0, 7.5, epsabs=1e-13)
    assert DECAYING.cumulative(7.5) == pytest.approx(val, rel=1e-12)


# -- time change -------------------------------------------------------------


def test_time_change_of_constant_env_is_unit():
    env = env_of("constant", profile=MeanProfile("constant", K=2.5))
    tenv = time_change(env)
    assert eval_w(tenv, 0.7, [0], [3]) == pytest.approx(1.0)
    assert tenv.profile.K == 1.0 and tenv.profile.is_constant


def test_time_change_has_unit_mean_and_scaled_bound():
    env = env_of("modulated-static", profile=DECAYING)
    tenv = time_change(env)
    x, y = random_pairs(50000, np.random.default_rng(7), span=10**5)
    for s in (0.0, 0.8, 5.0):
        w = eval_w(tenv, s, x, y)
        assert abs(w.mean() - 1.0) < 4 * w.std() / math.sqrt(len(w))
        assert w.max() <= tenv.upper + 1e-12
    assert tenv.upper == pytest.approx(env.upper / DECAYING.K1)


def test_time_change_formula():
    env = env_of("modulated-static", profile=DECAYING)
    tenv = time_change(env)
    s = 2.0
    r = DECAYING.cumulative_inverse(s)
    x, y = np.array([[0]]), np.array([[2]])
    assert eval_w(tenv, s, x, y) == pytest.approx(eval_w(env, r, x, y) / DECAYING.value(r), rel=1e-14)
