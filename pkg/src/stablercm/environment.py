"""Time-dependent random conductances ``w_{t,x,y}`` on ``Z^d``.

Conductances are never stored.  Each environment expresses ``w_{t,x,y}`` as a
finite combination ``sum_j c_j(t) Z_j(x, y)`` of i.i.d. bounded variables
``Z_j`` that are realized on demand by a counter-mode hash of
``(seed, canonical pair, time block, slot)``.  Slot 0 is reserved for the
deterministic unit field, so a term ``(c, block, 0)`` contributes ``c``.

Supported constructions:

* ``constant``: ``w = K(t)`` (deterministic, spatially constant);
* ``static-iid``: ``w = K * Z``;
* ``piecewise-linear``: linear interpolation between ``Z^{(1)}_{(n+1)}``,
  ``Z^{(2)}_{(n+1)}`` and ``Z^{(1)}_{(n+2)}`` on ``[n, n+1/2]`` and ``[n+1/2, n+1]``;
* ``trigonometric``: the same nodes blended with ``cos^2`` / ``sin^2`` weights;
* ``modulated-static``: ``w = f_1(t) Z^{(1)} + f_2(t) Z^{(2)}`` with
  ``f_1 + f_2 = K(t)`` following a decaying mean profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import prf
from .errors import ConfigurationError

MARGINAL_KINDS = ("uniform02", "bernoulli-degenerate", "two-point")
PROFILE_KINDS = ("constant", "decaying")
ENVIRONMENT_KINDS = ("constant", "static-iid", "piecewise-linear", "trigonometric", "modulated-static")

Term = tuple[float, int, int]


@dataclass(frozen=True)
class MarginalLaw:
    """Law of the i.i.d. building blocks ``Z``; every supported law has mean 1.

    ``bernoulli-degenerate`` puts mass ``q`` at 0 and ``1 - q`` at ``1/(1-q)``.
    ``two-point`` takes values ``lo < 1 < hi`` with the weight on ``lo`` fixed
    by the unit mean.
    """

    kind: str = "uniform02"
    q: float = 0.0
    lo: float = 0.5
    hi: float = 2.0

    def __post_init__(self):
        if self.kind not in MARGINAL_KINDS:
            raise ConfigurationError(f"unknown marginal kind {self.kind!r}; expected one of {MARGINAL_KINDS}")
        if self.kind == "bernoulli-degenerate" and not 0.0 <= self.q < 1.0:
            raise ConfigurationError(f"bernoulli-degenerate needs q in [0, 1), got q={self.q}")
        if self.kind == "two-point" and not (0.0 <= self.lo < 1.0 < self.hi):
            raise ConfigurationError(f"two-point needs 0 <= lo < 1 < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def upper(self) -> float:
        if self.kind == "uniform02":
            return 2.0
        if self.kind == "bernoulli-degenerate":
            return 1.0 / (1.0 - self.q)
        return self.hi

    @property
    def p_lo(self) -> float:
        return (self.hi - 1.0) / (self.hi - self.lo)

    @property
    def mean(self) -> float:
        if self.kind == "uniform02":
            return 1.0
        if self.kind == "bernoulli-degenerate":
            return (1.0 - self.q) * self.upper
        return self.p_lo * self.lo + (1.0 - self.p_lo) * self.hi

    @property
    def variance(self) -> float:
        if self.kind == "uniform02":
            return 1.0 / 3.0
        if self.kind == "bernoulli-degenerate":
            return self.q / (1.0 - self.q)
        p = self.p_lo
        return p * self.lo**2 + (1 - p) * self.hi**2 - 1.0

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on ``[0, 1)`` to samples of the law."""
        if self.kind == "uniform02":
            return 2.0 * u
        if self.kind == "bernoulli-degenerate":
            return np.where(u < self.q, 0.0, self.upper)
        return np.where(u < self.p_lo, self.lo, self.hi)

    def prob_at_least(self, x: float) -> float:
        """``P(Z >= x)``."""
        if x <= 0.0:
            return 1.0
        if self.kind == "uniform02":
            return min(1.0, max(0.0, 1.0 - x / 2.0))
        if self.kind == "bernoulli-degenerate":
            return 1.0 - self.q if x <= self.upper else 0.0
        if x <= self.lo:
            return 1.0
        return 1.0 - self.p_lo if x <= self.hi else 0.0


@dataclass(frozen=True)
class MeanProfile:
    """Mean ``K(t) = E w_{t,x,y}``: constant ``K`` or ``K + A (1+t)^{-rho}`` with ``rho > 1/2``."""

    kind: str = "constant"
    K: float = 1.0
    A: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigurationError(f"unknown mean profile {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.K <= 0:
            raise ConfigurationError(f"limit mean K must be positive, got {self.K}")
        if self.kind == "decaying":
            if self.rho <= 0.5:
                raise ConfigurationError(f"decaying profile needs rho > 1/2, got rho={self.rho}")
            if self.K + min(self.A, 0.0) <= 0:
                raise ConfigurationError("decaying profile must stay bounded away from zero")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.A == 0.0

    @property
    def K1(self) -> float:
        return self.K if self.kind == "constant" else self.K + min(self.A, 0.0)

    @property
    def K2(self) -> float:
        return self.K if self.kind == "constant" else self.K + max(self.A, 0.0)

    @property
    def slope_bound(self) -> float:
        """``sup |K'(t)|``."""
        return 0.0 if self.kind == "constant" else abs(self.A) * self.rho

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.K)
        else:
            out = self.K + self.A * (1.0 + t) ** (-self.rho)
        return out[()] if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.zeros_like(t)
        else:
            out = -self.A * self.rho * (1.0 + t) ** (-self.rho - 1.0)
        return out[()] if out.ndim == 0 else out

    def cumulative(self, t: float) -> float:
        """``a(t) = int_0^t K(r) dr``."""
        if self.kind == "constant":
            return self.K * t
        if self.rho == 1.0:
            tail = math.log1p(t)
        else:
            tail = ((1.0 + t) ** (1.0 - self.rho) - 1.0) / (1.0 - self.rho)
        return self.K * t + self.A * tail

    def cumulative_inverse(self, s: float, tol: float = 1e-12) -> float:
        """Solve ``a(t) = s`` by monotone bisection on ``[s/K2, s/K1]``."""
        if s < 0:
            raise ValueError(f"time must be nonnegative, got {s}")
        if self.kind == "constant":
            return s / self.K
        lo, hi = s / self.K2, s / self.K1
        while hi - lo > tol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if self.cumulative(mid) < s:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def deviation_integral(self, t: float) -> float:
        """``int_0^t |K(s) - K|^2 ds`` in closed form."""
        if self.kind == "constant" or self.A == 0.0:
            return 0.0
        e = 1.0 - 2.0 * self.rho
        return self.A**2 * (1.0 - (1.0 + t) ** e) / (-e)


def pi(profile: MeanProfile, t: float, *, quadrature: bool = False) -> float:
    """Cesaro deviation ``pi(t) = (1/t) int_0^t |K(s) - K|^2 ds``.

    Closed form by default; ``quadrature=True`` uses adaptive quadrature at
    relative tolerance 1e-10 instead.
    """
    if t <= 0:
        raise ValueError(f"pi(t) needs t > 0, got t={t}")
    if profile.is_constant:
        return 0.0
    if quadrature:
        val, _ = integrate.quad(
            lambda s: (profile.value(s) - profile.K) ** 2, 0.0, t, epsrel=1e-10, epsabs=0.0, limit=500
        )
        return val / t
    return profile.deviation_integral(t) / t


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str = "piecewise-linear"
    marginal: MarginalLaw = field(default_factory=MarginalLaw)
    profile: MeanProfile = field(default_factory=MeanProfile)
    seed: int = 0
    split: float = 0.5

    def __post_init__(self):
        if self.kind not in ENVIRONMENT_KINDS:
            raise ConfigurationError(f"unknown environment kind {self.kind!r}; expected one of {ENVIRONMENT_KINDS}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigurationError(f"seed must be an integer, got {self.seed!r}")
        if self.kind in ("piecewise-linear", "trigonometric"):
            if not (self.profile.kind == "constant" and self.profile.K == 1.0):
                raise ConfigurationError(f"{self.kind} environments have mean profile constant(1)")
        if self.kind == "static-iid" and self.profile.kind != "constant":
            raise ConfigurationError("static-iid environments need a constant mean profile")
        if self.kind == "modulated-static":
            if self.profile.kind != "decaying":
                raise ConfigurationError("modulated-static environments need the decaying mean profile")
            if not 0.0 < self.split < 1.0:
                raise ConfigurationError(f"split must lie in (0, 1), got {self.split}")


class Environment:
    """Evaluator of ``w_{t,x,y}`` for ``t >= 0`` and integer sites ``x, y``.

    Instances are immutable and evaluation is a pure function of the inputs.
    """

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec

    def __repr__(self):
        return f"Environment({self.spec!r})"

    @property
    def profile(self) -> MeanProfile:
        return self.spec.profile

    @property
    def seed(self) -> int:
        return int(self.spec.seed)

    @property
    def is_deterministic(self) -> bool:
        return self.spec.kind == "constant"

    @property
    def is_time_invariant(self) -> bool:
        return self.spec.kind == "static-iid" or (self.spec.kind == "constant" and self.profile.is_constant)

    @property
    def upper(self) -> float:
        """Uniform bound ``C1`` with ``0 <= w <= C1``."""
        zmax = self.spec.marginal.upper
        kind = self.spec.kind
        if kind == "constant":
            return self.profile.K2
        if kind == "static-iid":
            return self.profile.K * zmax
        if kind == "modulated-static":
            return self.profile.K2 * zmax
        return zmax

    @property
    def lipschitz(self) -> float:
        """Bound on ``|w_t - w_s| / |t - s|``."""
        zmax = self.spec.marginal.upper
        kind = self.spec.kind
        if kind == "piecewise-linear":
            return 2.0 * zmax
        if kind == "trigonometric":
            return math.pi * zmax
        if kind == "modulated-static":
            return self.profile.slope_bound * zmax
        if kind == "constant":
            return self.profile.slope_bound
        return 0.0

    def mean(self, t):
        return self.profile.value(t)

    def terms(self, t: float) -> list[Term]:
        """Decomposition ``w_t = sum c * Z(block, slot)``; slot 0 is the unit field."""
        if t < 0:
            raise ValueError(f"environment time must be nonnegative, got t={t}")
        kind = self.spec.kind
        if kind == "constant":
            return [(float(self.profile.value(t)), 0, 0)]
        if kind == "static-iid":
            return [(self.profile.K, 1, 1)]
        if kind == "modulated-static":
            kt = float(self.profile.value(t))
            return [(self.spec.split * kt, 0, 1), ((1.0 - self.spec.split) * kt, 0, 2)]
        n = math.floor(t)
        s = t - n
        if kind == "piecewise-linear":
            if s <= 0.5:
                return [(1.0 - 2.0 * s, n + 1, 1), (2.0 * s, n + 1, 2)]
            return [(2.0 - 2.0 * s, n + 1, 2), (2.0 * s - 1.0, n + 2, 1)]
        # trigonometric
        if s <= 0.5:
            c = math.cos(s * math.pi) ** 2
            return [(c, n + 1, 1), (1.0 - c, n + 1, 2)]
        c = math.cos((1.0 - s) * math.pi) ** 2
        return [(1.0 - c, n + 1, 2), (c, n + 2, 1)]

    def pair_keys(self, x, y) -> np.ndarray:
        return prf.pair_keys(self.seed, np.asarray(x), np.asarray(y))

    def z_from_keys(self, keys: np.ndarray, block: int, slot: int) -> np.ndarray:
        if slot == 0:
            return np.ones(keys.shape, dtype=float)
        return self.spec.marginal.transform(prf.uniforms(keys, block, slot))

    def z(self, block: int, slot: int, x, y) -> np.ndarray:
        """The building block ``Z^{(slot,(x,y))}_{(block)}`` for integer sites ``x``, ``y``."""
        x, y = _as_sites(x), _as_sites(y)
        return self.z_from_keys(self.pair_keys(x, y), block, slot)

    def eval_keys(self, t: float, keys: np.ndarray) -> np.ndarray:
        out = np.zeros(keys.shape, dtype=float)
        for c, block, slot in self.terms(t):
            if c != 0.0:
                out += c * self.z_from_keys(keys, block, slot)
        return out

    def __call__(self, t: float, x, y) -> np.ndarray:
        return eval_w(self, t, x, y)


_UNIT_PROFILE = MeanProfile("constant", 1.0)


class TimeChangedEnvironment(Environment):
    """``w~_{t,x,y} = w_{a^{-1}(t),x,y} / K(a^{-1}(t))`` with ``a(t) = int_0^t K``."""

    def __init__(self, base: Environment):
        if base.profile.K1 <= 0:
            raise ConfigurationError("time change needs a mean profile bounded away from zero")
        # keys and marginals come from the base spec; only the mean is replaced
        super().__init__(base.spec)
        self.base = base

    def __repr__(self):
        return f"TimeChangedEnvironment({self.base!r})"

    @property
    def profile(self) -> MeanProfile:
        return _UNIT_PROFILE

    @property
    def is_deterministic(self) -> bool:
        return self.base.is_deterministic

    @property
    def is_time_invariant(self) -> bool:
        return self.base.is_deterministic or (self.base.is_time_invariant and self.base.profile.is_constant)

    @property
    def upper(self) -> float:
        return self.base.upper / self.base.profile.K1

    @property
    def lipschitz(self) -> float:
        p = self.base.profile
        return (self.base.lipschitz / p.K1 + self.base.upper * p.slope_bound / p.K1**2) / p.K1

    def original_time(self, t: float) -> float:
        return self.base.profile.cumulative_inverse(t)

    def terms(self, t: float) -> list[Term]:
        s = self.original_time(t)
        scale = 1.0 / float(self.base.profile.value(s))
        return [(c * scale, block, slot) for c, block, slot in self.base.terms(s)]

    def z_from_keys(self, keys, block, slot):
        return self.base.z_from_keys(keys, block, slot)


def make_environment(spec: EnvironmentSpec) -> Environment:
    return Environment(spec)


def time_change(env: Environment) -> TimeChangedEnvironment:
    return TimeChangedEnvironment(env)


def _as_sites(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x.reshape(1, -1)
    return x


def eval_w(env: Environment, t: float, x, y) -> np.ndarray:
    """Conductance ``w_{t,x,y}``; zero on the diagonal.

    ``x`` and ``y`` are integer sites, either single points (scalar or length-d)
    or arrays of shape ``(n, d)``.  Returns a float for single points.
    """
    if t < 0:
        raise ValueError(f"environment time must be nonnegative, got t={t}")
    single = np.asarray(x).ndim <= 1 and np.asarray(y).ndim <= 1
    xs, ys = _as_sites(x), _as_sites(y)
    keys = env.pair_keys(xs, ys)
    out = env.eval_keys(t, keys)
    out[np.all(xs == ys, axis=1)] = 0.0
    return float(out[0]) if single else out


def centered(env: Environment, t: float, x, y) -> np.ndarray:
    """``xi_{t,x,y} = w_{t,x,y} - K(t)``."""
    return eval_w(env, t, x, y) - env.mean(t)


def profile_grid_bounds(profile: MeanProfile, ts: Sequence[float]) -> tuple[float, float]:
    vals = np.asarray(profile.value(np.asarray(ts, dtype=float)))
    return float(vals.min()), float(vals.max())
