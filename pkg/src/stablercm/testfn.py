"""Initial data, sources and cutoffs with analytic derivatives.

Profiles are radial functions ``f(x) = A F(|y|^2)`` with ``y = (x - c) / r``.
Writing derivatives through ``F(rho)`` gives closed forms up to third order:

    d_i f    = A 2 F' y_i / r
    d_ij f   = A (4 F'' y_i y_j + 2 F' delta_ij) / r^2
    d_ijk f  = A (8 F''' y_i y_j y_k + 4 F'' (delta_ij y_k + delta_ik y_j + delta_jk y_i)) / r^3
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError
from .operators.spectral import PeriodicGrid, apply_bar_continuum

PROFILE_KINDS = ("compact-bump", "polynomial-decay", "modulated-decay")
SOURCE_KINDS = ("separable", "duhamel-cutoff")


@dataclass(frozen=True)
class SmoothProfile:
    """Radial test profile.

    ``compact-bump`` is the standard mollifier ``A exp(-1 / (1 - |y|^2))`` on
    ``|y| < 1`` (support radius ``radius``); ``polynomial-decay`` is
    ``A (1 + |y|^2)^{-(d+beta)/2}``, which decays like ``|x|^{-d-beta}``
    together with all its derivatives.  ``modulated-decay`` multiplies the
    polynomial envelope by ``cos(frequency * (x - c)_1)``; its derivatives
    decay no faster than the envelope itself, so it saturates the decay
    condition at every order.
    """

    kind: str = "compact-bump"
    d: int = 1
    amplitude: float = 1.0
    center: tuple[float, ...] | None = None
    radius: float = 1.0
    beta: float = math.inf
    frequency: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigurationError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if self.radius <= 0:
            raise ConfigurationError(f"profile radius must be positive, got {self.radius}")
        if self.kind != "compact-bump" and not (0 < self.beta < math.inf):
            raise ConfigurationError(f"{self.kind} needs a finite beta > 0, got {self.beta}")
        if self.center is not None and len(self.center) != self.d:
            raise ConfigurationError(f"center {self.center} does not have dimension {self.d}")

    @property
    def support_radius(self) -> float:
        return self.radius if self.kind == "compact-bump" else math.inf

    @property
    def decay_beta(self) -> float:
        return math.inf if self.kind == "compact-bump" else self.beta

    def _radial(self, rho: np.ndarray) -> tuple[np.ndarray, ...]:
        """``F`` and its first three derivatives in ``rho = |y|^2``."""
        if self.kind == "compact-bump":
            inside = rho < 1.0
            q = np.zeros_like(rho)
            q[inside] = 1.0 / (1.0 - rho[inside])
            F = np.where(inside, np.exp(-q), 0.0)
            return F, -(q**2) * F, (q**4 - 2 * q**3) * F, (-(q**6) + 6 * q**5 - 6 * q**4) * F
        p = 0.5 * (self.d + self.beta)
        b = 1.0 + rho
        return b**-p, -p * b ** (-p - 1), p * (p + 1) * b ** (-p - 2), -p * (p + 1) * (p + 2) * b ** (-p - 3)

    def _y(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            x = x[..., None] if self.d == 1 else x
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=float)
        return (x - c) / self.radius

    def _radial_derivs(self, x, order: int) -> list[np.ndarray]:
        """Derivatives of the radial part up to ``order`` (value, gradient, Hessian, third)."""
        y = self._y(x)
        F, F1, F2, F3 = self._radial(np.sum(y * y, axis=-1))
        A, r = self.amplitude, self.radius
        out = [A * F]
        if order >= 1:
            out.append(A * 2.0 * F1[..., None] * y / r)
        if order >= 2:
            eye = np.eye(self.d)
            hess = 4.0 * F2[..., None, None] * y[..., :, None] * y[..., None, :] + 2.0 * F1[..., None, None] * eye
            out.append(A * hess / r**2)
        if order >= 3:
            eye = np.eye(self.d)
            yyy = y[..., :, None, None] * y[..., None, :, None] * y[..., None, None, :]
            sym = (
                eye[:, :, None] * y[..., None, None, :]
                + eye[:, None, :] * y[..., None, :, None]
                + eye[None, :, :] * y[..., :, None, None]
            )
            out.append(A * (8.0 * F3[..., None, None, None] * yyy + 4.0 * F2[..., None, None, None] * sym) / r**3)
        return out

    def _derivs(self, x, order: int) -> np.ndarray:
        rad = self._radial_derivs(x, order)
        if self.kind != "modulated-decay":
            return rad[order]
        # product rule with the carrier m(x) = cos(w s), s = (x - c)_1
        w = self.frequency
        s = self._y(x)[..., 0] * self.radius
        m = [np.cos(w * s), -w * np.sin(w * s), -(w**2) * np.cos(w * s), w**3 * np.sin(w * s)]
        e = np.zeros(self.d)
        e[0] = 1.0
        if order == 0:
            return m[0] * rad[0]
        if order == 1:
            return m[0][..., None] * rad[1] + (m[1] * rad[0])[..., None] * e
        ee = np.multiply.outer(e, e)
        if order == 2:
            g = rad[1]
            cross = g[..., :, None] * e[None, :] + e[:, None] * g[..., None, :]
            return m[0][..., None, None] * rad[2] + m[1][..., None, None] * cross + (m[2] * rad[0])[..., None, None] * ee
        g, H = rad[1], rad[2]
        cross_h = H[..., :, :, None] * e + H[..., :, None, :] * e[:, None] + H[..., None, :, :] * e[:, None, None]
        cross_g = (
            g[..., :, None, None] * ee[None, :, :]
            + g[..., None, :, None] * ee[:, None, :]
            + g[..., None, None, :] * ee[:, :, None]
        )
        return (
            m[0][..., None, None, None] * rad[3]
            + m[1][..., None, None, None] * cross_h
            + m[2][..., None, None, None] * cross_g
            + (m[3] * rad[0])[..., None, None, None] * np.multiply.outer(ee, e)
        )

    def value(self, x) -> np.ndarray:
        return self._derivs(x, 0)

    def gradient(self, x) -> np.ndarray:
        return self._derivs(x, 1)

    def hessian(self, x) -> np.ndarray:
        return self._derivs(x, 2)

    def third(self, x) -> np.ndarray:
        return self._derivs(x, 3)

    def __call__(self, x) -> np.ndarray:
        return self.value(x)

    def decay_certificate(self, r_max: float = 1e4, n: int = 400) -> float:
        """``max_{i <= 3} sup_r |grad^i f|(1 + r)^{d+beta}`` on a log-spaced radial ray.

        For compact bumps the weight is 1 (any ``beta`` is admissible because
        the profile vanishes outside its support).
        """
        r = np.concatenate([[0.0], np.logspace(-3, math.log10(r_max), n)])
        c = np.zeros(self.d) if self.center is None else np.asarray(self.center, dtype=float)
        e = np.zeros(self.d)
        e[0] = 1.0
        x = c + r[:, None] * e
        weight = np.ones_like(r) if self.kind == "compact-bump" else (1.0 + r) ** (self.d + self.beta)
        mags = [
            np.abs(self.value(x)),
            np.linalg.norm(self.gradient(x), axis=-1),
            np.linalg.norm(self.hessian(x).reshape(len(r), -1), axis=-1),
            np.linalg.norm(self.third(x).reshape(len(r), -1), axis=-1),
        ]
        return float(max(np.max(m * weight) for m in mags))


def make_initial_g(profile: SmoothProfile) -> SmoothProfile:
    """Initial datum of the equations; must be compactly supported."""
    if profile.kind != "compact-bump":
        raise ConfigurationError("initial data must be compactly supported (use a compact-bump profile)")
    return profile


# ---------------------------------------------------------------------------
# cutoffs


def _quintic_step(tau: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``1 - (10 tau^3 - 15 tau^4 + 6 tau^5)`` clamped to ``[0, 1]``, with two derivatives."""
    t = np.clip(tau, 0.0, 1.0)
    inside = (tau > 0.0) & (tau < 1.0)
    v = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    d1 = np.where(inside, -30.0 * t**2 * (1.0 - t) ** 2, 0.0)
    d2 = np.where(inside, -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t), 0.0)
    return v, d1, d2


@dataclass(frozen=True)
class Cutoff:
    """Values, gradients and Hessians of ``psi_R`` at a set of points."""

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


def cutoff_psi(R: float, x) -> Cutoff:
    """``psi_R(x) = psi(x / R)``: 1 on ``|x| <= R/2``, 0 on ``|x| >= R``.

    The radial profile is the quintic bridge matching value, first and second
    derivative at both ends, so ``psi`` is ``C^2``.
    """
    if R < 1:
        raise ValueError(f"cutoff radius must be at least 1, got R={R}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    d = x.shape[-1]
    s = np.linalg.norm(x, axis=-1)
    # bridge variable on [R/2, R]
    v, p1, p2 = _quintic_step(2.0 * s / R - 1.0)
    p1 = p1 * 2.0 / R
    p2 = p2 * 4.0 / R**2
    safe = np.where(s > 0, s, 1.0)
    e = x / safe[..., None]
    grad = p1[..., None] * e
    eye = np.eye(d)
    ee = e[..., :, None] * e[..., None, :]
    hess = p2[..., None, None] * ee + (p1 / safe)[..., None, None] * (eye - ee)
    return Cutoff(value=v, gradient=grad, hessian=hess)


def smooth_step(r) -> tuple[np.ndarray, np.ndarray]:
    """``C^infinity`` step: 1 for ``r <= 1``, 0 for ``r >= 2``, and its derivative."""
    r = np.asarray(r, dtype=float)
    s = np.clip(r - 1.0, 0.0, 1.0)
    inside = (s > 0.0) & (s < 1.0)
    si = np.where(inside, s, 0.5)
    a = np.exp(-1.0 / (1.0 - si))
    b = np.exp(-1.0 / si)
    val = np.where(inside, a / (a + b), np.where(s <= 0.0, 1.0, 0.0))
    # d/ds [a/(a+b)] = (a' b - a b') / (a+b)^2 with a' = -a/(1-s)^2, b' = b/s^2
    da = -a / (1.0 - si) ** 2
    db = b / si**2
    der = np.where(inside, (da * b - a * db) / (a + b) ** 2, 0.0)
    return val, der


# ---------------------------------------------------------------------------
# sources


@dataclass
class SourceTerm:
    """Source ``h = d_t f - Lbar f`` for a chosen ``f`` with ``f(0, .) = g``.

    ``separable``
        ``f(t, x) = a(t) F(x)`` with ``a`` a polynomial, ``a(0) = 1`` and
        ``F = g``; ``h = a' F - a Lbar F`` is exact in time.
    ``duhamel-cutoff``
        ``f = phi(|x| - n) (Pbar_t g)`` with the smooth step ``phi``; then
        ``h = phi Lbar(Pbar_t g) - Lbar(phi Pbar_t g)``, tabulated on
        ``nodes`` times and interpolated by a cubic spline in ``t``.

    Calling the source as ``h(t, x)`` looks up grid values at the points
    ``x``, which must be grid points (the torus is wrapped).
    """

    kind: str
    grid: PeriodicGrid
    alpha: float
    K: float
    g: SmoothProfile
    T: float
    time_coeffs: tuple[float, ...] = (1.0,)
    cutoff_n: float = 1.0
    nodes: int = 64
    decay_C0: float = field(init=False, default=math.nan)

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigurationError(f"unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        if self.time_coeffs[0] != 1.0:
            raise ConfigurationError("the time modulation must satisfy a(0) = 1 so that f(0) = g")
        if self.nodes < 64 and self.kind == "duhamel-cutoff":
            raise ConfigurationError("the time table needs at least 64 nodes")
        self._pts = self.grid.points
        self._g = self.g.value(self._pts)
        if self.kind == "separable":
            self._Lg = apply_bar_continuum(self._g, self.grid, self.alpha, self.K)
            self.decay_C0 = self.g.decay_certificate()
        else:
            self._build_table()
        self._lookup_key = None
        self._lookup_idx = None

    # -- f itself -----------------------------------------------------------
    def _a(self, t: float) -> tuple[float, float]:
        c = self.time_coeffs
        a = sum(ci * t**i for i, ci in enumerate(c))
        da = sum(i * ci * t ** (i - 1) for i, ci in enumerate(c) if i > 0)
        return a, da

    @cached_property
    def _mult(self) -> np.ndarray:
        return self.grid.multiplier(self.alpha, self.K)

    @cached_property
    def _phi(self) -> np.ndarray:
        return smooth_step(self.grid.radius - self.cutoff_n)[0]

    def _free(self, t: float) -> np.ndarray:
        return self.grid.ifft(np.exp(self._mult * t) * self.grid.fft(self._g))

    def f_grid(self, t: float) -> np.ndarray:
        """The function ``f(t, .)`` on the grid (the exact limit solution for this source)."""
        if self.kind == "separable":
            return self._a(t)[0] * self._g
        return self._phi * self._free(t)

    # -- h -------------------------------------------------------------------
    def _build_table(self):
        ts = np.linspace(0.0, self.T, self.nodes + 1)
        table = np.empty((len(ts),) + self.grid.shape)
        ghat = self.grid.fft(self._g)
        fmax = 0.0
        for j, t in enumerate(ts):
            fhat = np.exp(self._mult * t) * ghat
            free = self.grid.ifft(fhat)
            L_free = self.grid.ifft(self._mult * fhat)
            table[j] = self._phi * L_free - apply_bar_continuum(self._phi * free, self.grid, self.alpha, self.K)
            fmax = max(fmax, float(np.max(np.abs(self._phi * free))))
        self._times = ts
        self._spline = CubicSpline(ts, table, axis=0)
        if np.max(np.abs(self._phi * self._g - self._g)) > 1e-12 * max(1.0, np.max(np.abs(self._g))):
            raise ConfigurationError("cutoff does not leave g unchanged; increase cutoff_n")
        # f is compactly supported, so the decay weight is 1 and C0 is sup |f|
        self.decay_C0 = fmax

    def h_grid(self, t: float) -> np.ndarray:
        if not -1e-12 <= t <= self.T + 1e-12:
            raise ValueError(f"source time {t} outside [0, {self.T}]")
        if self.kind == "separable":
            a, da = self._a(t)
            return da * self._g - a * self._Lg
        return self._spline(t)

    def _indices(self, x: np.ndarray) -> np.ndarray:
        key = (x.shape, hash(x.tobytes()))
        if key == self._lookup_key:
            return self._lookup_idx
        grid = self.grid
        rel = (x - grid.axis[0]) / grid.h
        idx = np.rint(rel)
        if np.max(np.abs(rel - idx), initial=0.0) > 1e-6:
            raise ValueError("source points must lie on the grid of the source")
        idx = np.mod(idx.astype(np.int64), grid.n)
        flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), grid.shape)
        self._lookup_key, self._lookup_idx = key, flat
        return flat

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[:-1] == self.grid.shape and x.shape[-1] == self.grid.d:
            return self.h_grid(t)
        return self.h_grid(t).reshape(-1)[self._indices(x)]


def make_source_h(kind: str, g: SmoothProfile, grid: PeriodicGrid, alpha: float, K: float, T: float,
                  *, beta: float = math.inf, **kwargs) -> SourceTerm:
    """Build a source ``h`` in the test-function class with decay index ``beta``.

    ``beta = inf`` requires a compactly supported ``f``; the realized decay
    constant is stored in ``decay_C0``.
    """
    if g.decay_beta < beta:
        raise ConfigurationError(f"profile decays with beta={g.decay_beta}, weaker than the requested beta={beta}")
    src = SourceTerm(kind=kind, grid=grid, alpha=alpha, K=K, g=g, T=T, **kwargs)
    if not math.isfinite(src.decay_C0):
        raise ConfigurationError("decay certificate is not finite on the sampling grid")
    return src
