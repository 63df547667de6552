"""Regional correctors on dyadic boxes and the two-scale ansatz.

The corrector on ``B_{2^m}`` solves

    d/dt phi = L_{t, B_{2^m}} phi + V - avg_{B_{2^m}} V,    phi(0) = 0,

componentwise, with the drift ``V(t, x) = sum_z z |z|^{-d-alpha} w(t, x, x+z)``.
For ``alpha <= 1`` the sum is restricted to ``|z| <= 2^m`` (the field ``V_m``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from .environment import Environment
from .lattice import Lattice, dyadic_lattice
from .operators.discrete import regional_operator
from .operators.kernel import lattice_tail_bound
from .solver import SolveParams, Trajectory, _step_count

log = logging.getLogger(__name__)


def _half_offsets(d: int, radius: float) -> np.ndarray:
    """Integer offsets ``0 < |z| <= radius`` whose first nonzero coordinate is positive."""
    r = int(math.floor(radius))
    rng = np.arange(-r, r + 1)
    mesh = np.meshgrid(*([rng] * d), indexing="ij")
    z = np.stack([m.ravel() for m in mesh], axis=1)
    norm2 = np.sum(z * z, axis=1)
    keep = (norm2 > 0) & (norm2 <= radius * radius + 1e-9)
    z = z[keep]
    first = np.array([row[np.flatnonzero(row)[0]] for row in z])
    return z[first > 0]


@dataclass
class DriftField:
    """``V(t, x)`` on a set of integer sites, truncated to ``|z| <= radius``.

    Each offset is paired with its mirror image, so the deterministic part of
    the kernel cancels exactly: ``V = sum_{z in H} z |z|^{-d-alpha} (w(x, x+z) - w(x, x-z))``
    over a half space ``H``.  Contributions are cached per environment term.

    Attributes:
        tail_bound: deterministic bound ``C1 sum_{|z| > radius} |z|^{1-d-alpha}``
            (infinite for ``alpha <= 1``).
        tail_std: bound on the standard deviation of the discarded sum,
            ``(C1/2) (sum_{|z| > radius} |z|^{2(1-d-alpha)})^{1/2}``.
    """

    env: Environment
    sites: np.ndarray
    alpha: float
    radius: float
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=np.int64)
        if self.sites.ndim == 1:
            self.sites = self.sites[:, None]
        d = self.sites.shape[1]
        self.offsets = _half_offsets(d, self.radius)
        norm = np.sqrt(np.sum(self.offsets.astype(float) ** 2, axis=1))
        self.coef = self.offsets * norm[:, None] ** (-d - self.alpha)
        C1 = self.env.upper
        R = self.radius
        if self.alpha > 1.0:
            self.tail_bound = C1 * _moment_tail(d, self.alpha - 1.0, R)
        else:
            self.tail_bound = math.inf
        self.tail_std = 0.5 * C1 * math.sqrt(_moment_tail(d, 2.0 * (self.alpha + d - 1.0) - d, R))

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def _component(self, block: int, slot: int) -> np.ndarray:
        key = (block, slot)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n, M = len(self.sites), len(self.offsets)
        x = np.repeat(self.sites, M, axis=0)
        z = np.tile(self.offsets, (n, 1))
        plus = self.env.z(block, slot, x, x + z).reshape(n, M)
        minus = self.env.z(block, slot, x, x - z).reshape(n, M)
        out = (plus - minus) @ self.coef
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out

    def at(self, t: float) -> np.ndarray:
        out = np.zeros((len(self.sites), self.d))
        for c, block, slot in self.env.terms(t):
            if c != 0.0:
                out += c * self._component(block, slot)
        return out


def _moment_tail(d: int, s: float, R: float) -> float:
    """``sum_{n in Z^d, |n| > R} |n|^{-d-s}`` (bounded analytically for ``d > 1``)."""
    if d == 1:
        return float(2.0 * zeta(1.0 + s, math.floor(R) + 1.0))
    return lattice_tail_bound(d, s, R)


def _as_site_array(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim <= 1
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1)
    return x, single


def drift_field_V(env: Environment, t: float, x, radius: float, *, alpha: float) -> tuple[np.ndarray, float]:
    """Truncated drift ``V(t, x)`` for ``alpha in (1, 2)``; returns ``(V, tail_bound)``."""
    if alpha <= 1.0:
        raise ValueError("V converges absolutely only for alpha > 1; use drift_field_Vm for alpha <= 1")
    sites, single = _as_site_array(x)
    field_ = DriftField(env, sites, alpha, radius)
    v = field_.at(t)
    return (v[0] if single else v), field_.tail_bound


def drift_field_Vm(env: Environment, t: float, x, m: int, *, alpha: float) -> np.ndarray:
    """Exact finite drift ``V_m(t, x)`` over ``|z| <= 2^m``."""
    sites, single = _as_site_array(x)
    v = DriftField(env, sites, alpha, float(2**m)).at(t)
    return v[0] if single else v


def normalization(m: int, d: int, alpha: float, T: float = 1.0) -> float:
    """Scale of the corrector estimates on ``B_{2^m}`` over the horizon ``2^{m alpha} T``."""
    if alpha > 1.0:
        return 2.0 ** (m * (alpha + d)) * T
    if alpha == 1.0:
        return 2.0 ** (m * (d + 1)) * T
    return 2.0 ** (m * (d + 2 * (1 - alpha) + alpha)) * T


@dataclass
class CorrectorRun:
    """Result of a corrector solve on ``B_{2^m}``.

    ``energy`` holds the accumulated ``int_0^t E(phi, phi) ds`` at the snapshot
    times; ``norm_sq`` holds ``||phi(t)||^2`` there.  ``sup_norm_sq`` is the
    max over *all* steps.
    """

    m: int
    alpha: float
    d: int
    T: float
    horizon: float
    lattice: Lattice
    trajectory: Trajectory
    energy: np.ndarray
    norm_sq: np.ndarray
    sup_norm_sq: float
    drift_radius: float
    drift_tail_bound: float
    drift_tail_std: float
    max_mean_drift: float
    reprojections: int
    step_energy: np.ndarray | None = None
    step_drift_pairing: np.ndarray | None = None
    step_norm_sq: np.ndarray | None = None

    @property
    def energy_integral(self) -> float:
        return float(self.energy[-1])

    @property
    def Q(self) -> float:
        return (self.sup_norm_sq + self.energy_integral) / normalization(self.m, self.d, self.alpha, self.T)


def solve_corrector(env: Environment, m: int, *, alpha: float, d: int = 1, T: float = 1.0,
                    params: SolveParams | None = None, drift_radius: float | None = None,
                    record_steps: bool = False, mean_tol: float = 1e-10) -> CorrectorRun:
    """Explicit Euler solve of the corrector on ``B_{2^m}`` up to ``2^{m alpha} T``.

    ``params`` supplies ``cfl_fraction`` and ``n_snapshots`` (its ``T`` is
    ignored).  For ``alpha > 1`` the drift is truncated at ``drift_radius``
    (default ``2^{m+1}``, the box diameter) with the tail recorded; for
    ``alpha <= 1`` the exact ``V_m`` is used.  ``record_steps`` keeps the
    per-step energy, drift pairing and squared norm for balance checks.
    """
    params = params or SolveParams()
    lattice = dyadic_lattice(m, d)
    sites = lattice.int_coords
    op = regional_operator(env, lattice, alpha)
    if alpha > 1.0:
        radius = float(2 ** (m + 1)) if drift_radius is None else float(drift_radius)
    else:
        radius = float(2**m)
    drift = DriftField(env, sites, alpha, radius)
    horizon = 2.0 ** (m * alpha) * T
    smax = op.max_rate
    target = params.cfl_fraction / smax if smax > 0 else horizon
    run_params = SolveParams(T=horizon, n_snapshots=params.n_snapshots, cfl_fraction=params.cfl_fraction)
    steps = _step_count(run_params, target)
    dt = horizon / steps
    stride = steps // params.n_snapshots

    N = len(sites)
    phi = np.zeros((N, d))
    times, values = [0.0], [phi.copy()]
    energies, norms = [0.0], [0.0]
    acc = 0.0
    sup_sq = 0.0
    max_mean = 0.0
    reproj = 0
    rec_e, rec_p, rec_n = [], [], []

    def energy_and_rhs(t, f):
        Lf = np.zeros_like(f)
        e = 0.0
        for c, a, rs, _ in op.components(t):
            af = a @ f
            Lf += c * (af - rs[:, None] * f)
            e += c * float(np.sum(rs[:, None] * f * f) - np.sum(f * af))
        v = drift.at(t)
        v = v - v.mean(axis=0)
        return e, Lf + v, v

    e_prev, rhs, v = energy_and_rhs(0.0, phi)
    for n in range(steps):
        if record_steps:
            rec_e.append(e_prev)
            rec_p.append(float(np.sum(v * phi)))
            rec_n.append(float(np.sum(phi * phi)))
        phi = phi + dt * rhs
        if not np.all(np.isfinite(phi)):
            raise FloatingPointError(f"corrector blew up at step {n + 1}")
        total = phi.sum(axis=0)
        scale = float(np.sqrt(np.sum(phi * phi)))
        drift_ratio = float(np.max(np.abs(total))) / scale if scale > 0 else 0.0
        max_mean = max(max_mean, drift_ratio)
        if drift_ratio > mean_tol:
            phi = phi - total / N
            reproj += 1
        t_next = (n + 1) * dt
        e_next, rhs, v = energy_and_rhs(t_next, phi)
        acc += 0.5 * dt * (e_prev + e_next)
        e_prev = e_next
        sup_sq = max(sup_sq, float(np.sum(phi * phi)))
        if (n + 1) % stride == 0:
            times.append(((n + 1) // stride) * (horizon / params.n_snapshots))
            values.append(phi.copy())
            energies.append(acc)
            norms.append(float(np.sum(phi * phi)))
    if reproj:
        warnings.warn(f"corrector mean drifted beyond {mean_tol:g} and was re-projected {reproj} times",
                      RuntimeWarning, stacklevel=2)
    traj = Trajectory(times=np.array(times), values=np.array(values), coords=sites.astype(float), dt=dt,
                      steps=steps, scheme="euler", lattice=lattice, meta={"S_max": smax})
    run = CorrectorRun(
        m=m, alpha=alpha, d=d, T=T, horizon=horizon, lattice=lattice, trajectory=traj,
        energy=np.array(energies), norm_sq=np.array(norms), sup_norm_sq=sup_sq, drift_radius=radius,
        drift_tail_bound=drift.tail_bound, drift_tail_std=drift.tail_std, max_mean_drift=max_mean,
        reprojections=reproj,
    )
    if record_steps:
        rec_e.append(e_prev)
        rec_p.append(float(np.sum(v * phi)))
        rec_n.append(float(np.sum(phi * phi)))
        run.step_energy, run.step_drift_pairing, run.step_norm_sq = map(np.array, (rec_e, rec_p, rec_n))
    return run


def corrector_scaling_report(runs: list[CorrectorRun]) -> dict:
    """Per-level table of ``sup ||phi||^2``, energy integral and normalized ``Q(m)``.

    Levels with several runs (seeds) are summarized by the median of ``Q``.
    ``power`` is the fitted exponent of ``Q`` against ``m`` (``None`` when
    some ``Q`` vanishes, as for deterministic environments).
    """
    from .diagnostics import fit_rate

    ms = sorted({r.m for r in runs})
    if len(ms) < 3:
        raise ValueError("the scaling report needs at least three levels")
    rows = []
    for m in ms:
        group = [r for r in runs if r.m == m]
        rows.append({
            "m": m,
            "sup_norm_sq": float(np.median([r.sup_norm_sq for r in group])),
            "energy_integral": float(np.median([r.energy_integral for r in group])),
            "Q": float(np.median([r.Q for r in group])),
            "Q_all": [r.Q for r in group],
        })
    qs = [row["Q"] for row in rows]
    report = {"rows": rows, "power": None, "blowup": None, "fit": None}
    if all(q > 0 for q in qs):
        fit = fit_rate([(float(m), q) for m, q in zip(ms, qs)])
        report["power"] = fit.slope
        report["fit"] = fit
        report["blowup"] = max(qs) / min(qs)
    elif all(q == 0 for q in qs):
        report["blowup"] = 1.0
    return report


def build_two_scale(ubar: np.ndarray, grad_ubar: np.ndarray, lattice: Lattice, k: int, theta: float,
                    alpha: float, t: float, corrector: CorrectorRun | None) -> np.ndarray:
    """Two-scale field ``ubar psi + k^{-1} <grad(ubar psi), phi(k^alpha t, k x)>`` at time ``t``.

    ``ubar`` and ``grad_ubar`` are values on the lattice sites at time ``t``
    (the gradient analytic or spectral).  Sites whose scaled position ``kx``
    lies outside the corrector box see ``phi = 0``.
    """
    from .testfn import cutoff_psi

    psi = cutoff_psi(float(k) ** theta, lattice.coords)
    ubar = np.asarray(ubar, dtype=float)
    base = ubar * psi.value
    if corrector is None:
        return base
    grad = np.asarray(grad_ubar, dtype=float).reshape(len(ubar), -1) * psi.value[:, None] \
        + ubar[:, None] * psi.gradient
    s = float(k) ** alpha * t
    phi_box = corrector.trajectory.at(min(s, corrector.horizon))
    box = corrector.lattice
    idx = box.cell_index(lattice.int_coords.astype(float) + 0.5)
    phi = np.zeros_like(grad)
    inside = idx >= 0
    phi[inside] = phi_box[idx[inside]]
    return base + np.sum(grad * phi, axis=1) / k
