"""Measured inequalities, operator gaps, homogenization errors and rate fits."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .environment import Environment, MeanProfile, eval_w, pi
from .lattice import Lattice, block_average, dyadic_blocks, dyadic_lattice
from .operators.discrete import make_operator, pair_energy, regional_operator
from .operators.kernel import KernelTable, build_kernel_table
from .operators.spectral import PeriodicGrid, apply_bar_continuum, grid_for_lattice
from .solver import Trajectory
from .testfn import SmoothProfile, cutoff_psi

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    """Least-squares line through ``(log x, log error)``."""

    points: list[tuple[float, float]]
    slope: float
    intercept: float
    residual_rms: float
    window: tuple[float, float]
    excluded: list[tuple[float, float]] = field(default_factory=list)

    def predict(self, x: float) -> float:
        return math.exp(self.intercept) * x**self.slope

    def recompute(self) -> tuple[float, float]:
        return _ols(self.points)[:2]


def _ols(points):
    lx = np.log([p[0] for p in points])
    ly = np.log([p[1] for p in points])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """Fit ``error ~ C x^slope``.  Non-positive errors are dropped with a warning."""
    pts = [(float(x), float(e)) for x, e in points]
    xs = [p[0] for p in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError(f"abscissae must be strictly increasing, got {xs}")
    keep = [p for p in pts if p[1] > 0 and math.isfinite(p[1])]
    dropped = [p for p in pts if p not in keep]
    if dropped:
        warnings.warn(f"dropping non-positive errors at x={[p[0] for p in dropped]}", RuntimeWarning, stacklevel=2)
    if len(keep) < 3:
        raise ValueError(f"a rate fit needs at least three positive points, got {len(keep)}")
    slope, intercept, rms = _ols(keep)
    return RateFit(points=keep, slope=slope, intercept=intercept, residual_rms=rms,
                   window=(keep[0][0], keep[-1][0]), excluded=dropped)


# ---------------------------------------------------------------------------
# good vertices and Poincare constants


def box_sites(y, r: int, d: int) -> np.ndarray:
    """Integer sites of ``B_r(y) = y + (-r, r]^d``."""
    y = np.broadcast_to(np.asarray(y, dtype=np.int64).reshape(-1), (d,))
    axes = [np.arange(c - r + 1, c + r + 1, dtype=np.int64) for c in y]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def good_vertex_fraction(env: Environment, t: float, x1, x2, y, r: int, delta: float, d: int = 1) -> float:
    """Fraction of ``B_r(y)`` made of vertices ``z != x1, x2`` with ``w(t,x1,z), w(t,x2,z) >= delta``."""
    x1 = np.asarray(x1, dtype=np.int64).reshape(-1)
    x2 = np.asarray(x2, dtype=np.int64).reshape(-1)
    if np.array_equal(x1, x2):
        raise ValueError("good vertices need two distinct anchor points")
    if r < 1:
        raise ValueError(f"radius must be at least 1, got {r}")
    z = box_sites(y, r, d)
    w1 = eval_w(env, t, np.broadcast_to(x1, z.shape), z)
    w2 = eval_w(env, t, np.broadcast_to(x2, z.shape), z)
    anchor = np.all(z == x1, axis=1) | np.all(z == x2, axis=1)
    good = (w1 >= delta) & (w2 >= delta) & ~anchor
    return float(good.sum()) / len(z)


def poincare_ratio(env: Environment, t: float, y, r: int, f: np.ndarray, *, alpha: float, d: int = 1) -> float:
    """Empirical Poincare constant ``Var_{B_r}(f) / (r^{alpha-d} E_{t,B_r}(f, f))``.

    ``f`` lists values on ``B_r(y)`` in the row-major site order of
    :func:`box_sites`.  Returns 0 when both sides vanish and ``inf`` when the
    energy vanishes but the variance does not.
    """
    sites = box_sites(y, r, d)
    f = np.asarray(f, dtype=float)
    if f.shape != (len(sites),):
        raise ValueError(f"f has shape {f.shape}, expected ({len(sites)},)")
    var = float(np.mean(f * f) - np.mean(f) ** 2)
    var = max(var, 0.0)
    op = regional_operator(env, sites, alpha)
    energy = pair_energy(op.rate_matrix(t), f)
    scale = float(r) ** (alpha - d)
    if energy <= 0.0:
        if var <= 1e-15 * max(1.0, float(np.mean(f * f))):
            return 0.0
        log.warning("zero energy with positive variance on B_%s(%s): disconnected configuration", r, y)
        return math.inf
    return var / (scale * energy)


@dataclass
class MultiscaleGap:
    lhs: float
    block_term: float
    energy_term: float

    @property
    def constant(self) -> float:
        """``(lhs - block_term) / energy_term``; nan when the denominator vanishes."""
        if self.energy_term <= 0.0:
            return math.nan
        return (self.lhs - self.block_term) / self.energy_term


def multiscale_poincare_gap(env: Environment, t: float, m: int, n: int, f: np.ndarray, g: np.ndarray,
                            *, alpha: float, d: int = 1) -> MultiscaleGap:
    """The three quantities of the multi-scale Poincare inequality on ``B_{2^m}``.

    ``f`` and ``g`` are given on ``B_{2^m} cap Z^d`` in the site order of
    :func:`stablercm.lattice.dyadic_lattice`.
    """
    if not 0 <= n <= m:
        raise ValueError(f"need 0 <= n <= m, got m={m}, n={n}")
    box = dyadic_lattice(m, d)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (box.n_sites,) or g.shape != (box.n_sites,):
        raise ValueError(f"f and g must have shape ({box.n_sites},)")
    lhs = float(np.sum(f * (g - g.mean())))
    block_term = 0.0
    for blk in dyadic_blocks(m, n, d):
        idx = _block_index(box, blk)
        block_term += float(np.sum(f[idx] * (g[idx] - block_average(g, idx))))
    op = regional_operator(env, box, alpha)
    energy = pair_energy(op.rate_matrix(t), g)
    acc = 0.0
    for k in range(n, m):
        sq = 0.0
        for blk in dyadic_blocks(m, k, d):
            sq += float(block_average(f, _block_index(box, blk))) ** 2
        acc += 2.0 ** (k * (d + alpha) / 2.0) * math.sqrt(sq)
    return MultiscaleGap(lhs=lhs, block_term=block_term, energy_term=math.sqrt(energy) * acc)


def _block_index(box: Lattice, blk) -> np.ndarray:
    rel = blk.sites() - box.offset
    return np.ravel_multi_index(tuple(rel.T), box.shape)


# ---------------------------------------------------------------------------
# operator gaps


def _time_nodes(T: float, scale: float, min_nodes: int = 64, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on ``[0, T]`` with panels refined geometrically towards 0.

    The innermost panel is shorter than ``1 / (4 scale)``, resolving functions
    of ``scale * t`` such as ``K(k^alpha t)``.
    """
    panels = max(min_nodes // order, math.ceil(math.log2(max(T * scale, 1.0))) + 3)
    edges = np.concatenate([[0.0], T * 2.0 ** -np.arange(panels - 1, -1, -1)])
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class GapPoint:
    k: int
    D: float
    pi_term: float
    residual: float
    factor: float


@dataclass
class BarGapResult:
    points: list[GapPoint]
    fit: RateFit
    residual_fit: RateFit | None


def operator_gap_bar(f: SmoothProfile, k_list: Sequence[int], T: float, alpha: float, profile: MeanProfile,
                     *, L: float = 16.0) -> BarGapResult:
    """Gap between the discrete deterministic operator and the continuum limit on a torus of side ``L``.

    ``D(k) = int_0^T sum_x |Lbar^k_t f - Lbar f|^2 k^{-d} dt`` with the time
    integral by a graded composite Gauss rule (at least 64 nodes).  The
    deviation term ``T pi(k^alpha T) ||A_k f||^2`` (``A_k`` the unit-weight
    discrete operator) is computed analytically and subtracted to give the
    residual; ``fit`` is the rate of ``D`` and ``residual_fit`` that of the
    residual.
    """
    ks = list(k_list)
    if len(ks) < 3:
        raise ValueError("need at least three scales")
    pts = []
    for k in ks:
        lat = Lattice(d=f.d, k=k, R=L / 2)
        table = build_kernel_table(lat, alpha, "periodic")
        grid = grid_for_lattice(lat)
        fx = f.value(grid.points).reshape(-1)
        unit = table.matrix @ fx - table.row_sums * fx
        limit = apply_bar_continuum(f.value(grid.points), grid, alpha, profile.K).reshape(-1)
        nodes, weights = _time_nodes(T, float(k) ** alpha)
        kt = np.asarray(profile.value(float(k) ** alpha * nodes), dtype=float).reshape(-1)
        mu = lat.cell_measure
        # sum_x |K(k^a t) A f - K Lf|^2 expanded in the three time-independent inner products
        aa = mu * float(unit @ unit)
        al = mu * float(unit @ limit)
        ll = mu * float(limit @ limit)
        integrand = kt**2 * aa - 2.0 * kt * al + ll
        D = float(np.sum(weights * integrand))
        factor = aa
        pterm = T * pi(profile, float(k) ** alpha * T) * factor
        pts.append(GapPoint(k=k, D=D, pi_term=pterm, residual=D - pterm, factor=factor))
    fit = fit_rate([(p.k, p.D) for p in pts])
    residual_fit = None
    if not profile.is_constant and sum(p.residual > 0 for p in pts) >= 3:
        residual_fit = fit_rate([(p.k, p.residual) for p in pts])
    return BarGapResult(points=pts, fit=fit, residual_fit=residual_fit)


def operator_gap_random(env: Environment, f: SmoothProfile, k: int, T: float, *, alpha: float,
                        variant: str = "scaled", L: float = 8.0, nodes: int = 64,
                        kernel: KernelTable | None = None) -> float:
    """``int_0^T sum_x |L_t^k f - Lbar_t^k f|^2 k^{-d} dt`` on a torus of side ``L``.

    ``variant="hat"`` compares the non-divergence operator with the compensated
    discrete operator, using the analytic gradient of ``f``.  The time integral
    uses ``nodes`` midpoints.
    """
    if variant not in ("scaled", "hat"):
        raise ValueError(f"unknown variant {variant!r}")
    lat = Lattice(d=f.d, k=k, R=L / 2)
    if kernel is None:
        kernel = build_kernel_table(lat, alpha, "periodic")
    rand = make_operator("hat" if variant == "hat" else "scaled", lat, alpha, env=env, kernel=kernel)
    bar = make_operator("bar-discrete", lat, alpha, profile=env.profile, kernel=kernel)
    fx = f.value(lat.coords)
    grad = f.gradient(lat.coords) if variant == "hat" else None
    ts = (np.arange(nodes) + 0.5) * (T / nodes)
    total = 0.0
    for t in ts:
        a = rand.apply(t, fx, grad)
        b = bar.apply(t, fx, grad)
        total += float(np.sum((a - b) ** 2)) * lat.cell_measure
    return total * (T / nodes)


def cutoff_gap(f: SmoothProfile, R_list: Sequence[float], *, alpha: float, K: float = 1.0,
               h: float = 0.125, L_factor: float = 32.0) -> tuple[RateFit, list[tuple[float, float]]]:
    """``G(R) = int |Lbar f - Lbar(f psi_R)|^2 dx`` on a torus of side ``L_factor * max(R)``.

    Returns the rate fit and the raw ``(R, G)`` pairs.
    """
    Rs = [float(R) for R in R_list]
    L = L_factor * max(Rs)
    n = int(round(L / h))
    grid = PeriodicGrid(d=f.d, L=L, n=n)
    pts = grid.points
    fx = f.value(pts)
    out = []
    for R in Rs:
        psi = cutoff_psi(R, pts).value
        diff = apply_bar_continuum(fx * (1.0 - psi), grid, alpha, K)
        out.append((R, grid.integrate(diff**2)))
    if all(v == 0.0 for _, v in out):
        return None, out
    return fit_rate(out), out


# ---------------------------------------------------------------------------
# homogenization error


def l2_errors(uk: Trajectory, ubar: Trajectory | np.ndarray, *, outside_sq: np.ndarray | None = None) -> np.ndarray:
    """Per-snapshot ``L^2`` distance between the piecewise-constant ``u_k`` and ``ubar``.

    ``ubar`` is either a trajectory on a grid commensurate with ``u_k``'s
    lattice, a trajectory on the same sites, or an array of site values per
    snapshot.  ``outside_sq`` adds the squared ``L^2`` mass of ``ubar`` outside
    the box (where ``u_k`` is extended by zero).
    """
    if uk.lattice is None:
        raise ValueError("u_k must carry its lattice")
    lat = uk.lattice
    if isinstance(ubar, Trajectory):
        if len(ubar.times) != len(uk.times) or np.max(np.abs(ubar.times - uk.times)) > 1e-12 * max(1.0, uk.times[-1]):
            raise ValueError("snapshot times of u_k and ubar are not aligned")
        if ubar.grid is not None:
            vals = np.array([ubar.grid.sample(v, lat) for v in ubar.values])
        else:
            vals = ubar.values
    else:
        vals = np.asarray(ubar, dtype=float)
        if vals.shape[0] != len(uk.times):
            raise ValueError("ubar has a different number of snapshots")
    if vals.shape != uk.values.shape:
        raise ValueError(f"ubar values of shape {vals.shape} do not match u_k {uk.values.shape}")
    sq = np.sum((uk.values - vals) ** 2, axis=1) * lat.cell_measure
    if outside_sq is not None:
        sq = sq + np.asarray(outside_sq)
    return np.sqrt(sq)


def sup_l2_error(uk: Trajectory, ubar, **kwargs) -> float:
    """``max_t ||u_k(t) - ubar(t)||_{L^2}`` over the common snapshots."""
    return float(np.max(l2_errors(uk, ubar, **kwargs)))
