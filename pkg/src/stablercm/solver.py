"""Explicit time stepping for the scaled equations and the spectral limit solver.

Snapshots are taken on the common grid ``t_j = j T / n_snapshots`` so that
trajectories from different solvers (and different scales ``k``) can be
compared time by time without interpolation.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StabilityError
from .lattice import Lattice
from .operators.discrete import OperatorHandle
from .operators.spectral import PeriodicGrid

log = logging.getLogger(__name__)

SCHEMES = ("euler", "heun")

Source = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SolveParams:
    """Time-stepping parameters.

    Attributes:
        T: horizon.
        cfl_fraction: safety factor in ``(0, 1]``; ``dt <= cfl_fraction / S_max``.
        n_snapshots: number of snapshot intervals (the run stores ``n_snapshots + 1`` fields).
        scheme: ``euler`` or ``heun``.
        dt_override: fixed step, refused if ``dt * S_max > 1``.
        limit_steps: steps of the exponential integrator per snapshot interval.
    """

    T: float = 1.0
    cfl_fraction: float = 0.5
    n_snapshots: int = 32
    scheme: str = "euler"
    dt_override: float | None = None
    limit_steps: int = 8

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if not 0.0 < self.cfl_fraction <= 1.0:
            raise ValueError(f"cfl_fraction must lie in (0, 1], got {self.cfl_fraction}")
        if self.n_snapshots < 1:
            raise ValueError("need at least one snapshot interval")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def snapshot_times(self) -> np.ndarray:
        return np.arange(self.n_snapshots + 1) * (self.T / self.n_snapshots)


@dataclass
class Trajectory:
    """Snapshots ``values[j]`` of a field at ``times[j]``.

    ``coords`` holds the continuum coordinates of the sites (or grid points,
    flattened) in the order used by ``values``.
    """

    times: np.ndarray
    values: np.ndarray
    coords: np.ndarray
    dt: float
    steps: int
    scheme: str
    lattice: Lattice | None = None
    grid: PeriodicGrid | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation in time between stored snapshots."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"time {t} outside [{self.times[0]}, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(max(j, 0), len(self.times) - 2)
        t0, t1 = self.times[j], self.times[j + 1]
        lam = (t - t0) / (t1 - t0)
        return (1.0 - lam) * self.values[j] + lam * self.values[j + 1]

    def to_csv(self, path) -> None:
        """Long format: one row per (time, site) with one value column per component."""
        vals = self.values.reshape(len(self.times), len(self.coords), -1)
        ncomp = vals.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "site"] + (["value"] if ncomp == 1 else [f"value_{c}" for c in range(ncomp)]))
            for j, t in enumerate(self.times):
                for i in range(len(self.coords)):
                    w.writerow([repr(float(t)), i] + [repr(float(v)) for v in vals[j, i]])

    @staticmethod
    def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
        """Inverse of :meth:`to_csv`; returns ``(times, values)``."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        times = np.unique(data[:, 0])
        nsite = int(data[:, 1].max()) + 1
        values = data[:, 2:].reshape(len(times), nsite, -1)
        if values.shape[2] == 1:
            values = values[..., 0]
        return times, values


def cfl_dt(op: OperatorHandle, params: SolveParams) -> float:
    """Largest step ``<= cfl_fraction / S_max`` with a whole number of steps per snapshot interval."""
    smax = op.max_rate
    if params.dt_override is not None:
        if params.dt_override * smax > 1.0 + 1e-12:
            raise StabilityError(
                f"dt={params.dt_override} violates the stability bound dt <= 1/S_max with S_max={smax:.6g}"
            )
        target = params.dt_override
    else:
        target = params.cfl_fraction / smax if smax > 0 else params.T
    return params.T / _step_count(params, target)


def _step_count(params: SolveParams, target_dt: float) -> int:
    per = max(1, math.ceil(params.T / params.n_snapshots / target_dt - 1e-9))
    return per * params.n_snapshots


def _source_field(h: Source | None, t: float, coords: np.ndarray):
    if h is None:
        return 0.0
    return h(t, coords)


def solve_parabolic(op: OperatorHandle, g: np.ndarray, h: Source | None, params: SolveParams,
                    *, store_all: bool = False, lattice: Lattice | None = None) -> Trajectory:
    """Solve ``du/dt = L_t u + h`` on the operator's sites from ``u(0) = g``.

    ``h(t, x)`` receives the continuum coordinates of all sites (shape
    ``(N, d)``) and returns the source values.  With ``store_all`` every step
    is kept instead of the snapshot grid.  Passing the ``lattice`` enables the
    piecewise-constant extension of the result.
    """
    u = np.array(g, dtype=float)
    if u.shape[:1] != (op.n_sites,):
        raise ValueError(f"initial field of shape {u.shape} does not match {op.n_sites} sites")
    coords = op.kernel.int_coords / float(op.kernel.k)
    dt = cfl_dt(op, params)
    steps = int(round(params.T / dt))
    stride = 1 if store_all else steps // params.n_snapshots
    times = [0.0]
    values = [u.copy()]

    def rhs(t, v):
        return op.apply(t, v) + _source_field(h, t, coords)

    for n in range(steps):
        t = n * dt
        if params.scheme == "euler":
            u = u + dt * rhs(t, u)
        else:
            k1 = rhs(t, u)
            k2 = rhs(t + dt, u + dt * k1)
            u = u + 0.5 * dt * (k1 + k2)
        if not np.all(np.isfinite(u)):
            raise StabilityError(f"non-finite value after step {n + 1} (t={(n + 1) * dt:.6g})")
        if (n + 1) % stride == 0:
            times.append((n + 1) * dt if store_all else ((n + 1) // stride) * (params.T / params.n_snapshots))
            values.append(u.copy())
    return Trajectory(
        times=np.array(times), values=np.array(values), coords=coords, dt=dt, steps=steps,
        scheme=params.scheme, lattice=lattice,
        meta={"S_max": op.max_rate, "family": op.family, "mode": op.kernel.mode},
    )


def richardson_check(op: OperatorHandle, g: np.ndarray, h: Source | None, params: SolveParams) -> dict:
    """Step-halving self check from runs at ``dt``, ``dt/2`` and ``dt/4``.

    ``change`` is the sup-norm difference of the final states at ``dt`` and
    ``dt/2``; the scheme order predicts the next difference to be
    ``change / 2^p``.  ``ok`` requires the observed next difference to stay
    within ten times that prediction; ``observed_order`` is ``log2`` of the
    ratio of successive differences.
    """
    dt = cfl_dt(op, params)
    finals = []
    for div in (1, 2, 4):
        p = SolveParams(T=params.T, cfl_fraction=params.cfl_fraction, n_snapshots=params.n_snapshots,
                        scheme=params.scheme, dt_override=dt / div)
        finals.append(solve_parabolic(op, g, h, p).final)
    change = float(np.max(np.abs(finals[0] - finals[1])))
    nxt = float(np.max(np.abs(finals[1] - finals[2])))
    order = 1 if params.scheme == "euler" else 2
    predicted = change / 2**order
    observed = math.log2(change / nxt) if nxt > 0 and change > 0 else math.inf
    return {"dt": dt, "change": change, "next_change": nxt, "predicted": predicted,
            "observed_order": observed, "ok": nxt <= 10.0 * predicted}


def solve_limit(g, h: Source | None, alpha: float, K: float, grid: PeriodicGrid, params: SolveParams,
                *, alias_tol: float = 1e-3, source_weight: str = "midpoint") -> Trajectory:
    """Spectral solution of ``du/dt = Lbar u + h`` on a periodic grid.

    Exponential integrator per step:
    ``u^(t+dt) = e^{m dt} u^(t) + dt e^{m dt/2} h^(t + dt/2)``, exact for the
    homogeneous part and second order for the source.  ``g`` is either grid
    values or a callable of the grid points; ``h(t, x)`` receives the grid
    points (shape ``grid.shape + (d,)``).

    ``source_weight="phi1"`` replaces ``dt e^{m dt/2}`` by the exact integral
    ``(e^{m dt} - 1) / m`` of the propagator over the step, which keeps the
    source accurate on stiff high modes when ``dt`` is coarse.
    """
    if source_weight not in ("midpoint", "phi1"):
        raise ValueError(f"unknown source weight {source_weight!r}")
    pts = grid.points
    u0 = g(pts) if callable(g) else np.asarray(g, dtype=float)
    if u0.shape != grid.shape:
        raise ValueError(f"initial data of shape {u0.shape} does not live on the grid {grid.shape}")
    steps = params.n_snapshots * params.limit_steps
    if params.dt_override is not None:
        steps = _step_count(params, params.dt_override)
    dt = params.T / steps
    stride = steps // params.n_snapshots
    m = grid.multiplier(alpha, K)
    full = np.exp(m * dt)
    if source_weight == "midpoint":
        weight = dt * np.exp(m * dt / 2)
    else:
        weight = np.full(m.shape, dt)
        nz = m != 0
        weight[nz] = np.expm1(m[nz] * dt) / m[nz]
    uh = grid.fft(u0)
    times = [0.0]
    values = [u0.copy()]
    for n in range(steps):
        uh = full * uh
        if h is not None:
            uh = uh + weight * grid.fft(h((n + 0.5) * dt, pts))
        if (n + 1) % stride == 0:
            times.append(((n + 1) // stride) * (params.T / params.n_snapshots))
            values.append(grid.ifft(uh))
    values = np.array(values)
    alias = aliasing_indicator(values[-1], grid)
    if alias > alias_tol:
        warnings.warn(
            f"limit solution carries relative mass {alias:.2e} near the torus boundary; "
            f"consider doubling the torus (L={grid.L} -> {2 * grid.L})",
            RuntimeWarning,
            stacklevel=2,
        )
    return Trajectory(
        times=np.array(times), values=values, coords=pts.reshape(-1, grid.d), dt=dt, steps=steps,
        scheme="exponential", grid=grid, meta={"alias_indicator": alias},
    )


def aliasing_indicator(u: np.ndarray, grid: PeriodicGrid) -> float:
    """Sup of ``|u|`` over the outer eighth of the torus relative to the global sup."""
    top = float(np.max(np.abs(u)))
    if top == 0.0:
        return 0.0
    outer = np.max(np.abs(grid.points), axis=-1) > 0.375 * grid.L
    return float(np.max(np.abs(u[outer]))) / top if outer.any() else 0.0


def extend_piecewise_constant(traj: Trajectory, x, snapshot: int = -1) -> np.ndarray:
    """Value of the cell ``prod (z_i, z_i + 1/k]`` containing ``x``; 0 outside the box."""
    if traj.lattice is None:
        raise ValueError("piecewise-constant extension needs a lattice trajectory")
    idx = traj.lattice.cell_index(x)
    vals = traj.values[snapshot]
    out = np.where(idx >= 0, vals[np.maximum(idx, 0)], 0.0)
    return out[0] if np.ndim(x) <= 1 else out


def attach_lattice(traj: Trajectory, lattice: Lattice) -> Trajectory:
    if traj.values.shape[1] != lattice.n_sites:
        raise ValueError("trajectory does not live on this lattice")
    traj.lattice = lattice
    return traj
