"""Discrete operator families acting on fields over a lattice box.

All families share one code path: for a time ``t`` the environment is
decomposed into terms ``c * Z(block, slot)`` and each term contributes
``c * (A f - rowsum(A) f)`` with ``A = K (.) Z``.  The unit field (slot 0) uses
the kernel table itself, so a constant environment and the deterministic
discrete operator produce bit-identical results.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..environment import Environment, MeanProfile
from ..lattice import Lattice
from .kernel import KernelTable, build_kernel_table, regional_kernel
from .spectral import PeriodicGrid, apply_bar_continuum

FAMILIES = ("scaled", "regional", "hat", "bar-discrete", "bar-continuum")


class ConductanceCache:
    """LRU cache of the random pair fields ``Z(block, slot)`` on a kernel's sites.

    Pair keys are hashed once; each cached entry holds the symmetric ``Z``
    matrix, the weighted matrix ``K (.) Z`` and its row sums.
    """

    def __init__(self, env: Environment, kernel: KernelTable, maxsize: int = 6):
        self.env = env
        self.kernel = kernel
        self.maxsize = maxsize
        n = kernel.n_sites
        self._iu = np.triu_indices(n, 1)
        coords = kernel.int_coords
        self._keys = env.pair_keys(coords[self._iu[0]], coords[self._iu[1]])
        self._entries: OrderedDict = OrderedDict()
        self._drift: dict = {}

    def z_matrix(self, block: int, slot: int) -> np.ndarray:
        return self._entry(block, slot)[0]

    def weighted(self, block: int, slot: int) -> tuple[np.ndarray, np.ndarray]:
        _, kz, rs = self._entry(block, slot)
        return kz, rs

    def _entry(self, block, slot):
        key = (block, slot)
        hit = self._entries.get(key)
        if hit is not None:
            self._entries.move_to_end(key)
            return hit
        n = self.kernel.n_sites
        z = np.zeros((n, n))
        vals = self.env.z_from_keys(self._keys, block, slot)
        z[self._iu] = vals
        z += z.T
        kz = self.kernel.matrix * z
        entry = (z, kz, kz.sum(axis=1))
        self._entries[key] = entry
        if len(self._entries) > self.maxsize:
            self._entries.popitem(last=False)
        return entry

    def drift(self, block: int, slot: int, moment: np.ndarray) -> np.ndarray:
        """``sum_y Z(x,y) M(x,y)`` for a first-moment table ``M``; shape ``(N, d)``."""
        key = (block, slot, id(moment))
        hit = self._drift.get(key)
        if hit is None:
            if slot == 0:
                hit = moment.sum(axis=1)
            else:
                hit = np.einsum("ij,ijc->ic", self.z_matrix(block, slot), moment)
            if len(self._drift) > 4 * self.maxsize:
                self._drift.clear()
            self._drift[key] = hit
        return hit


@dataclass(eq=False)
class OperatorHandle:
    """An operator family bound to its kernel and coefficients.

    ``scaled``, ``hat`` and ``regional`` need an environment, ``bar-discrete``
    a mean profile and ``bar-continuum`` a periodic grid.  The scaled families
    evaluate the environment at time ``k^alpha t``.
    """

    family: str
    kernel: KernelTable | None = None
    env: Environment | None = None
    profile: MeanProfile | None = None
    grid: PeriodicGrid | None = None
    alpha: float | None = None
    cache: ConductanceCache | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown operator family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "bar-continuum":
            if self.grid is None or self.profile is None or self.alpha is None:
                raise ValueError("bar-continuum needs a periodic grid, a mean profile and alpha")
            return
        if self.kernel is None:
            raise ValueError(f"{self.family} operator needs a kernel table")
        self.alpha = self.kernel.alpha
        if self.family in ("scaled", "hat", "regional"):
            if self.env is None:
                raise ValueError(f"{self.family} operator needs an environment")
            if self.cache is None and not self.env.is_deterministic:
                self.cache = ConductanceCache(self.env, self.kernel)
        elif self.profile is None:
            raise ValueError("bar-discrete operator needs a mean profile")

    @property
    def n_sites(self) -> int:
        return self.kernel.n_sites

    @property
    def time_scale(self) -> float:
        return float(self.kernel.k) ** self.alpha

    @property
    def weight_bound(self) -> float:
        if self.env is not None:
            return self.env.upper
        return self.profile.K2

    @property
    def max_rate(self) -> float:
        """``S_max``: worst-case off-diagonal row sum, weight bound times the kernel row sum."""
        return self.weight_bound * self.kernel.max_row_sum

    def components(self, t: float) -> list[tuple[float, np.ndarray, np.ndarray, tuple[int, int]]]:
        """Terms ``(c, A, rowsum(A), (block, slot))`` with ``L_t f = sum c (A f - rowsum f)``."""
        s = self.time_scale * t
        if self.family == "bar-discrete":
            terms = [(float(self.profile.value(s)), 0, 0)]
        else:
            terms = self.env.terms(s)
        out = []
        for c, block, slot in terms:
            if c == 0.0:
                continue
            if slot == 0:
                out.append((c, self.kernel.matrix, self.kernel.row_sums, (block, slot)))
            else:
                kz, rs = self.cache.weighted(block, slot)
                out.append((c, kz, rs, (block, slot)))
        return out

    def rate_matrix(self, t: float) -> np.ndarray:
        """Dense off-diagonal jump rates at time ``t``."""
        out = np.zeros((self.n_sites, self.n_sites))
        for c, a, _, _ in self.components(t):
            out += c * a
        return out

    def apply(self, t: float, f: np.ndarray, grad_f: np.ndarray | None = None) -> np.ndarray:
        if self.family == "bar-continuum":
            return apply_bar_continuum(f, self.grid, self.alpha, self.profile.K)
        f = _check_field(f, self.n_sites)
        out = np.zeros_like(f)
        for c, a, rs, _ in self.components(t):
            out += c * (a @ f - _bcast(rs, f) * f)
        if grad_f is not None:
            out -= self._compensator(t, grad_f)
        return out

    def _compensator(self, t: float, grad_f: np.ndarray) -> np.ndarray:
        grad_f = np.asarray(grad_f, dtype=float)
        n, d = self.n_sites, self.kernel.d
        if grad_f.shape not in ((n, d), (n,)) or (grad_f.ndim == 1 and d != 1):
            raise ValueError(f"gradient of shape {grad_f.shape} does not match {n} sites in d={d}")
        grad_f = grad_f.reshape(n, d)
        moment = self.kernel.moment(indicator=self.alpha <= 1.0)
        out = np.zeros(n)
        for c, _, _, (block, slot) in self.components(t):
            if slot == 0:
                drift = _unit_drift(self.kernel, moment)
            else:
                drift = self.cache.drift(block, slot, moment)
            out += c * np.sum(grad_f * drift, axis=1)
        return out


def _unit_drift(kernel: KernelTable, moment: np.ndarray) -> np.ndarray:
    cached = getattr(kernel, "_unit_drift", None)
    if cached is None or cached[0] is not moment:
        cached = (moment, moment.sum(axis=1))
        kernel._unit_drift = cached
    return cached[1]


def _check_field(f, n: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[:1] != (n,):
        raise ValueError(f"field with leading dimension {f.shape[:1]} does not live on a lattice of {n} sites")
    return f


def _bcast(rs: np.ndarray, f: np.ndarray) -> np.ndarray:
    return rs if f.ndim == 1 else rs[:, None]


def make_operator(family: str, lattice: Lattice, alpha: float, *, env: Environment | None = None,
                  profile: MeanProfile | None = None, mode: str = "regional",
                  rho_trunc: float | None = None, tail_tol: float = 1e-3,
                  kernel: KernelTable | None = None) -> OperatorHandle:
    """Build an operator handle on ``lattice``; an existing kernel table may be shared."""
    if family == "bar-continuum":
        grid = PeriodicGrid(d=lattice.d, L=2 * lattice.R, n=lattice.side)
        return OperatorHandle(family, grid=grid, profile=profile, alpha=alpha)
    if kernel is None:
        kernel = build_kernel_table(lattice, alpha, mode, rho_trunc=rho_trunc, tail_tol=tail_tol)
    elif kernel.n_sites != lattice.n_sites or kernel.alpha != alpha:
        raise ValueError("kernel table does not match the lattice or alpha")
    return OperatorHandle(family, kernel=kernel, env=env, profile=profile)


def _require(op: OperatorHandle, *families: str):
    if op.family not in families:
        raise ValueError(f"expected an operator of family {families}, got {op.family!r}")


def apply_scaled(op: OperatorHandle, t: float, f: np.ndarray) -> np.ndarray:
    """``L_t^k f(x) = k^{-d} sum_z (f(x+z) - f(x)) w(k^alpha t, kx, kx+kz) |z|^{-d-alpha}``."""
    _require(op, "scaled", "regional")
    return op.apply(t, f)


def apply_hat(op: OperatorHandle, t: float, f: np.ndarray, grad_f: np.ndarray | None) -> np.ndarray:
    """Non-divergence variant: the scaled operator minus the first-moment compensator.

    The compensator is ``<grad f(x), z>`` restricted to ``|z| <= 1`` when
    ``alpha <= 1`` and unrestricted when ``alpha > 1``.
    """
    _require(op, "hat")
    if grad_f is None:
        raise ValueError("the hat operator needs an analytic gradient of f")
    return op.apply(t, f, grad_f)


def apply_bar_discrete(op: OperatorHandle, t: float, f: np.ndarray, grad_f: np.ndarray | None = None,
                       *, compensated: bool = False) -> np.ndarray:
    """Deterministic discrete operator with weight ``K(k^alpha t)``.

    With ``compensated=True`` the first-moment compensator is subtracted, which
    requires ``grad_f``.
    """
    _require(op, "bar-discrete")
    if compensated and grad_f is None:
        raise ValueError("the compensated form needs an analytic gradient of f")
    return op.apply(t, f, grad_f if compensated else None)


@lru_cache(maxsize=32)
def _regional_table(key: bytes, d: int, alpha: float) -> KernelTable:
    coords = np.frombuffer(key, dtype=np.int64).reshape(-1, d)
    return regional_kernel(coords, alpha, k=1)


def _sites_of(U) -> np.ndarray:
    if isinstance(U, Lattice):
        if U.k != 1:
            raise ValueError("regional operators act on unscaled sites; pass a lattice with k=1")
        return U.int_coords
    sites = np.asarray(U, dtype=np.int64)
    return sites[:, None] if sites.ndim == 1 else sites


def regional_operator(env: Environment, U, alpha: float) -> OperatorHandle:
    """Handle for ``L_{t,U}`` on the integer site set ``U``."""
    sites = _sites_of(U)
    table = _regional_table(np.ascontiguousarray(sites).tobytes(), sites.shape[1], float(alpha))
    return OperatorHandle("regional", kernel=table, env=env)


def apply_regional(env: Environment, U, t: float, f: np.ndarray, *, alpha: float) -> np.ndarray:
    """``L_{t,U} f(x) = sum_{y in U} (f(y) - f(x)) w(t,x,y) |x-y|^{-d-alpha}`` for ``x in U``."""
    return regional_operator(env, U, alpha).apply(t, f)


def pair_energy(rates: np.ndarray, f: np.ndarray) -> float:
    """``(1/2) sum_{x != y} (f(x) - f(y))^2 A(x, y)``, summed over components for vector ``f``."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    total = 0.0
    for c in range(f.shape[1]):
        diff = f[:, None, c] - f[None, :, c]
        total += 0.5 * float(np.sum(rates * diff * diff))
    return total


def dirichlet_energy(env: Environment, U, t: float, f: np.ndarray, *, alpha: float) -> float:
    """``E_{t,U}(f, f) = (1/2) sum_{x != y in U} (f(x) - f(y))^2 w(t,x,y) |x-y|^{-d-alpha}``."""
    op = regional_operator(env, U, alpha)
    f = _check_field(f, op.n_sites)
    return pair_energy(op.rate_matrix(t), f)
