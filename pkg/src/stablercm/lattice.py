"""Boxes on scaled grids, cell measures, block averages and dyadic decompositions.

Boxes follow the half-open convention ``B_R(x) = x + (-R, R]^d`` so that the
dyadic blocks tile a box without ties on the block faces.  A lattice of scale
``k`` lives on ``k^{-1} Z^d``; every site carries the cell measure ``k^{-d}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Lattice:
    """The box ``(-R, R]^d`` intersected with ``k^{-1} Z^d``.

    Sites are indexed row-major with the first coordinate varying slowest.
    Integer coordinates (``k * x``) are the natural keys for the environment.
    """

    d: int
    k: int
    R: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"dimension must be 1, 2 or 3, got d={self.d}")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"scale k must be a positive integer, got k={self.k}")
        width = 2 * self.R * self.k
        if width <= 0 or abs(width - round(width)) > 1e-9:
            raise ConfigurationError(
                f"2*R*k must be a positive integer, got R={self.R}, k={self.k} (2Rk={width})"
            )

    @property
    def side(self) -> int:
        """Number of sites per axis."""
        return int(round(2 * self.R * self.k))

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def offset(self) -> int:
        """Integer coordinate of the first site along each axis."""
        return math.floor(-self.R * self.k + 1e-9) + 1

    @property
    def cell_measure(self) -> float:
        return float(self.k) ** (-self.d)

    @property
    def total_measure(self) -> float:
        return self.n_sites * self.cell_measure

    @property
    def spacing(self) -> float:
        return 1.0 / self.k

    @cached_property
    def int_coords(self) -> np.ndarray:
        """Integer coordinates ``k*x`` of all sites, shape ``(n_sites, d)``."""
        axes = [np.arange(self.side, dtype=np.int64) + self.offset] * self.d
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    @cached_property
    def coords(self) -> np.ndarray:
        """Continuum coordinates of all sites, shape ``(n_sites, d)``."""
        return self.int_coords / float(self.k)

    def index_of(self, int_coord) -> int:
        """Flat index of the site with integer coordinates ``int_coord``."""
        c = np.asarray(int_coord, dtype=np.int64).reshape(self.d) - self.offset
        if np.any(c < 0) or np.any(c >= self.side):
            raise ValueError(f"site {tuple(int(v) for v in c + self.offset)} is outside the box")
        return int(np.ravel_multi_index(tuple(c), self.shape))

    def coord_of(self, index: int) -> np.ndarray:
        return np.array(np.unravel_index(index, self.shape), dtype=np.int64) + self.offset

    def contains(self, x) -> np.ndarray:
        """Whether continuum points ``x`` (shape ``(..., d)``) lie in ``(-R, R]^d``."""
        x = np.asarray(x, dtype=float)
        return np.all((x > -self.R) & (x <= self.R), axis=-1)

    def cell_index(self, x) -> np.ndarray:
        """Index of the cell ``prod (z_i, z_i + 1/k]`` containing ``x``, or -1 outside the box."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        # z_i = ceil(k x_i) - 1 gives z_i < k x_i <= z_i + 1
        z = np.ceil(x * self.k - 1e-12).astype(np.int64) - 1
        rel = z - self.offset
        inside = np.all((rel >= 0) & (rel < self.side), axis=1)
        out = np.full(len(x), -1, dtype=np.int64)
        if inside.any():
            out[inside] = np.ravel_multi_index(tuple(rel[inside].T), self.shape)
        return out

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """``mu^{(k)}(f) = k^{-d} sum_x f(x)`` over the box (componentwise for vector fields)."""
        return np.asarray(values).sum(axis=0) * self.cell_measure


def build_lattice(d: int, k: int, R: float) -> Lattice:
    return Lattice(d=d, k=k, R=R)


@dataclass(frozen=True)
class DyadicBlock:
    """The block ``B_{2^n}(center)`` inside ``B_{2^m}``."""

    m: int
    n: int
    center: tuple[int, ...]

    @property
    def extent(self) -> int:
        return 2**self.n

    def sites(self) -> np.ndarray:
        """Integer sites of ``center + (-2^n, 2^n]^d``."""
        half = self.extent
        axes = [np.arange(c - half + 1, c + half + 1, dtype=np.int64) for c in self.center]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)


def dyadic_centers(m: int, n: int, d: int = 1) -> list[tuple[int, ...]]:
    """Centers of ``Z^d_{m,n}``: points of ``B_{2^m}`` whose coordinates are odd multiples of ``2^n``.

    For ``m == n`` the set is ``{0}``.
    """
    if n < 0 or n > m:
        raise ValueError(f"need 0 <= n <= m, got m={m}, n={n}")
    if n == m:
        return [(0,) * d]
    step = 2**n
    lim = 2**m
    odd = [c for c in range(-lim + step, lim + 1, 2 * step)]
    return [tuple(c) for c in itertools.product(odd, repeat=d)]


def dyadic_blocks(m: int, n: int, d: int = 1) -> list[DyadicBlock]:
    return [DyadicBlock(m=m, n=n, center=c) for c in dyadic_centers(m, n, d)]


def dyadic_lattice(m: int, d: int = 1) -> Lattice:
    """``B_{2^m} cap Z^d`` as a scale-1 lattice."""
    return Lattice(d=d, k=1, R=float(2**m))


def block_indices(lattice: Lattice, block: DyadicBlock) -> np.ndarray:
    """Flat indices of the sites of ``block`` within a scale-1 ``lattice``."""
    sites = block.sites()
    rel = sites - lattice.offset
    if np.any(rel < 0) or np.any(rel >= lattice.side):
        raise ValueError("block is not contained in the lattice")
    return np.ravel_multi_index(tuple(rel.T), lattice.shape)


def block_average(values: np.ndarray, block) -> np.ndarray:
    """Normalized integral ``(1/|U|) sum_{x in U} f(x)``.

    ``block`` is an index array (or boolean mask) into the leading axis of ``values``.
    """
    values = np.asarray(values)
    idx = np.asarray(block)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("block average over an empty block")
    return values[idx].mean(axis=0)
