"""Jump kernels ``k^{-d} |z|^{-d-alpha}`` on a lattice box, with tail accounting.

Two boundary modes are supported.

``regional``
    jumps are restricted to pairs inside the box (the censored operator).  The
    default truncation radius is the box diameter, so nothing inside the box is
    discarded.
``periodic``
    the box is a torus of side ``2R`` and the weight of a pair is the sum over
    all periodic images.  In ``d = 1`` the image sum is exact via the Hurwitz
    zeta function; in ``d >= 2`` images are summed out to a radius chosen so
    that the analytic tail bound is below ``tail_tol`` times the retained mass.

Dense ``N x N`` tables are used throughout: the random weights are pair
dependent, so the cost of a matrix-vector product is the same as a sparse
offset loop and numpy does it far faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import zeta

from ..lattice import Lattice

MODES = ("regional", "periodic")

_SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def lattice_tail_bound(d: int, alpha: float, M: float) -> float:
    """Upper bound on ``sum_{n in Z^d, |n| > M} |n|^{-d-alpha}``.

    Exact in ``d = 1``.  In higher dimension each term is dominated by the
    integral of ``|y|^{-d-alpha}`` over its unit cell, inflated by
    ``(1 + sqrt(d)/(2M))^{d+alpha}`` to cover the worst point of the cell.
    """
    if d == 1:
        return float(2.0 * zeta(1.0 + alpha, math.floor(M) + 1.0))
    half_diag = math.sqrt(d) / 2.0
    if M <= half_diag:
        raise ValueError(f"tail bound needs M > sqrt(d)/2, got M={M}")
    inflate = (1.0 + half_diag / M) ** (d + alpha)
    return inflate * _SPHERE_AREA[d] / alpha * (M - half_diag) ** (-alpha)


@dataclass(eq=False)
class KernelTable:
    """Dense pair weights between the sites of a box.

    Attributes:
        alpha: stability index.
        k: lattice scale; sites are ``int_coords / k``.
        int_coords: integer site coordinates, shape ``(N, d)``.
        mode: ``regional`` or ``periodic``.
        period: torus side in lattice units (periodic mode only).
        matrix: ``N x N`` weights with zero diagonal.
        rho_trunc: truncation radius in continuum units (``inf`` when exact).
        tail_mass: bound on the per-site weight discarded by truncation.
    """

    alpha: float
    k: int
    int_coords: np.ndarray
    mode: str
    matrix: np.ndarray
    rho_trunc: float
    tail_mass: float
    period: int | None = None
    image_radius: int = 0
    _moment: np.ndarray | None = field(default=None, repr=False)
    _moment_indicator: bool | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.int_coords.shape[1]

    @property
    def n_sites(self) -> int:
        return len(self.int_coords)

    @cached_property
    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def max_row_sum(self) -> float:
        return float(self.row_sums.max()) if self.n_sites else 0.0

    @property
    def retained_mass(self) -> float:
        return self.max_row_sum

    @cached_property
    def differences(self) -> np.ndarray:
        """Integer displacement ``y - x`` for every pair, wrapped on the torus; shape ``(N, N, d)``."""
        diff = self.int_coords[None, :, :] - self.int_coords[:, None, :]
        if self.period is not None:
            P = self.period
            # representative in (-P/2, P/2]
            diff = diff - P * np.ceil(diff / P - 0.5).astype(np.int64)
        return diff

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct retained offsets ``z`` (continuum units) and their weights.

        Weights are read off the table, so in periodic mode they include the
        image sums.  The set is symmetric under ``z -> -z``.
        """
        diff = self.differences.reshape(-1, self.d)
        w = self.matrix.reshape(-1)
        keep = w > 0
        uniq, first = np.unique(diff[keep], axis=0, return_index=True)
        return uniq / float(self.k), w[keep][first]

    def moment(self, indicator: bool) -> np.ndarray:
        """First-moment table ``k^{-d} sum z |z|^{-d-alpha}`` per pair, shape ``(N, N, d)``.

        With ``indicator`` only jumps with ``|z| <= 1`` contribute (the
        compensator used for ``alpha <= 1``).
        """
        if self._moment is not None and self._moment_indicator == indicator:
            return self._moment
        if self.period is None:
            out = _regional_moment(self.differences, self.k, self.alpha, indicator, self.rho_trunc)
        else:
            out = _periodic_moment(self.differences, self.k, self.alpha, self.period, indicator, self.image_radius)
        self._moment = out
        self._moment_indicator = indicator
        return out


def _pair_weights(diff: np.ndarray, k: int, alpha: float) -> np.ndarray:
    d = diff.shape[-1]
    r = np.sqrt(np.sum(diff.astype(float) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        w = float(k) ** alpha * r ** (-d - alpha)
    w[r == 0] = 0.0
    return w


def _regional_moment(diff, k, alpha, indicator, rho):
    d = diff.shape[-1]
    r = np.sqrt(np.sum(diff.astype(float) ** 2, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        scal = float(k) ** (alpha - 1.0) * r ** (-d - alpha)
    scal[r == 0] = 0.0
    scal[r > rho * k + 1e-9] = 0.0
    if indicator:
        scal[r > k + 1e-9] = 0.0
    return diff * scal[..., None]


def _periodic_moment(diff, k, alpha, P, indicator, image_radius):
    d = diff.shape[-1]
    if d == 1 and not indicator:
        # sum_n (u+n)|u+n|^{-1-alpha} over n in Z, u = diff/P in (-1/2, 1/2]
        u = np.mod(diff[..., 0], P) / P
        out = np.zeros(u.shape)
        nz = u > 0
        out[nz] = zeta(alpha, u[nz]) - zeta(alpha, 1.0 - u[nz])
        return (float(k) ** (alpha - 1.0) * float(P) ** (-alpha) * out)[..., None]
    reach = int(math.ceil(k / P)) + 1 if indicator else image_radius
    out = np.zeros(diff.shape)
    for n in _image_vectors(d, reach):
        z = diff + P * n
        r = np.sqrt(np.sum(z.astype(float) ** 2, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            scal = float(k) ** (alpha - 1.0) * r ** (-d - alpha)
        scal[r == 0] = 0.0
        if indicator:
            scal[r > k + 1e-9] = 0.0
        out += z * scal[..., None]
    return out


def _image_vectors(d: int, M: int) -> np.ndarray:
    rng = np.arange(-M, M + 1)
    mesh = np.meshgrid(*([rng] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def regional_kernel(int_coords: np.ndarray, alpha: float, k: int = 1, rho_trunc: float | None = None) -> KernelTable:
    """Regional table on an arbitrary finite set of integer sites."""
    coords = np.asarray(int_coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords[:, None]
    diff = coords[None, :, :] - coords[:, None, :]
    full = _pair_weights(diff, k, alpha)
    span = np.ptp(coords, axis=0) if len(coords) else np.zeros(coords.shape[1])
    diameter = float(np.sqrt(np.sum(span.astype(float) ** 2))) / k
    rho = diameter if rho_trunc is None else float(rho_trunc)
    matrix = full
    tail = 0.0
    if rho < diameter:
        r = np.sqrt(np.sum(diff.astype(float) ** 2, axis=-1)) / k
        cut = r > rho + 1e-12
        tail = float((full * cut).sum(axis=1).max())
        matrix = np.where(cut, 0.0, full)
    return KernelTable(alpha=alpha, k=k, int_coords=coords, mode="regional", matrix=matrix, rho_trunc=rho, tail_mass=tail)


def periodic_kernel(lattice: Lattice, alpha: float, tail_tol: float = 1e-3) -> KernelTable:
    """Periodized table on the torus ``(-R, R]^d`` of the lattice."""
    P = lattice.side
    k = lattice.k
    coords = lattice.int_coords
    d = lattice.d
    diff = coords[None, :, :] - coords[:, None, :]
    diff = diff - P * np.ceil(diff / P - 0.5).astype(np.int64)
    if d == 1:
        u = np.mod(diff[..., 0], P) / P
        mat = np.zeros(u.shape)
        nz = u > 0
        mat[nz] = zeta(1.0 + alpha, u[nz]) + zeta(1.0 + alpha, 1.0 - u[nz])
        mat *= float(k) ** alpha * float(P) ** (-1.0 - alpha)
        table = KernelTable(alpha=alpha, k=k, int_coords=coords, mode="periodic", matrix=mat,
                            rho_trunc=math.inf, tail_mass=0.0, period=P)
        return table
    mat = np.zeros(diff.shape[:2])
    M = 0
    while True:
        for n in _image_vectors(d, M):
            if M and np.max(np.abs(n)) < M:
                continue
            mat += _pair_weights(diff + P * n, k, alpha)
        tail = float(k) ** alpha * lattice_tail_bound(d, alpha, (M + 0.5) * P)
        if tail <= tail_tol * mat.sum(axis=1).max():
            break
        M += 1
    return KernelTable(alpha=alpha, k=k, int_coords=coords, mode="periodic", matrix=mat,
                       rho_trunc=(M + 0.5) * P / k, tail_mass=tail, period=P, image_radius=M)


def build_kernel_table(lattice: Lattice, alpha: float, mode: str = "regional", *,
                       rho_trunc: float | None = None, tail_tol: float = 1e-3) -> KernelTable:
    """Kernel table for a lattice box in the given boundary mode."""
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if mode not in MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {MODES}")
    if mode == "periodic":
        return periodic_kernel(lattice, alpha, tail_tol=tail_tol)
    return regional_kernel(lattice.int_coords, alpha, k=lattice.k, rho_trunc=rho_trunc)
