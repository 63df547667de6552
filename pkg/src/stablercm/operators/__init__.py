"""Operator families: scaled random, regional, non-divergence, deterministic discrete and continuum."""

from .discrete import (
    FAMILIES,
    ConductanceCache,
    OperatorHandle,
    apply_bar_discrete,
    apply_hat,
    apply_regional,
    apply_scaled,
    dirichlet_energy,
    make_operator,
    pair_energy,
    regional_operator,
)
from .kernel import KernelTable, build_kernel_table, lattice_tail_bound, periodic_kernel, regional_kernel
from .spectral import (
    PeriodicGrid,
    apply_bar_continuum,
    grid_for_lattice,
    stable_constant,
    stable_constant_closed_form,
)

__all__ = [
    "FAMILIES",
    "ConductanceCache",
    "KernelTable",
    "OperatorHandle",
    "PeriodicGrid",
    "apply_bar_continuum",
    "apply_bar_discrete",
    "apply_hat",
    "apply_regional",
    "apply_scaled",
    "build_kernel_table",
    "dirichlet_energy",
    "grid_for_lattice",
    "lattice_tail_bound",
    "make_operator",
    "pair_energy",
    "periodic_kernel",
    "regional_kernel",
    "regional_operator",
    "stable_constant",
    "stable_constant_closed_form",
]
