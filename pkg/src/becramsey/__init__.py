"""Ramsey interferometry simulator for a two-component BEC in power-law traps."""

__version__ = "0.1.0"

from .params import (
    SpeciesSpec,
    TrapSpec,
    derive_couplings,
    critical_atom_numbers,
    reduce_problem,
    unit_system,
)

__all__ = [
    "SpeciesSpec",
    "TrapSpec",
    "derive_couplings",
    "critical_atom_numbers",
    "reduce_problem",
    "unit_system",
]
