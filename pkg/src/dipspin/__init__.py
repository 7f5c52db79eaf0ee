"""Classical dipolar spin dynamics: FID, magic echo and Pake doublets."""

from .geometry import (
    MAGIC_ANGLE,
    CoincidentSpinsError,
    CouplingTable,
    SpinSystem,
    build_couplings,
    build_cubic_lattice,
    build_line,
    dipole_tensor,
    line_direction,
)
from .dynamics import Mode, Reversal, SimPlan, Trajectory, integrate, rhs, total_energy
from .integrators import Integrator

__all__ = [
    "MAGIC_ANGLE",
    "CoincidentSpinsError",
    "CouplingTable",
    "Integrator",
    "Mode",
    "Reversal",
    "SimPlan",
    "SpinSystem",
    "Trajectory",
    "build_couplings",
    "build_cubic_lattice",
    "build_line",
    "dipole_tensor",
    "integrate",
    "line_direction",
    "rhs",
    "total_energy",
]
