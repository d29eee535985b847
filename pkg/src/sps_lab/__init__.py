"""Numerical laboratory for constrained minimizers of the Schrödinger–Poisson–Slater energy."""
from .energy import EnergyBreakdown, EnergyParams, energy, gradient, hartree_energy, multiplier
from .errors import SPSError
from .fields import (
    CartesianField,
    CartesianGrid,
    RadialField,
    RadialGrid,
    embed_radial,
    h1_norm_sq,
    lp_norm_p,
    mass,
    normalize_mass,
    spherical_average,
)
from .groundstate import GroundState, ground_state, verify_groundstate

__version__ = "0.1.0"

__all__ = [
    "CartesianField",
    "CartesianGrid",
    "EnergyBreakdown",
    "EnergyParams",
    "GroundState",
    "RadialField",
    "RadialGrid",
    "SPSError",
    "__version__",
    "embed_radial",
    "energy",
    "gradient",
    "ground_state",
    "h1_norm_sq",
    "hartree_energy",
    "lp_norm_p",
    "mass",
    "multiplier",
    "normalize_mass",
    "spherical_average",
    "verify_groundstate",
]
