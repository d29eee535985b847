"""Change of variables between the mass-``rho`` problem and the unit-mass problem.

With ``u_rho(x) = rho^a u(rho^b x)``, ``a = 4/(10-3p)`` and ``b = 2(p-2)/(10-3p)``,
direct substitution gives

    ||u_rho||^2            = rho^(2a-3b) ||u||^2         = rho^2 ||u||^2
    int |grad u_rho|^2     = rho^(2a-b)  int |grad u|^2  = rho^gamma int |grad u|^2
    int |u_rho|^p          = rho^(pa-3b) int |u|^p       = rho^gamma int |u|^p
    D(u_rho)               = rho^(4a-5b) D(u)            = rho^(gamma+alpha) D(u)

with ``gamma = (12-2p)/(10-3p)`` and ``alpha = (24-8p)/(10-3p)``.  Hence, with the
``1/4``-weighted Hartree term of :func:`sps_lab.energy.energy`,

    E(u_rho; coupling 1) = rho^gamma * E(u; coupling rho^alpha)

holds with prefactor exactly 1.  The printed form of ``alpha`` is kept alongside the
simplified one; the two agree identically.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .energy import EnergyParams, energy
from .errors import ParameterError
from .fields import RadialField, check_p, mass

# Coupling of the unit-mass problem is COUPLING_PREFACTOR * rho^alpha under the 1/4-weighted
# Hartree term; a Hartree term written without the 1/4 would need 1/4 here instead.
COUPLING_PREFACTOR = 1.0


def _check(p: float) -> float:
    if p == 10.0 / 3.0 or abs(10.0 - 3.0 * p) < 1e-15:
        raise ParameterError("p = 10/3 is a pole of the scaling exponents")
    return check_p(p)


def amp_exponent(p: float) -> float:
    _check(p)
    return 4.0 / (10.0 - 3.0 * p)


def len_exponent(p: float) -> float:
    _check(p)
    return 2.0 * (p - 2.0) / (10.0 - 3.0 * p)


def energy_exponent(p: float) -> float:
    """``gamma`` with ``E(u_rho) = rho^gamma E(u)`` term by term (Hartree aside)."""
    _check(p)
    return (12.0 - 2.0 * p) / (10.0 - 3.0 * p)


def alpha_printed(p: float) -> float:
    _check(p)
    q = p - 2.0
    return (16.0 + 2.0 * q - 12.0 * q - 4.0 * p + 6.0 * q) / (4.0 - 3.0 * q)


def alpha(p: float) -> float:
    """Exponent of the Hartree coupling in the unit-mass problem, ``(24-8p)/(10-3p)``."""
    _check(p)
    return (24.0 - 8.0 * p) / (10.0 - 3.0 * p)


@dataclass(frozen=True)
class ScalingMap:
    rho: float
    p: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        _check(self.p)

    @property
    def amp_exp(self) -> float:
        return amp_exponent(self.p)

    @property
    def len_exp(self) -> float:
        return len_exponent(self.p)

    @property
    def alpha(self) -> float:
        return alpha(self.p)

    @property
    def coupling(self) -> float:
        """Hartree coupling ``rho^alpha`` of the equivalent unit-mass problem."""
        return COUPLING_PREFACTOR * self.rho**self.alpha

    def apply(self, u: RadialField) -> RadialField:
        grid = u.grid.scaled(self.rho ** (-self.len_exp))
        return RadialField(grid, self.rho**self.amp_exp * u.values)


def rescale_field(u: RadialField, rho: float, p: float, check_mass: bool = True) -> RadialField:
    """``u_rho(x) = rho^a u(rho^b x)`` by moving the grid, not by resampling."""
    if check_mass and abs(mass(u) - 1.0) > 1e-8:
        raise ParameterError(f"rescale_field expects a unit-mass field (mass {mass(u):.6g})")
    return ScalingMap(rho, p).apply(u)


def verify_equivalence(u: RadialField, rho: float, p: float, check_mass: bool = True) -> float:
    """Relative discrepancy between both sides of the rescaling identity."""
    smap = ScalingMap(rho, p)
    lhs = energy(rescale_field(u, rho, p, check_mass), EnergyParams(1.0, p)).total
    rhs = rho ** energy_exponent(p) * energy(u, EnergyParams(smap.coupling, p)).total
    if lhs == rhs:
        return 0.0
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))


def alpha_table(ps) -> list[tuple[float, float, float]]:
    return [(float(p), alpha_printed(p), alpha(p)) for p in np.asarray(ps, dtype=float)]


def equivalence_sweep(fields, rhos, p: float) -> np.ndarray:
    """Discrepancy matrix, one row per field and one column per ``rho``."""
    return np.array([[verify_equivalence(u, r, p) for r in rhos] for u in fields])


def random_smooth_field(grid, rng: np.random.Generator) -> RadialField:
    """Unit-mass positive field: a Gaussian of random width times a random smooth factor."""
    r = grid.nodes
    width = rng.uniform(0.6, 1.6)
    c = rng.normal(size=3) * 0.2
    vals = np.exp(-0.5 * (r / width) ** 2) * (1.0 + c[0] * np.cos(r) + c[1] * r * np.exp(-r) + c[2] * np.tanh(r - 1.0) ** 2)
    u = RadialField(grid, vals)
    return RadialField(grid, vals / math.sqrt(mass(u)))
