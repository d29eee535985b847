"""Schrödinger–Poisson–Slater energy, its L2 gradient and the Lagrange multiplier.

Coefficient convention: for coupling ``rho`` the energy is

    E(u) = 1/2 int |grad u|^2 + (rho / 4) D(u) - (1/p) int |u|^p,
    D(u) = int int |u(x)|^2 |u(y)|^2 / |x - y| dx dy,

so that critical points on the unit sphere solve

    -Laplace v + omega v + rho (|v|^2 * 1/|x|) v - |v|^{p-2} v = 0

with exactly coefficient ``rho`` in front of the Hartree term.  With ``rho = 1`` this
is the ``1/4``-weighted energy of the mass-``rho`` problem.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
import warnings

import numpy as np
from scipy import fft as sfft

from .errors import DegenerateError, ParameterError, TruncationRiskError
from .fields import (
    CartesianField,
    CartesianGrid,
    Field,
    RadialField,
    RadialGrid,
    check_p,
    kinetic_integral,
    lp_norm_p,
    mass,
    workers,
)

# int over the unit cube [-1/2, 1/2]^3 of 1/|x|
CUBE_INVERSE_DISTANCE = 6.0 * np.log((1.0 + np.sqrt(3.0)) / np.sqrt(2.0)) - np.pi / 2.0


@dataclass(frozen=True)
class EnergyParams:
    rho: float
    p: float

    def __post_init__(self):
        if not (self.rho >= 0 and np.isfinite(self.rho)):
            raise ParameterError(f"rho must be a nonnegative number, got {self.rho}")
        check_p(self.p)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    hartree: float
    p_potential: float
    total: float
    rho: float
    p: float

    def to_dict(self) -> dict:
        return asdict(self)


def radial_potential(density: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Coulomb potential of a radial density in O(n).

    ``Phi_i = sum_j w_j density_j / max(r_i, r_j)``: the midpoint rule applied to
    ``(1/r) int_0^r 4 pi s^2 density + int_r^inf 4 pi s density``.  The kernel is
    symmetric in the quadrature inner product, so the discrete Hartree energy has
    ``2 Phi`` as its exact gradient.

    For smooth densities the leading error of these sums is ``pi h^2 density_i / 3``
    at every node (the derivative terms of the two midpoint errors cancel), so it is
    subtracted on the diagonal, which keeps the kernel symmetric.
    """
    r, w, h = grid.nodes, grid.weights, grid.h
    cell_mass = w * density
    inner = np.cumsum(cell_mass)
    outer_terms = cell_mass / r
    outer = np.cumsum(outer_terms[::-1])[::-1] - outer_terms
    return inner / r + outer - (np.pi * h * h / 3.0) * density


def newton_potential_radial(density: RadialField) -> RadialField:
    if np.min(density.values) < 0:
        lo = float(np.min(density.values))
        if lo < -1e-12 * max(float(np.max(np.abs(density.values))), 1e-300):
            warnings.warn(f"density has negative values (min {lo:.3e})", stacklevel=2)
    return density.with_values(radial_potential(density.values, density.grid))


@lru_cache(maxsize=8)
def _coulomb_kernel_hat(box_length: float, m: int) -> np.ndarray:
    dx = box_length / m
    k = np.arange(2 * m)
    k = np.where(k < m, k, k - 2 * m) * dx
    d = np.sqrt(k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)
    d[0, 0, 0] = 1.0
    g = 1.0 / d
    g[0, 0, 0] = CUBE_INVERSE_DISTANCE / dx
    return sfft.rfftn(g * dx**3, workers=workers())


def _boundary_max(a: np.ndarray) -> float:
    return float(
        max(
            np.abs(a[[0, -1]]).max(),
            np.abs(a[:, [0, -1]]).max(),
            np.abs(a[:, :, [0, -1]]).max(),
        )
    )


def cartesian_potential(density: np.ndarray, grid: CartesianGrid, check_decay: bool = True) -> np.ndarray:
    """Free-space convolution with ``1/|x|`` by zero padding to ``(2m)^3``."""
    m = grid.m
    if check_decay:
        top = float(np.abs(density).max())
        if top > 0 and _boundary_max(density) >= 1e-8 * top:
            raise TruncationRiskError(
                f"density at the box boundary is {_boundary_max(density) / top:.2e} of its "
                "maximum (needs < 1e-8); enlarge the box"
            )
    padded = np.zeros((2 * m,) * 3)
    padded[:m, :m, :m] = density
    out = sfft.irfftn(
        sfft.rfftn(padded, workers=workers()) * _coulomb_kernel_hat(grid.box_length, m),
        s=padded.shape,
        workers=workers(),
    )
    return out[:m, :m, :m]


def coulomb_potential_3d(density: CartesianField, check_decay: bool = True) -> CartesianField:
    return density.with_values(cartesian_potential(density.values, density.grid, check_decay))


def potential_of(values: np.ndarray, grid, check_decay: bool = False) -> np.ndarray:
    if isinstance(grid, RadialGrid):
        return radial_potential(values, grid)
    return cartesian_potential(values, grid, check_decay)


def hartree_energy(u: Field, check_decay: bool = False) -> float:
    """``D(u) = int (|u|^2 * 1/|x|) |u|^2``."""
    rho_u = u.values * u.values
    return u.grid.integrate(potential_of(rho_u, u.grid, check_decay) * rho_u)


def energy(u: Field, params: EnergyParams) -> EnergyBreakdown:
    kin = 0.5 * kinetic_integral(u)
    hart = hartree_energy(u)
    lp = lp_norm_p(u, params.p) / params.p
    return EnergyBreakdown(
        kinetic=kin,
        hartree=hart,
        p_potential=lp,
        total=kin + 0.25 * params.rho * hart - lp,
        rho=params.rho,
        p=params.p,
    )


def signed_power(u: np.ndarray, p: float) -> np.ndarray:
    """``|u|^{p-2} u`` without complex intermediates."""
    return np.sign(u) * np.abs(u) ** (p - 1.0)


def gradient_values(u: np.ndarray, grid, params: EnergyParams, omega: float) -> np.ndarray:
    g = grid.neg_laplacian(u) + omega * u - signed_power(u, params.p)
    if params.rho:
        g += params.rho * potential_of(u * u, grid) * u
    return g


def gradient(u: Field, params: EnergyParams, omega: float = 0.0) -> Field:
    """L2 gradient of ``E + (omega/2) ||u||^2``."""
    return u.with_values(gradient_values(u.values, u.grid, params, omega))


def multiplier(u: Field, params: EnergyParams) -> float:
    """Frequency ``omega`` of the Euler–Lagrange equation satisfied by ``u``.

    ``(int |u|^p - int |grad u|^2 - rho D(u)) / ||u||^2``.
    """
    m = mass(u)
    if not m > 0:
        raise DegenerateError("multiplier undefined for a zero field")
    num = lp_norm_p(u, params.p) - kinetic_integral(u)
    if params.rho:
        num -= params.rho * hartree_energy(u)
    return num / m
