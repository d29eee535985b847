"""The limiting profile Q and its frequency omega0.

The unit-frequency profile ``phi`` solves ``-Laplace phi + phi = phi^{p-1}``.  It is
found by shooting on ``phi(0)`` and then polished by Newton's method on the discrete
radial equation, so the stored profile solves the discrete problem to rounding level.
``Q`` follows by the exact rescaling

    Q(x) = omega0^{1/(p-2)} phi(sqrt(omega0) x),
    ||Q||^2 = omega0^{(10-3p)/(2(p-2))} ||phi||^2,

applied to the grid (nodes divided by ``sqrt(omega0)``) rather than by resampling.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.linalg import solve_banded

from .energy import EnergyParams, multiplier
from .errors import ParameterError, ShootingBracketError
from .fields import (
    RadialField,
    RadialGrid,
    check_p,
    h1_residual,
    mass,
)

DEFAULT_R_MAX = 20.0
DEFAULT_N = 4096
BRACKET = (1.0, 50.0)


@dataclass(eq=False)
class GroundState:
    profile_unit_freq: RadialField
    q: RadialField
    omega0: float
    p: float
    shoot_value: float
    residual_h1: float
    shoot_residual_h1: float

    @property
    def grid(self) -> RadialGrid:
        return self.q.grid

    @property
    def length_scale(self) -> float:
        """``1/sqrt(omega0)``: the decay length of Q."""
        return 1.0 / math.sqrt(self.omega0)


def _rhs(r: float, y: float, z: float, p: float) -> tuple[float, float]:
    return z, -2.0 * z / r + y - math.copysign(abs(y) ** (p - 1.0), y)


def _integrate(a: float, p: float, h: float, n: int, record: bool = False):
    """RK4 from ``r = h/2`` with the series start; returns (verdict, profile).

    ``verdict`` is +1 if the orbit crosses zero (``a`` too large), -1 if it turns back
    up before reaching zero (``a`` too small) and 0 if neither happens on the grid.
    """
    r = 0.5 * h
    c = (a - a ** (p - 1.0)) / 6.0
    y, z = a + c * r * r, 2.0 * c * r
    out = np.zeros(n) if record else None
    if record:
        out[0] = y
    for i in range(1, n):
        k1y, k1z = _rhs(r, y, z, p)
        k2y, k2z = _rhs(r + 0.5 * h, y + 0.5 * h * k1y, z + 0.5 * h * k1z, p)
        k3y, k3z = _rhs(r + 0.5 * h, y + 0.5 * h * k2y, z + 0.5 * h * k2z, p)
        k4y, k4z = _rhs(r + h, y + h * k3y, z + h * k3z, p)
        y += h * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        z += h * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0
        r += h
        if y < 0.0:
            return 1, out
        if z > 0.0:
            return -1, out
        if record:
            out[i] = y
    return 0, out


def classify_shot(a: float, p: float, grid: RadialGrid) -> int:
    return _integrate(a, p, grid.h, grid.n)[0]


def _polish(phi: np.ndarray, grid: RadialGrid, p: float, max_iter: int = 40) -> np.ndarray:
    """Newton on ``S phi / w + phi - |phi|^{p-2} phi = 0`` (tridiagonal Jacobian).

    Stops once the residual no longer decreases; returns the best iterate.
    """
    diag, sup = grid.stiffness_bands()
    w = grid.weights
    best_res, best = np.inf, phi
    for _ in range(max_iter):
        nl = np.abs(phi) ** (p - 2.0)
        g = grid.neg_laplacian(phi) + phi - nl * phi
        res = h1_residual(RadialField(grid, g), 1.0)
        if not res < best_res:
            break
        best_res, best = res, phi
        if res < 1e-15:
            break
        ab = np.zeros((3, grid.n))
        ab[0, 1:] = sup
        ab[1] = diag + w * (1.0 - (p - 1.0) * nl)
        ab[2, :-1] = sup
        phi = phi - solve_banded((1, 1), ab, w * g)
    return best


def shoot_profile(
    p: float,
    tol: float = 1e-13,
    grid: RadialGrid | None = None,
    bracket: tuple[float, float] = BRACKET,
    polish: bool = True,
) -> tuple[RadialField, float]:
    """Positive decaying solution of ``phi'' + (2/r) phi' - phi + phi^{p-1} = 0``.

    Bisects on ``a = phi(0)`` inside ``bracket`` until the bracket is narrower than
    ``tol * a`` or the orbit no longer leaves the grid.  Returns ``(phi, a)``.  With
    ``polish=False`` the raw RK4 orbit is returned (zero beyond the point where it
    departs from the decaying solution).
    """
    check_p(p)
    grid = grid or RadialGrid(DEFAULT_R_MAX, DEFAULT_N)
    lo, hi = map(float, bracket)
    if lo < 1.0:
        raise ParameterError("bracket must lie above the constant solution phi = 1")
    if lo == 1.0:
        lo = 1.0 + 1e-9
    if classify_shot(lo, p, grid) != -1 or classify_shot(hi, p, grid) != 1:
        raise ShootingBracketError(f"no sign change of the shooting verdict in [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * mid or mid in (lo, hi):
            break
        verdict = classify_shot(mid, p, grid)
        if verdict == 0:
            lo = hi = mid
            break
        if verdict > 0:
            hi = mid
        else:
            lo = mid
    a = 0.5 * (lo + hi)
    _, phi = _integrate(a, p, grid.h, grid.n, record=True)
    if polish:
        phi = _polish(phi, grid, p)
    return RadialField(grid, phi), a


def unit_frequency_residual(phi: RadialField, p: float) -> float:
    v = phi.values
    g = phi.grid.neg_laplacian(v) + v - np.abs(v) ** (p - 2.0) * v
    return h1_residual(phi.with_values(g), 1.0)


def mass_exponent(p: float) -> float:
    """``e`` in ``||Q||^2 = omega0^e ||phi||^2``."""
    return (10.0 - 3.0 * p) / (2.0 * (p - 2.0))


def scale_to_unit_mass(phi: RadialField, p: float) -> tuple[RadialField, float]:
    """Return ``(Q, omega0)`` with ``Q(x) = omega0^{1/(p-2)} phi(sqrt(omega0) x)``, unit mass."""
    check_p(p)
    m = mass(phi)
    if not m > 0:
        raise ParameterError("cannot rescale a zero profile")
    omega0 = m ** (-1.0 / mass_exponent(p))
    grid = phi.grid.scaled(1.0 / math.sqrt(omega0))
    return RadialField(grid, omega0 ** (1.0 / (p - 2.0)) * phi.values), omega0


def equation_residual(q: RadialField, p: float, omega: float, omega_norm: float | None = None) -> float:
    """H1 residual of ``-Laplace q + omega q - |q|^{p-2} q``."""
    v = q.values
    g = q.grid.neg_laplacian(v) + omega * v - np.abs(v) ** (p - 2.0) * v
    return h1_residual(q.with_values(g), omega_norm or omega)


def compute_groundstate(p: float, r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_N, tol: float = 1e-13) -> GroundState:
    grid = RadialGrid(r_max, n)
    raw, a = shoot_profile(p, tol, grid, polish=False)
    phi = RadialField(grid, _polish(raw.values, grid, p))
    q, omega0 = scale_to_unit_mass(phi, p)
    for arr in (phi.values, q.values):
        arr.setflags(write=False)
    return GroundState(
        profile_unit_freq=phi,
        q=q,
        omega0=omega0,
        p=float(p),
        shoot_value=a,
        residual_h1=equation_residual(q, p, omega0),
        shoot_residual_h1=unit_frequency_residual(raw, p),
    )


@lru_cache(maxsize=16)
def ground_state(p: float, r_max: float = DEFAULT_R_MAX, n: int = DEFAULT_N) -> GroundState:
    """Cached :func:`compute_groundstate`; the returned arrays are read-only."""
    return compute_groundstate(p, r_max, n)


@dataclass(frozen=True)
class GroundStateDiagnostics:
    mass: float
    positive: bool
    decreasing: bool
    residual_h1: float
    multiplier: float
    multiplier_error: float
    shoot_residual_h1: float

    def passed(self, mass_tol: float = 1e-10, residual_tol: float = 1e-6, multiplier_tol: float = 1e-6) -> bool:
        return (
            abs(self.mass - 1.0) <= mass_tol
            and self.positive
            and self.decreasing
            and self.residual_h1 <= residual_tol
            and self.multiplier_error <= multiplier_tol
        )


def verify_groundstate(gs: GroundState) -> GroundStateDiagnostics:
    q = gs.q
    om = multiplier(q, EnergyParams(0.0, gs.p))
    return GroundStateDiagnostics(
        mass=mass(q),
        positive=bool(np.all(q.values > 0)),
        decreasing=bool(np.all(np.diff(q.values) < 0)),
        residual_h1=equation_residual(q, gs.p, gs.omega0),
        multiplier=om,
        multiplier_error=abs(om - gs.omega0),
        shoot_residual_h1=gs.shoot_residual_h1,
    )
