"""Radial and Cartesian grids, discretized fields and their norms.

Radial grids are cell centred, ``r_i = (i + 1/2) h`` with ``h = r_max / n``, and every
node owns the spherical shell ``[i h, (i + 1) h]``.  Quadrature is the midpoint rule
with weights ``4 pi r_i^2 h``.  For integrands that are smooth, even in ``r`` and
decayed at ``r_max`` (``|u|^2``, ``|u|^p`` of a decayed profile) the midpoint rule has
no algebraic error terms, so the Gaussian moments come out at rounding level; the
constant function is integrated only to second order (relative error
``1 / (4 n^2)``).  The kinetic term is a finite-volume sum over shell faces with a zero
ghost value just outside ``r_max``; its L2 gradient is the three-point radial Laplacian
used everywhere else, so discrete energies and discrete gradients are exactly
consistent.

Cartesian grids are cubes centred on the origin, also cell centred, with zero
(Dirichlet) ghost cells around the box.  Arrays are stored with shape ``(m, m, m)``
indexed ``[z, y, x]`` so that C-order flattening puts x fastest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union
import warnings

import numpy as np
from scipy import fft as sfft
from scipy.interpolate import PchipInterpolator, make_lsq_spline
from scipy.linalg import solveh_banded

from .errors import DegenerateError, GeometryError, InvalidFieldError, ParameterError

P_MIN = 2.0
P_MAX = 10.0 / 3.0


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if not (self.r_max > 0 and np.isfinite(self.r_max)):
            raise ParameterError(f"r_max must be positive, got {self.r_max}")
        if int(self.n) != self.n or self.n < 4:
            raise ParameterError(f"n must be an integer >= 4, got {self.n}")

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        r = (np.arange(self.n) + 0.5) * self.h
        r.setflags(write=False)
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        r, h = self.nodes, self.h
        w = 4.0 * np.pi * h * r * r
        w.setflags(write=False)
        return w

    @cached_property
    def _face_coeff(self) -> np.ndarray:
        # face k sits at (k + 1) h; the last one is the outer boundary
        f = (np.arange(self.n) + 1.0) * self.h
        return 4.0 * np.pi * f * f / self.h

    def scaled(self, factor: float) -> "RadialGrid":
        """Same node count, all lengths multiplied by ``factor``."""
        return RadialGrid(self.r_max * factor, self.n)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(self.weights, a * b))

    def kinetic(self, u: np.ndarray) -> float:
        """Discrete ``int |grad u|^2``."""
        d = np.empty_like(u)
        d[:-1] = u[1:] - u[:-1]
        d[-1] = -u[-1]
        return float(np.dot(self._face_coeff, d * d))

    def stiffness_bands(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and superdiagonal of the symmetric stiffness matrix ``S``.

        ``kinetic(u) == u @ S @ u`` and ``-Laplace(u) == S u / weights``.
        """
        c = self._face_coeff
        diag = c.copy()
        diag[1:] += c[:-1]
        return diag, -c[:-1]

    def neg_laplacian(self, u: np.ndarray) -> np.ndarray:
        c = self._face_coeff
        flux = np.empty_like(u)
        flux[:-1] = c[:-1] * (u[1:] - u[:-1])
        flux[-1] = -c[-1] * u[-1]
        out = -flux
        out[1:] += flux[:-1]
        return out / self.weights

    def solve_shifted(self, g: np.ndarray, shift: float) -> np.ndarray:
        """Solve ``(-Laplace + shift) u = g`` with a banded Cholesky factorization."""
        diag, sup = self.stiffness_bands()
        ab = np.zeros((2, self.n))
        ab[0, 1:] = sup
        ab[1] = diag + shift * self.weights
        return solveh_banded(ab, self.weights * g)


@dataclass(frozen=True)
class CartesianGrid:
    box_length: float
    m: int

    def __post_init__(self):
        if not (self.box_length > 0 and np.isfinite(self.box_length)):
            raise ParameterError(f"box_length must be positive, got {self.box_length}")
        if int(self.m) != self.m or self.m < 8 or self.m % 2:
            raise ParameterError(f"m must be an even integer >= 8, got {self.m}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.m

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def axis(self) -> np.ndarray:
        # exactly antisymmetric: a[m - 1 - i] == -a[i]
        a = (np.arange(self.m) - 0.5 * (self.m - 1)) * self.spacing
        a.setflags(write=False)
        return a

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable ``(X, Y, Z)`` coordinate arrays for ``[z, y, x]`` indexing."""
        a = self.axis
        return a[None, None, :], a[None, :, None], a[:, None, None]

    def distance_from(self, center) -> np.ndarray:
        X, Y, Z = self.coords()
        cx, cy, cz = center
        return np.sqrt((X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2)

    def contains(self, center) -> bool:
        return bool(np.all(np.abs(np.asarray(center, dtype=float)) <= 0.5 * self.box_length))

    def integrate(self, f: np.ndarray) -> float:
        return float(f.sum() * self.cell_volume)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.vdot(a, b).real * self.cell_volume)

    def kinetic(self, u: np.ndarray) -> float:
        total = 0.0
        for ax in range(3):
            d = np.diff(u, axis=ax, prepend=0.0, append=0.0)
            total += float(np.vdot(d, d).real)
        return total * self.spacing

    def neg_laplacian(self, u: np.ndarray) -> np.ndarray:
        out = 6.0 * u
        out[1:] -= u[:-1]
        out[:-1] -= u[1:]
        out[:, 1:] -= u[:, :-1]
        out[:, :-1] -= u[:, 1:]
        out[:, :, 1:] -= u[:, :, :-1]
        out[:, :, :-1] -= u[:, :, 1:]
        return out / self.spacing**2

    @cached_property
    def _laplacian_symbol(self) -> np.ndarray:
        k = np.arange(1, self.m + 1)
        lam = (2.0 - 2.0 * np.cos(np.pi * k / (self.m + 1))) / self.spacing**2
        return lam[:, None, None] + lam[None, :, None] + lam[None, None, :]

    def solve_shifted(self, g: np.ndarray, shift: float) -> np.ndarray:
        """Solve ``(-Laplace + shift) u = g``; DST-I diagonalizes the Dirichlet stencil."""
        ghat = sfft.dstn(g, type=1, workers=workers())
        return sfft.idstn(ghat / (self._laplacian_symbol + shift), type=1, workers=workers())


Grid = Union[RadialGrid, CartesianGrid]


def workers() -> int:
    """Thread cap for FFTs, from ``SPS_LAB_THREADS`` (default 1)."""
    import os

    try:
        return max(1, int(os.environ.get("SPS_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise InvalidFieldError(
                f"radial field needs {self.grid.n} values, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidFieldError("field contains non-finite values")

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, values)


@dataclass(eq=False)
class CartesianField:
    grid: CartesianGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = self.grid.m
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1 and v.size == m**3:
            v = v.reshape(m, m, m)
        if v.shape != (m, m, m):
            raise InvalidFieldError(f"cartesian field needs {m}^3 values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidFieldError("field contains non-finite values")
        self.values = v

    def with_values(self, values) -> "CartesianField":
        return CartesianField(self.grid, values)


Field = Union[RadialField, CartesianField]


def check_p(p: float) -> float:
    if not (P_MIN < p < P_MAX):
        raise ParameterError(f"p must lie in (2, 10/3), got {p}")
    return float(p)


def mass(u: Field) -> float:
    """``int |u|^2 dx``."""
    return u.grid.integrate(u.values * u.values)


def kinetic_integral(u: Field) -> float:
    """``int |grad u|^2 dx``."""
    return u.grid.kinetic(u.values)


def h1_norm_sq(u: Field, omega0: float) -> float:
    """``int |grad u|^2 + omega0 int |u|^2``."""
    if not omega0 > 0:
        raise ParameterError(f"omega0 must be positive, got {omega0}")
    return kinetic_integral(u) + omega0 * mass(u)


def h1_distance(u: Field, v: Field, omega0: float) -> float:
    return float(np.sqrt(h1_norm_sq(u.with_values(u.values - v.values), omega0)))


def h1_residual(g: Field, omega0: float) -> float:
    """H1 norm of the Riesz representative of an L2 gradient ``g``.

    Equals ``sqrt(<g, (-Laplace + omega0)^{-1} g>)``: the size of the gradient measured
    in the ``H1`` inner product with weight ``omega0``.
    """
    if not omega0 > 0:
        raise ParameterError(f"omega0 must be positive, got {omega0}")
    x = g.grid.solve_shifted(g.values, omega0)
    return float(np.sqrt(max(g.grid.inner(g.values, x), 0.0)))


def lp_norm_p(u: Field, p: float) -> float:
    """``int |u|^p dx`` (the raw integral, not its p-th root)."""
    check_p(p)
    return u.grid.integrate(np.abs(u.values) ** p)


def normalize_mass(u: Field, target: float = 1.0) -> Field:
    """Rescale ``u`` so that ``||u||_{L2} == target``."""
    if not target > 0:
        raise ParameterError(f"target must be positive, got {target}")
    m = mass(u)
    if not m > 0:
        raise DegenerateError("cannot normalize a zero field")
    return u.with_values(u.values * (target / np.sqrt(m)))


def radial_interpolant(rf: RadialField) -> PchipInterpolator:
    """Monotone cubic interpolant of ``rf`` on ``[0, inf)``.

    The profile is mirrored across ``r = 0`` (even extension) and pinned to zero at the
    ghost node beyond ``r_max``.  Evaluate with :func:`eval_radial`, which returns 0
    outside the support.
    """
    r, v, h = rf.grid.nodes, rf.values, rf.grid.h
    k = min(4, rf.grid.n)
    x = np.concatenate([-r[:k][::-1], r, [rf.grid.r_max + 0.5 * h]])
    y = np.concatenate([v[:k][::-1], v, [0.0]])
    return PchipInterpolator(x, y, extrapolate=False)


def eval_radial(interp, r: np.ndarray, nu: int = 0) -> np.ndarray:
    out = interp(r, nu) if nu else interp(r)
    return np.nan_to_num(out, nan=0.0)


def embed_radial(rf: RadialField, cg: CartesianGrid, center=(0.0, 0.0, 0.0)) -> CartesianField:
    """Sample ``u(|x - center|)`` on a Cartesian grid."""
    if not cg.contains(center):
        raise GeometryError(f"center {tuple(center)} lies outside the box")
    d = cg.distance_from(center)
    return CartesianField(cg, eval_radial(radial_interpolant(rf), d))


def radial_profile_fit(cf: CartesianField, center):
    """Least-squares cubic spline ``s`` with ``cf(x) ~ s(|x - center|)``.

    Knots sit on multiples of the grid spacing, so a lattice translation of ``cf`` and
    ``center`` leaves the fit unchanged away from the box corners.  The last knot
    interval absorbs the sparse corner distances.  Returns ``(spline, max_distance)``.
    """
    grid = cf.grid
    d = grid.distance_from(center).ravel()
    order = np.argsort(d, kind="stable")
    ds, vs = d[order], cf.values.ravel()[order]
    dx = grid.spacing
    nk = max(int(ds[-1] // dx) - 1, 4)
    pos = np.concatenate([np.arange(1, nk) * dx, [ds[-1] * (1 + 1e-12)]])
    # fit the even extension so the profile is smooth through r = 0, where few
    # grid points pin it down
    interior = np.concatenate([-pos[::-1], [0.0], pos])
    knots = np.concatenate([[interior[0]] * 3, interior, [interior[-1]] * 3])
    x = np.concatenate([-ds[::-1], ds])
    y = np.concatenate([vs[::-1], vs])
    return make_lsq_spline(x, y, knots, k=3), ds[-1]


def spherical_average(cf: CartesianField, center, rg: RadialGrid) -> RadialField:
    """Radial profile of ``cf`` about ``center`` sampled on the nodes of ``rg``.

    The profile is the least-squares radial spline of :func:`radial_profile_fit`, which
    is second order in the grid spacing (plain shell binning is only first order).
    Nodes farther than any grid point are set to zero.
    """
    if not cf.grid.contains(center):
        raise GeometryError(f"center {tuple(center)} lies outside the box")
    spl, dmax = radial_profile_fit(cf, center)
    r = rg.nodes
    return RadialField(rg, np.where(r <= dmax, spl(np.minimum(r, dmax)), 0.0))


def warn_if_not_decayed(u: RadialField, threshold: float = 1e-12) -> None:
    tail = abs(u.values[-1])
    scale = np.max(np.abs(u.values))
    if scale > 0 and tail > threshold * scale:
        warnings.warn(
            f"radial field is not decayed at r_max (|u(r_max)|/max = {tail / scale:.2e})",
            stacklevel=2,
        )
