"""Geometry of the translation orbit ``{Q(. + tau)}`` and the asymmetry metric.

Convention: ``Q_tau(x) = Q(x + tau)``, i.e. ``Q_tau`` is centred at ``-tau``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DegenerateError, GeometryError, OutsideTubeError
from .fields import (
    CartesianField,
    CartesianGrid,
    Field,
    RadialField,
    eval_radial,
    h1_distance,
    h1_norm_sq,
    radial_interpolant,
    radial_profile_fit,
)
from .groundstate import GroundState


@dataclass(eq=False)
class Decomposition:
    tau: np.ndarray
    remainder: Field = field(repr=False)
    ortho_residuals: np.ndarray
    newton_iters: int


class Orbit:
    """Translates of a radial ground state sampled on a Cartesian grid."""

    def __init__(self, gs: GroundState, grid: CartesianGrid):
        self.gs = gs
        self.grid = grid
        self._q = radial_interpolant(gs.q)
        self._dq = self._q.derivative()
        self._d2q = self._q.derivative(2)

    def _offsets(self, tau):
        X, Y, Z = self.grid.coords()
        t = np.asarray(tau, dtype=float)
        xs = (X + t[0], Y + t[1], Z + t[2])
        r = np.sqrt(xs[0] ** 2 + xs[1] ** 2 + xs[2] ** 2)
        return xs, r

    def point(self, tau=(0.0, 0.0, 0.0)) -> CartesianField:
        _, r = self._offsets(tau)
        return CartesianField(self.grid, eval_radial(self._q, r))

    def tangent_basis(self, tau=(0.0, 0.0, 0.0)) -> list[CartesianField]:
        """``d/dx_i Q(x + tau) = Q'(r) (x_i + tau_i) / r``."""
        xs, r = self._offsets(tau)
        dq_over_r = _safe_ratio(eval_radial(self._dq, r), r)
        return [CartesianField(self.grid, np.broadcast_to(dq_over_r * x, r.shape).copy()) for x in xs]

    def _second_derivatives(self, xs, r) -> list[list[np.ndarray]]:
        dq_over_r = _safe_ratio(eval_radial(self._dq, r), r)
        # Q'' - Q'/r, divided by r^2
        radial = _safe_ratio(eval_radial(self._d2q, r) - dq_over_r, r * r)
        out = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(i, 3):
                hij = radial * xs[i] * xs[j]
                if i == j:
                    hij = hij + dq_over_r
                out[i][j] = out[j][i] = np.broadcast_to(hij, r.shape)
        return out

    def decompose(self, u: CartesianField, tau0=None, max_iter: int = 50) -> Decomposition:
        """Split ``u = Q_tau + R`` with ``R`` L2-orthogonal to the tangent space at ``Q_tau``.

        Newton on ``g_i(tau) = <u - Q_tau, d_i Q_tau>`` with Jacobian
        ``-<d_j Q_tau, d_i Q_tau> + <u - Q_tau, d_i d_j Q_tau>``.
        """
        grid = self.grid
        tau = -centroid(u) if tau0 is None else np.asarray(tau0, dtype=float).copy()
        scale = math.sqrt(max(grid.inner(u.values, u.values), 1e-300))
        step_cap = 0.5 * self.gs.length_scale
        prev = np.inf
        for it in range(1, max_iter + 1):
            xs, r = self._offsets(tau)
            rem = u.values - eval_radial(self._q, r)
            dq_over_r = _safe_ratio(eval_radial(self._dq, r), r)
            basis = [dq_over_r * x for x in xs]
            g = np.array([grid.inner(rem, b) for b in basis])
            gram = np.array([[grid.inner(bi, bj) for bj in basis] for bi in basis])
            hess = self._second_derivatives(xs, r)
            jac = -gram + np.array([[grid.inner(rem, hess[i][j]) for j in range(3)] for i in range(3)])
            try:
                step = np.linalg.solve(jac, -g)
            except np.linalg.LinAlgError:
                step = np.linalg.solve(gram, g)
            if not np.all(np.isfinite(step)) or np.linalg.cond(jac) > 1e12:
                step = np.linalg.solve(gram, g)
            norm = float(np.linalg.norm(step))
            if norm > step_cap:
                step *= step_cap / norm
            if norm <= 1e-13 * max(1.0, float(np.linalg.norm(tau))) or np.max(np.abs(g)) <= 1e-16 * scale:
                return Decomposition(tau, u.with_values(rem), g, it)
            if it > 8 and norm > 0.9 * prev:
                raise OutsideTubeError(
                    f"translation Newton stagnated after {it} steps (|step| = {norm:.2e})"
                )
            prev = norm
            tau = tau + step
        raise OutsideTubeError(f"translation Newton did not converge in {max_iter} steps")

    def project_tangent_complement(self, h: CartesianField, tau=(0.0, 0.0, 0.0)) -> CartesianField:
        basis = [b.values for b in self.tangent_basis(tau)]
        grid = self.grid
        gram = np.array([[grid.inner(bi, bj) for bj in basis] for bi in basis])
        coef = np.linalg.solve(gram, np.array([grid.inner(h.values, b) for b in basis]))
        return h.with_values(h.values - sum(c * b for c, b in zip(coef, basis)))

    def distance_to_orbit(self, u: CartesianField) -> tuple[np.ndarray, float]:
        dec = self.decompose(u)
        return dec.tau, math.sqrt(h1_norm_sq(dec.remainder, self.gs.omega0))


def _safe_ratio(num, den):
    den = np.asarray(den)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def radial_distance_to_q(u: RadialField, gs: GroundState) -> float:
    """``||u - Q||_{H1}`` for a radial field on the ground-state grid (tau = 0)."""
    q = gs.q
    if u.grid != q.grid:
        u = RadialField(q.grid, eval_radial(radial_interpolant(u), q.grid.nodes))
    return h1_distance(u, q, gs.omega0)


def distance_to_orbit(u: Field, gs: GroundState) -> tuple[np.ndarray, float]:
    """Translation and H1 distance from ``u`` to the orbit of Q.

    Radial fields are their own projection (tau = 0), so no Newton solve is needed.
    """
    if isinstance(u, RadialField):
        return np.zeros(3), radial_distance_to_q(u, gs)
    return Orbit(gs, u.grid).distance_to_orbit(u)


def centroid(u: CartesianField) -> np.ndarray:
    """Density centroid ``int x |u|^2 / int |u|^2``."""
    d = u.values * u.values
    total = d.sum()
    if not total > 0:
        raise DegenerateError("centroid of a zero field")
    a = u.grid.axis
    return np.array([
        np.dot(d.sum(axis=(0, 1)), a) / total,
        np.dot(d.sum(axis=(0, 2)), a) / total,
        np.dot(d.sum(axis=(1, 2)), a) / total,
    ])


def peak_center(u: CartesianField) -> np.ndarray:
    k, j, i = np.unravel_index(np.argmax(np.abs(u.values)), u.values.shape)
    a = u.grid.axis
    return np.array([a[i], a[j], a[k]])


def _lattice_offsets(grid: CartesianGrid, center, tol: float = 1e-9):
    """Integer offsets ``2 (x - center) / dx`` if ``center`` is a lattice symmetry point."""
    half = 0.5 * grid.spacing
    s = (np.asarray(center, dtype=float) - grid.axis[0]) / half
    k = np.round(s)
    if np.max(np.abs(s - k)) > tol:
        return None
    idx = 2 * np.arange(grid.m, dtype=np.int64)
    ox, oy, oz = (idx - int(kk) for kk in k)
    return ox[None, None, :], oy[None, :, None], oz[:, None, None]


def radial_projection(u: CartesianField, center) -> np.ndarray:
    """Best L2 approximation of ``u`` by a function of ``|x - center|``.

    When ``center`` is a lattice symmetry point (a node, cell face or cell corner) the
    grid points split into classes of exactly equal radius and the projection is the
    class average, which reproduces any sampled radial function to rounding error.
    Otherwise all radii are distinct and the radial profile is restricted to cubic
    splines with knots at multiples of the grid spacing, fitted by least squares.
    """
    grid = u.grid
    offsets = _lattice_offsets(grid, center)
    vals = u.values.ravel()
    if offsets is not None:
        ox, oy, oz = offsets
        key = (ox * ox + oy * oy + oz * oz).ravel()
        _, inv = np.unique(key, return_inverse=True)
        sums = np.bincount(inv, weights=vals)
        counts = np.bincount(inv)
        return (sums / counts)[inv].reshape(u.values.shape)
    spl, _ = radial_profile_fit(u, center)
    return spl(grid.distance_from(center))


def asymmetry(u: CartesianField, center=None, use_peak: bool = False) -> float:
    """Relative L2 distance between ``u`` and its radial projection about its centre.

    The centre defaults to the density centroid; ``use_peak`` switches to the location
    of the largest ``|u|`` (grid quantized, for cross-checks).
    """
    norm = math.sqrt(u.grid.inner(u.values, u.values))
    if not norm > 0:
        raise DegenerateError("asymmetry of a zero field")
    if center is None:
        center = peak_center(u) if use_peak else centroid(u)
    if not u.grid.contains(center):
        raise GeometryError("centre outside the box")
    diff = u.values - radial_projection(u, center)
    return math.sqrt(u.grid.inner(diff, diff)) / norm
