"""Radial solution branch ``w(rho, omega)`` and spectra of the linearized operator.

The linearization of ``-Laplace w + omega w + rho Phi[w^2] w - |w|^{p-2} w`` at ``w``,
restricted to the angular channel ``l``, acts on radial profiles ``h`` by

    L_l h = -Delta_l h + (omega - (p-1)|w|^{p-2} + rho Phi[w^2]) h + 2 rho w Phi_l[w h],

where ``-Delta_l`` adds ``l(l+1)/r^2`` to the radial Laplacian and ``Phi_l`` is the
``l``-channel Coulomb kernel ``r_<^l / r_>^{l+1} / (2l+1)`` (for ``l = 0`` this is the
radial Newton potential).  In the quadrature inner product ``L_l`` is symmetric, so all
eigen-solves work on the similar matrix ``W^{1/2} L_l W^{-1/2}``.  The local part is
tridiagonal; the Hartree exchange term is handled matrix-free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.linalg import solve_banded
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh, gmres

from .energy import EnergyParams, gradient_values, radial_potential
from .errors import DegenerateError, InvalidPathError, NonConvergenceError, OutsideNeighborhoodError, ParameterError
from .fields import RadialField, RadialGrid, check_p, eval_radial, h1_distance, h1_residual, radial_interpolant
from .groundstate import GroundState, ground_state

log = logging.getLogger(__name__)


def channel_potential(f: np.ndarray, grid: RadialGrid, ell: int) -> np.ndarray:
    """``Phi_l[f]_i = sum_j w_j f_j r_<^l / r_>^{l+1} / (2l+1)`` in O(n)."""
    if ell == 0:
        return radial_potential(f, grid)
    r, w = grid.nodes, grid.weights
    mass_terms = w * f
    inner = np.cumsum(mass_terms * r**ell)
    outer_terms = mass_terms * r ** (-ell - 1.0)
    outer = np.cumsum(outer_terms[::-1])[::-1] - outer_terms
    return (inner * r ** (-ell - 1.0) + outer * r**ell) / (2 * ell + 1)


@dataclass(eq=False)
class LinearizedOperator:
    """``L_l`` at ``(w, rho, omega)`` on the grid of ``w``."""

    w: RadialField
    params: EnergyParams
    omega: float
    ell: int

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 0:
            raise ParameterError(f"ell must be a nonnegative integer, got {self.ell}")
        grid = self.w.grid
        wv = self.w.values
        p, rho = self.params.p, self.params.rho
        r = grid.nodes
        diag = self.omega + self.ell * (self.ell + 1) / (r * r) - (p - 1.0) * np.abs(wv) ** (p - 2.0)
        if rho:
            diag = diag + rho * radial_potential(wv * wv, grid)
        self.local_diag = diag
        self._sqrt_w = np.sqrt(grid.weights)

    @property
    def grid(self) -> RadialGrid:
        return self.w.grid

    @property
    def has_exchange(self) -> bool:
        return bool(self.params.rho)

    def apply(self, h: np.ndarray) -> np.ndarray:
        grid = self.grid
        out = grid.neg_laplacian(h) + self.local_diag * h
        if self.has_exchange:
            wv = self.w.values
            out += 2.0 * self.params.rho * wv * channel_potential(wv * h, grid, self.ell)
        return out

    # similar symmetric matrix B = W^{1/2} L W^{-1/2}
    def sym_bands(self, shift: float = 0.0) -> np.ndarray:
        """Banded storage (upper form) of the tridiagonal part of ``B - shift``."""
        grid = self.grid
        d, sup = grid.stiffness_bands()
        w = grid.weights
        ab = np.zeros((2, grid.n))
        ab[0, 1:] = sup / (self._sqrt_w[:-1] * self._sqrt_w[1:])
        ab[1] = d / w + self.local_diag - shift
        return ab

    def sym_apply(self, y: np.ndarray) -> np.ndarray:
        return self._sqrt_w * self.apply(y / self._sqrt_w)

    def shifted_solver(self, shift: float, rtol: float = 1e-10):
        """Solve ``(B - shift) x = b``: banded direct, GMRES-accelerated if ``rho > 0``."""
        ab = self.sym_bands(shift)
        full = np.zeros((3, self.grid.n))
        full[0, 1:] = ab[0, 1:]
        full[1] = ab[1]
        full[2, :-1] = ab[0, 1:]

        def direct(b):
            return solve_banded((1, 1), full, b)

        if not self.has_exchange:
            return direct
        n = self.grid.n
        op = LinearOperator((n, n), matvec=lambda y: self.sym_apply(y) - shift * y, dtype=float)
        prec = LinearOperator((n, n), matvec=direct, dtype=float)

        def solve(b):
            x, info = gmres(op, b, x0=direct(b), M=prec, rtol=rtol, atol=0.0, restart=50, maxiter=50)
            if info != 0 and np.linalg.norm(op.matvec(x) - b) > 1e2 * rtol * np.linalg.norm(b):
                raise NonConvergenceError("inner GMRES solve failed", residual=float("nan"), iterations=info)
            return x

        return solve

    def lower_bound(self) -> float:
        """A value below the spectrum (Gershgorin on the tridiagonal part, exchange >= 0)."""
        ab = self.sym_bands()
        off = np.abs(ab[0])
        radius = off + np.concatenate([off[1:], [0.0]])
        return float(np.min(ab[1] - radius))


def linearized_apply(w: RadialField, params: EnergyParams, omega: float, ell: int, h: RadialField) -> RadialField:
    return h.with_values(LinearizedOperator(w, params, omega, ell).apply(h.values))


@dataclass(eq=False)
class SpectrumReport:
    sector: int
    eigenvalues: np.ndarray
    eigenvector_overlap: float
    min_abs: float
    n: int
    modes: np.ndarray = field(repr=False, default=None)


def _eigsh(op: LinearizedOperator, k: int, sigma: float):
    n = op.grid.n
    solve = op.shifted_solver(sigma)
    opinv = LinearOperator((n, n), matvec=solve, dtype=float)
    a = LinearOperator((n, n), matvec=op.sym_apply, dtype=float)
    v0 = op._sqrt_w * np.exp(-op.grid.nodes / op.grid.nodes[-1])
    try:
        vals, vecs = eigsh(a, k=k, sigma=sigma, OPinv=opinv, which="LM", v0=v0, tol=1e-12, maxiter=5000)
    except (ArpackError, ArpackNoConvergence, np.linalg.LinAlgError) as exc:
        raise DegenerateError(f"shift-invert eigen-solve failed near {sigma:g}: {exc}") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _overlap(op: LinearizedOperator, y: np.ndarray, ref: np.ndarray | None) -> float:
    if ref is None:
        return math.nan
    r = op._sqrt_w * ref
    den = np.linalg.norm(y) * np.linalg.norm(r)
    return abs(float(np.dot(y, r))) / den if den > 0 else math.nan


def reference_mode(w: RadialField, ell: int) -> np.ndarray | None:
    """``w'`` for ``l = 1`` (radial part of the translation modes), else ``None``."""
    if ell != 1:
        return None
    return np.gradient(w.values, w.grid.h, edge_order=2)


def lowest_eigenvalues(
    w: RadialField, params: EnergyParams, omega: float, ell: int, k: int = 3
) -> SpectrumReport:
    """The ``k`` smallest eigenvalues of ``L_l`` and the eigenvalue of least magnitude.

    Shift-invert Lanczos from a fixed start vector: once with the shift below the
    spectrum (lowest eigenvalues) and once at 0 (least magnitude).  ``eigenvector_overlap``
    is the cosine between the least-magnitude mode and ``w'`` for ``l = 1``.
    """
    if not 1 <= k <= 10:
        raise ParameterError(f"k must be in [1, 10], got {k}")
    op = LinearizedOperator(w, params, omega, ell)
    low = op.lower_bound()
    sigma = low - 1e-3 * max(abs(low), abs(omega), 1e-12)
    vals, _ = _eigsh(op, k, sigma)
    near, vecs = _eigsh(op, 1, 0.0)
    return SpectrumReport(
        sector=int(ell),
        eigenvalues=vals,
        eigenvector_overlap=_overlap(op, vecs[:, 0], reference_mode(w, ell)),
        min_abs=float(abs(near[0])),
        n=w.grid.n,
        modes=vecs[:, 0] / op._sqrt_w,
    )


def min_singular_value(w: RadialField, params: EnergyParams, omega: float) -> float:
    """Smallest singular value of the radial (``l = 0``) linearization."""
    op = LinearizedOperator(w, params, omega, 0)
    vals, _ = _eigsh(op, 1, 0.0)
    return float(abs(vals[0]))


@dataclass(eq=False)
class BranchPoint:
    rho: float
    omega: float
    w: RadialField = field(repr=False)
    newton_residual: float
    min_sv: float
    steps: int
    residuals: list = field(default_factory=list)


def euler_lagrange_residual(w: RadialField, params: EnergyParams, omega: float, omega_norm: float | None = None) -> float:
    g = gradient_values(w.values, w.grid, params, omega)
    return h1_residual(w.with_values(g), omega_norm or omega)


def newton_solve(
    rho: float,
    omega: float,
    guess: RadialField,
    p: float | None = None,
    tol: float = 1e-10,
    max_steps: int = 50,
    with_min_sv: bool = True,
) -> BranchPoint:
    """Newton's method for the radial Euler–Lagrange equation at fixed ``(rho, omega)``.

    The exponent ``p`` is required.  Stops at H1 residual ``<= tol``, or once the
    residual stops decreasing after it has reached ``1e3 * tol`` (the rounding floor).
    """
    if p is None:
        raise ParameterError("newton_solve needs the exponent p")
    params = EnergyParams(rho, check_p(p))
    if not omega > 0:
        raise ParameterError(f"omega must be positive, got {omega}")
    w = guess.values.copy()
    grid = guess.grid
    sq = np.sqrt(grid.weights)
    residuals = []
    best = None
    for step in range(max_steps + 1):
        u = RadialField(grid, w)
        g = gradient_values(w, grid, params, omega)
        res = h1_residual(u.with_values(g), omega)
        residuals.append(res)
        if not math.isfinite(res):
            break
        if best is None or res < best[0]:
            best = (res, w.copy(), step)
        if res <= tol:
            break
        if len(residuals) > 3 and res >= residuals[-2] and best[0] <= 1e3 * tol:
            break
        op = LinearizedOperator(u, params, omega, 0)
        try:
            dy = op.shifted_solver(0.0)(sq * g)
        except (NonConvergenceError, np.linalg.LinAlgError):
            break
        w = w - dy / sq
    res, w, step = best
    if res > tol * 1e3 or not math.isfinite(res):
        raise OutsideNeighborhoodError(
            f"Newton did not converge at rho={rho:g}, omega={omega:g} (best residual {res:.3e})",
            residual=res,
            iterations=len(residuals) - 1,
        )
    wf = RadialField(grid, w)
    msv = min_singular_value(wf, params, omega) if with_min_sv else math.nan
    return BranchPoint(float(rho), float(omega), wf, res, msv, step, residuals)


class BranchPath(list):
    """Accepted branch points; ``boundary`` holds the first failing ``(rho, omega)``."""

    boundary: tuple[float, float] | None = None


def continue_branch(path, p: float, tol: float = 1e-10, gs: GroundState | None = None) -> BranchPath:
    """Secant predictor / Newton corrector along ``path``, a list of ``(rho, omega)``."""
    path = [(float(a), float(b)) for a, b in path]
    gs = gs or ground_state(p)
    if not path:
        raise InvalidPathError("empty path")
    rho0, om0 = path[0]
    if abs(rho0) > 1e-14 or abs(om0 - gs.omega0) > 1e-8 * gs.omega0:
        raise InvalidPathError(f"path must start at (0, omega0={gs.omega0:.12g}), got {path[0]}")
    try:
        first = newton_solve(0.0, gs.omega0, gs.q, p, tol)
    except OutsideNeighborhoodError as exc:
        raise InvalidPathError(f"no convergence at the start point: {exc}") from exc
    out = BranchPath([first])
    for rho, om in path[1:]:
        guess = out[-1].w
        if len(out) >= 2:
            a, b = out[-2], out[-1]
            ds_prev = math.hypot(b.rho - a.rho, (b.omega - a.omega) / gs.omega0)
            ds = math.hypot(rho - b.rho, (om - b.omega) / gs.omega0)
            if ds_prev > 0:
                guess = b.w.with_values(b.w.values + (ds / ds_prev) * (b.w.values - a.w.values))
        try:
            out.append(newton_solve(rho, om, guess, p, tol))
        except OutsideNeighborhoodError as exc:
            log.warning("branch continuation stopped at rho=%g, omega=%g: %s", rho, om, exc)
            out.boundary = (rho, om)
            break
    return out


def _as_radial_on(u: RadialField, grid: RadialGrid) -> RadialField:
    if u.grid == grid:
        return u
    return RadialField(grid, eval_radial(radial_interpolant(u), grid.nodes))


def uniqueness_cross_check(v, rho: float, omega: float, p: float, gs: GroundState | None = None, tol: float = 1e-10) -> float:
    """``|| v(. - tau) - w(rho, omega) ||_{H1}`` with ``w`` from Newton started at Q."""
    from .fields import CartesianField, embed_radial, h1_norm_sq
    from .geometry import Orbit

    gs = gs or ground_state(p)
    w = newton_solve(rho, omega, gs.q, p, tol, with_min_sv=False).w
    if isinstance(v, RadialField):
        return h1_distance(_as_radial_on(v, gs.grid), w, gs.omega0)
    if not isinstance(v, CartesianField):
        raise ParameterError("v must be a radial or Cartesian field")
    dec = Orbit(gs, v.grid).decompose(v)
    wc = embed_radial(w, v.grid, -dec.tau)
    return math.sqrt(h1_norm_sq(v.with_values(v.values - wc.values), gs.omega0))
