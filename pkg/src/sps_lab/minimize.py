"""Constrained minimization of the SPS energy on the unit L2 sphere.

The flow is a normalized gradient descent in the H1 metric: the L2 gradient is
preconditioned by ``(-Laplace + omega0)^{-1}``, projected onto the tangent space of the
sphere and the iterate is renormalized after each step.  Every accepted step decreases
the discrete energy; a step that would increase it is halved (at most
``max_halvings`` times in a row).

Grid sizes in :class:`MinimizeConfig` are given in units of the ground-state length
``1/sqrt(omega0)``, so the defaults fit Q for any admissible ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import logging
import math
from typing import Callable, Optional

import numpy as np

from . import io
from .energy import EnergyBreakdown, EnergyParams, energy, multiplier, potential_of, signed_power
from .errors import NonConvergenceError, ParameterError, StepSizeError
from .fields import (
    CartesianField,
    CartesianGrid,
    Field,
    RadialField,
    RadialGrid,
    embed_radial,
    eval_radial,
    h1_residual,
    radial_interpolant,
)
from .geometry import asymmetry, distance_to_orbit, radial_distance_to_q
from .groundstate import DEFAULT_N, DEFAULT_R_MAX, GroundState, ground_state

log = logging.getLogger(__name__)

INITS = ("groundstate", "gaussian", "random", "file")

# In a box of side 16 (natural units) the confinement pulls an off-centre bump back
# with a gradient of about 3e-7 that decays over thousands of steps; 1e-6 sits above it.
RADIALITY_TOL = 1e-6


@dataclass
class MinimizeConfig:
    dt: float = 1.0
    tol: float = 1e-9
    max_iter: int = 20000
    init: str = "gaussian"
    seed: int = 0
    init_path: Optional[str] = None
    init_field: Optional[Field] = dc_field(default=None, repr=False)
    representation: str = "radial"
    n: int = DEFAULT_N
    r_max: float = DEFAULT_R_MAX
    m: int = 64
    box: float = 16.0
    max_halvings: int = 10
    noise: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ParameterError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.init not in INITS:
            raise ParameterError(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "file" and not self.init_path and self.init_field is None:
            raise ParameterError("init='file' needs init_path")
        if self.representation not in ("radial", "cartesian"):
            raise ParameterError(f"unknown representation {self.representation!r}")


@dataclass(eq=False)
class MinimizeReport:
    field: Field = dc_field(repr=False)
    params: EnergyParams
    k_value: float
    omega: float
    iterations: int
    residual: float
    breakdown: EnergyBreakdown
    energies: list = dc_field(default_factory=list, repr=False)
    boundary_ratio: float = 0.0


def _groundstate_for(p: float, config: MinimizeConfig) -> GroundState:
    if config.representation == "radial":
        return ground_state(p, config.r_max, config.n)
    return ground_state(p)


def make_grid(gs: GroundState, config: MinimizeConfig):
    ell = gs.length_scale
    if config.representation == "radial":
        return RadialGrid(config.r_max * ell, config.n)
    return CartesianGrid(config.box * ell, config.m)


def _smooth_noise(grid, rng: np.random.Generator, ell: float) -> np.ndarray:
    """Low-mode noise with max |noise| = 1 and no symmetry."""
    if isinstance(grid, RadialGrid):
        r = grid.nodes / ell
        k = rng.uniform(0.3, 1.5, 4)
        ph = rng.uniform(0, 2 * np.pi, 4)
        out = sum(np.cos(kk * r + pp) for kk, pp in zip(k, ph))
    else:
        X, Y, Z = grid.coords()
        out = 0.0
        for _ in range(6):
            kv = rng.normal(size=3)
            kv *= rng.uniform(0.3, 1.0) / np.linalg.norm(kv)
            out = out + np.cos((kv[0] * X + kv[1] * Y + kv[2] * Z) / ell + rng.uniform(0, 2 * np.pi))
        out = np.broadcast_to(out, (grid.m,) * 3)
    return out / np.max(np.abs(out))


def initial_field(gs: GroundState, grid, config: MinimizeConfig) -> Field:
    ell = gs.length_scale
    if config.init_field is not None:
        return _resample(config.init_field, grid)
    if config.init == "file":
        return _resample(io.read_field(config.init_path), grid)
    if config.init == "groundstate":
        return _resample(gs.q, grid)
    rng = np.random.default_rng(config.seed)
    if isinstance(grid, RadialGrid):
        base = np.exp(-0.5 * (grid.nodes / ell) ** 2)
    else:
        shift = np.zeros(3) if config.init == "gaussian" else rng.uniform(-0.3, 0.3, 3) * ell
        base = np.exp(-0.5 * (grid.distance_from(shift) / ell) ** 2)
    if config.init == "random":
        base = base * (1.0 + config.noise * _smooth_noise(grid, rng, ell))
    if isinstance(grid, RadialGrid):
        return RadialField(grid, base)
    return CartesianField(grid, base)


def _resample(u: Field, grid) -> Field:
    if u.grid == grid:
        return u.with_values(np.array(u.values, dtype=float))
    if isinstance(u, RadialField) and isinstance(grid, RadialGrid):
        return RadialField(grid, eval_radial(radial_interpolant(u), grid.nodes))
    if isinstance(u, RadialField) and isinstance(grid, CartesianGrid):
        return embed_radial(u, grid)
    raise ParameterError("cannot resample a Cartesian field onto a different grid")


class _Flow:
    """Energy, potential and gradient of one iterate, sharing a single Coulomb solve."""

    def __init__(self, grid, params: EnergyParams):
        self.grid, self.params = grid, params

    def evaluate(self, u: np.ndarray):
        grid, p, rho = self.grid, self.params.p, self.params.rho
        dens = u * u
        phi = potential_of(dens, grid) if rho else None
        kin = 0.5 * grid.kinetic(u)
        lp = grid.integrate(np.abs(u) ** p) / p
        hart = grid.integrate(phi * dens) if rho else 0.0
        return kin + 0.25 * rho * hart - lp, phi

    def gradient(self, u: np.ndarray, phi) -> np.ndarray:
        g = self.grid.neg_laplacian(u) - signed_power(u, self.params.p)
        if phi is not None:
            g += self.params.rho * phi * u
        return g


def _normalize(grid, u: np.ndarray) -> np.ndarray:
    return u / math.sqrt(grid.integrate(u * u))


def sphere_residual(u: Field, params: EnergyParams, omega0: float) -> float:
    """H1 size of the energy gradient projected on the tangent space of the sphere."""
    from .energy import gradient

    g = gradient(u, params, 0.0).values
    lam = u.grid.inner(g, u.values) / u.grid.inner(u.values, u.values)
    return h1_residual(u.with_values(g - lam * u.values), omega0)


def minimize(
    params: EnergyParams,
    config: MinimizeConfig | None = None,
    callback: Callable[[int, Field], None] | None = None,
) -> MinimizeReport:
    config = config or MinimizeConfig()
    gs = _groundstate_for(params.p, config)
    omega0 = gs.omega0
    grid = make_grid(gs, config)
    u0 = initial_field(gs, grid, config)
    flow = _Flow(grid, params)
    u = _normalize(grid, u0.values)
    e, phi = flow.evaluate(u)
    energies = [e]
    dt = config.dt
    halvings = 0
    res = np.inf
    for it in range(config.max_iter + 1):
        g = flow.gradient(u, phi)
        tang = g - grid.inner(g, u) * u
        res = _dual_norm(grid, tang, omega0)
        if callback is not None:
            callback(it, u0.with_values(u))
        log.debug("iter %d energy %.16e residual %.3e dt %.3e", it, e, res, dt)
        if res <= config.tol:
            break
        if it == config.max_iter:
            raise NonConvergenceError(
                f"no convergence in {config.max_iter} iterations (residual {res:.3e})",
                residual=res,
                iterations=it,
            )
        pg = grid.solve_shifted(g, omega0)
        pu = grid.solve_shifted(u, omega0)
        d = pg - (grid.inner(u, pg) / grid.inner(u, pu)) * pu
        while True:
            trial = _normalize(grid, u - dt * d)
            e_trial, phi_trial = flow.evaluate(trial)
            if e_trial <= e + 1e-12:
                break
            halvings += 1
            if halvings > config.max_halvings:
                raise StepSizeError(
                    f"energy increased after {config.max_halvings} step halvings (dt = {dt:.3e})"
                )
            dt *= 0.5
        halvings = 0
        u, e, phi = trial, e_trial, phi_trial
        energies.append(e)
    if np.sum(u) < 0:
        u = -u
    result = u0.with_values(u)
    bd = energy(result, params)
    return MinimizeReport(
        field=result,
        params=params,
        k_value=bd.total,
        omega=multiplier(result, params),
        iterations=it,
        residual=res,
        breakdown=bd,
        energies=energies,
        boundary_ratio=_boundary_ratio(u),
    )


def _dual_norm(grid, g: np.ndarray, omega0: float) -> float:
    return math.sqrt(max(grid.inner(g, grid.solve_shifted(g, omega0)), 0.0))


def _boundary_ratio(u: np.ndarray) -> float:
    top = float(np.max(np.abs(u)))
    if u.ndim == 1:
        edge = abs(float(u[-1]))
    else:
        edge = max(
            float(np.abs(u[[0, -1]]).max()),
            float(np.abs(u[:, [0, -1]]).max()),
            float(np.abs(u[:, :, [0, -1]]).max()),
        )
    return edge / top if top > 0 else 0.0


@dataclass
class SweepRow:
    rho: float
    k_value: float
    omega: float
    dist_h1: float
    iterations: int
    residual: float
    error: str = ""
    field: Optional[Field] = dc_field(default=None, repr=False)


def sweep_rho(p: float, rhos, config: MinimizeConfig | None = None) -> list[SweepRow]:
    """Minimize for each coupling in ``rhos`` (largest first), warm-starting each solve."""
    config = config or MinimizeConfig()
    rhos = sorted((float(r) for r in rhos), reverse=True)
    if any(r <= 0 for r in rhos):
        raise ParameterError("sweep couplings must be positive")
    gs = _groundstate_for(p, config)
    rows = []
    warm = None
    for rho in rhos:
        cfg = MinimizeConfig(**{**config.__dict__, "init_field": warm or config.init_field})
        try:
            rep = minimize(EnergyParams(rho, p), cfg)
        except (NonConvergenceError, StepSizeError) as exc:
            log.warning("sweep row rho=%g failed: %s", rho, exc)
            rows.append(SweepRow(rho, math.nan, math.nan, math.nan, getattr(exc, "iterations", 0),
                                 getattr(exc, "residual", math.nan), str(exc)))
            continue
        warm = rep.field
        _, dist = distance_to_orbit(rep.field, gs)
        rows.append(SweepRow(rho, rep.k_value, rep.omega, dist, rep.iterations, rep.residual, field=rep.field))
    return rows


@dataclass(eq=False)
class RadialityTrial:
    report: MinimizeReport
    asymmetry: float
    history: list = dc_field(default_factory=list)


def minimize_3d_radiality_trial(
    params: EnergyParams,
    config: MinimizeConfig | None = None,
    monitor_every: int = 0,
) -> RadialityTrial:
    """Full 3D minimization followed by the asymmetry of the minimizer about its centroid.

    With ``monitor_every > 0`` the asymmetry of every ``monitor_every``-th iterate is
    recorded in ``history`` as ``(iteration, asymmetry)``.
    """
    config = config or MinimizeConfig(representation="cartesian", init="random", seed=1, tol=RADIALITY_TOL)
    if config.representation != "cartesian":
        raise ParameterError("the radiality trial needs representation='cartesian'")
    if params.rho > 0.05:
        raise ParameterError(f"rho={params.rho} is outside the small-coupling regime (<= 0.05)")
    if config.m < 48:
        raise ParameterError(f"m={config.m} is too coarse for the radiality trial (needs >= 48)")
    history = []

    def watch(it, u):
        if monitor_every and it % monitor_every == 0:
            history.append((it, asymmetry(u)))

    rep = minimize(params, config, callback=watch if monitor_every else None)
    final = asymmetry(rep.field)
    if monitor_every and (not history or history[-1][0] != rep.iterations):
        history.append((rep.iterations, final))
    return RadialityTrial(rep, final, history)
