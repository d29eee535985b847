"""The acceptance suite: eleven numbered criteria shared by the CLI and the tests.

Each criterion returns a :class:`CriterionResult` holding its individual checks
(value, threshold, pass flag) and the tables it produced.  :func:`run_all` writes the
tables as CSV, reruns the whole suite from cold caches into a scratch directory and
compares the CSV bytes (criterion 11).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import filecmp
import math
from pathlib import Path
import tempfile
import time
from typing import Callable

import numpy as np

from . import io
from .branch import lowest_eigenvalues, newton_solve, uniqueness_cross_check
from .energy import EnergyParams, _coulomb_kernel_hat, energy, hartree_energy
from .fields import (
    CartesianGrid,
    RadialField,
    RadialGrid,
    kinetic_integral,
    lp_norm_p,
)
from .geometry import Orbit
from .groundstate import compute_groundstate, ground_state, verify_groundstate
from .minimize import RADIALITY_TOL, MinimizeConfig, minimize_3d_radiality_trial, sweep_rho
from .scaling import alpha, alpha_printed, random_smooth_field, verify_equivalence

P = 8.0 / 3.0
SWEEP_RHOS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
SPECTRUM_NS = (1024, 2048, 4096)
# Box side (natural units) for the decomposition checks: at 16 the tails of Q cut by the
# box shift tau by ~3e-8 under a lattice translation; at 24 by ~2e-11.
DECOMPOSE_BOX = 24.0


@dataclass
class Check:
    name: str
    value: float
    threshold: str
    passed: bool


@dataclass(eq=False)
class CriterionResult:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and bool(self.checks) and all(c.passed for c in self.checks)

    def check(self, name: str, value, threshold: str, passed: bool) -> None:
        self.checks.append(Check(name, value, threshold, bool(passed)))

    def summary(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        if self.error:
            return f"[{flag}] criterion {self.number:2d} {self.title}: error: {self.error}"
        failed = [c.name for c in self.checks if not c.passed]
        tail = f"failed checks: {', '.join(failed)}" if failed else f"{len(self.checks)} checks"
        return f"[{flag}] criterion {self.number:2d} {self.title}: {tail} ({self.seconds:.1f} s)"


class Context:
    """Shared intermediate results (the radial sweep feeds criteria 3, 4, 5 and 10)."""

    def __init__(self):
        self._sweep = None

    @property
    def gs(self):
        return ground_state(P)

    def sweep(self):
        if self._sweep is None:
            self._sweep = sweep_rho(P, SWEEP_RHOS, MinimizeConfig(tol=1e-9))
        return self._sweep


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def criterion_1(ctx: Context) -> CriterionResult:
    res = CriterionResult(1, "ground state Q and omega0")
    t = time.perf_counter()
    gs = compute_groundstate(P, 20.0, 4096)
    elapsed = time.perf_counter() - t
    d = verify_groundstate(gs)
    res.check("mass_error", abs(d.mass - 1.0), "<= 1e-10", abs(d.mass - 1.0) <= 1e-10)
    res.check("residual_h1", d.residual_h1, "<= 1e-6", d.residual_h1 <= 1e-6)
    res.check("multiplier_error", d.multiplier_error, "<= 1e-6", d.multiplier_error <= 1e-6)
    res.check("positive_decreasing", float(d.positive and d.decreasing), "== 1", d.positive and d.decreasing)
    res.check("runtime_below_10s", float(elapsed < 10.0), "== 1", elapsed < 10.0)
    res.tables["groundstate"] = (
        ["p", "phi0", "omega0", "mass", "residual_h1", "multiplier"],
        [[P, gs.shoot_value, gs.omega0, d.mass, d.residual_h1, d.multiplier]],
    )
    return res


def criterion_2(ctx: Context) -> CriterionResult:
    res = CriterionResult(2, "Gaussian energy oracles")
    grid = RadialGrid(20.0, 4096)
    u = RadialField(grid, np.pi**-0.75 * np.exp(-0.5 * grid.nodes**2))
    rows = []
    for name, got, exact in (
        ("kinetic", kinetic_integral(u), 1.5),
        ("hartree", hartree_energy(u), math.sqrt(2.0 / math.pi)),
        ("lp_8_3", lp_norm_p(u, P), math.pi**-2 * (0.75 * math.pi) ** 1.5),
    ):
        rel = abs(got - exact) / exact
        res.check(f"{name}_rel_error", rel, "<= 1e-4", rel <= 1e-4)
        rows.append([name, got, exact, rel])
    res.tables["energy_oracles"] = (["quantity", "computed", "exact", "rel_error"], rows)
    return res


def _sweep_table(rows, gs):
    return (
        ["rho", "K", "omega", "dist_h1", "iters", "residual"],
        [[r.rho, r.k_value, r.omega, r.dist_h1, r.iterations, r.residual] for r in rows],
    )


def criterion_3(ctx: Context) -> CriterionResult:
    res = CriterionResult(3, "energy sandwich K0 <= K_rho <= K0 + rho D(Q)/4")
    gs = ctx.gs
    rows = ctx.sweep()
    k0 = energy(gs.q, EnergyParams(0.0, P)).total
    dq = hartree_energy(gs.q)
    table = []
    for r in rows:
        upper = k0 + 0.25 * r.rho * dq + 1e-6
        ok = k0 <= r.k_value <= upper
        res.check(f"sandwich_rho_{r.rho:g}", r.k_value - k0, f"in [0, {upper - k0:.6e}]", ok)
        table.append([r.rho, k0, r.k_value, upper])
    ks = [r.k_value for r in rows]
    res.check("K_decreasing_as_rho_decreases", float(_strictly_decreasing(ks)), "== 1", _strictly_decreasing(ks))
    res.tables["sweep"] = _sweep_table(rows, gs)
    res.tables["sandwich"] = (["rho", "K0", "K_rho", "upper_bound"], table)
    return res


def criterion_4(ctx: Context) -> CriterionResult:
    res = CriterionResult(4, "multiplier convergence omega_rho -> omega0")
    gs = ctx.gs
    gaps = [abs(r.omega - gs.omega0) for r in ctx.sweep()]
    res.check("gap_strictly_decreasing", float(_strictly_decreasing(gaps)), "== 1", _strictly_decreasing(gaps))
    rel = gaps[-1] / gs.omega0
    res.check("rel_gap_rho_1e-3", rel, "<= 0.05", rel <= 0.05)
    res.tables["multipliers"] = (["rho", "omega", "abs_gap"], [[r.rho, r.omega, g] for r, g in zip(ctx.sweep(), gaps)])
    return res


def criterion_5(ctx: Context) -> CriterionResult:
    res = CriterionResult(5, "orbit convergence dist(v_rho, orbit of Q) -> 0")
    dists = [r.dist_h1 for r in ctx.sweep()]
    res.check("dist_strictly_decreasing", float(_strictly_decreasing(dists)), "== 1", _strictly_decreasing(dists))
    res.check("dist_rho_1e-3", dists[-1], "<= 1e-2", dists[-1] <= 1e-2)
    res.tables["orbit_distance"] = (["rho", "dist_h1"], [[r.rho, r.dist_h1] for r in ctx.sweep()])
    return res


def criterion_6(ctx: Context) -> CriterionResult:
    res = CriterionResult(6, "3D minimizer is radial about its centre")
    params = EnergyParams(1e-2, P)
    t = time.perf_counter()
    trial = minimize_3d_radiality_trial(
        params,
        MinimizeConfig(representation="cartesian", init="random", seed=1, m=64, box=16.0, tol=RADIALITY_TOL),
        monitor_every=5,
    )
    control = minimize_3d_radiality_trial(
        params,
        MinimizeConfig(representation="cartesian", init="gaussian", m=64, box=16.0, tol=RADIALITY_TOL),
        monitor_every=1,
    )
    elapsed = time.perf_counter() - t
    res.check("asymmetry_random_init", trial.asymmetry, "<= 1e-3", trial.asymmetry <= 1e-3)
    worst = max(a for _, a in control.history)
    res.check("control_max_asymmetry", worst, "<= 1e-10", worst <= 1e-10)
    res.check("runtime_below_600s", float(elapsed < 600.0), "== 1", elapsed < 600.0)
    res.tables["radiality"] = (
        ["run", "iteration", "asymmetry"],
        [["random_seed_1", i, a] for i, a in trial.history] + [["radial_control", i, a] for i, a in control.history],
    )
    res.tables["radiality_summary"] = (
        ["run", "iterations", "K", "omega", "residual", "asymmetry", "boundary_ratio"],
        [
            [name, t.report.iterations, t.report.k_value, t.report.omega, t.report.residual, t.asymmetry, t.report.boundary_ratio]
            for name, t in (("random_seed_1", trial), ("radial_control", control))
        ],
    )
    return res


def criterion_7(ctx: Context) -> CriterionResult:
    res = CriterionResult(7, "rescaling equivalence and alpha(p)")
    grid = RadialGrid(20.0, 4096)
    rng = np.random.default_rng(7)
    fields = [random_smooth_field(grid, rng) for _ in range(20)]
    rhos = np.logspace(-3, 0, 7)
    disc = np.array([[verify_equivalence(u, r, P) for r in rhos] for u in fields])
    res.check("max_discrepancy", float(disc.max()), "<= 1e-11", disc.max() <= 1e-11)
    a, ap = alpha(P), alpha_printed(P)
    res.check("alpha_8_3_error", abs(a - 4.0 / 3.0), "<= 1e-14", abs(a - 4.0 / 3.0) <= 1e-14)
    res.check("printed_vs_simplified", abs(a - ap), "<= 1e-14", abs(a - ap) <= 1e-14)
    res.tables["rescale"] = (["field", "rho", "discrepancy"], [[i, r, disc[i, j]] for i in range(len(fields)) for j, r in enumerate(rhos)])
    return res


def criterion_8(ctx: Context) -> CriterionResult:
    res = CriterionResult(8, "orbit decomposition u = Q_tau + R")
    gs = ctx.gs
    ell = gs.length_scale
    grid = CartesianGrid(DECOMPOSE_BOX * ell, 64)
    orbit = Orbit(gs, grid)
    rng = np.random.default_rng(8)
    taus = rng.uniform(-1.0, 1.0, (25, 3))
    rows, worst_tau, worst_ortho = [], 0.0, 0.0
    for tau in taus:
        dec = orbit.decompose(orbit.point(tau * ell))
        err = float(np.max(np.abs(dec.tau / ell - tau)))
        ortho = float(np.max(np.abs(dec.ortho_residuals)))
        worst_tau, worst_ortho = max(worst_tau, err), max(worst_ortho, ortho)
        rows.append([*tau, *(dec.tau / ell), err, ortho, dec.newton_iters])
    res.check("tau_recovery_error", worst_tau, "<= 1e-8", worst_tau <= 1e-8)
    res.check("ortho_residuals", worst_ortho, "<= 1e-10", worst_ortho <= 1e-10)
    eq_err = equivariance_error(orbit, rng)
    res.check("equivariance_error", eq_err, "<= 1e-8", eq_err <= 1e-8)
    res.tables["decompose"] = (
        ["tau_x", "tau_y", "tau_z", "found_x", "found_y", "found_z", "error", "ortho", "newton_iters"],
        rows,
    )
    return res


def equivariance_error(orbit: Orbit, rng: np.random.Generator) -> float:
    """``tau(u(. - t)) = tau(u) - t`` for a field off the orbit and a lattice vector ``t``.

    Both fields are sampled analytically, so the shift is exact on the grid.
    """
    grid = orbit.grid
    ell = orbit.gs.length_scale
    tau = rng.uniform(-0.5, 0.5, 3) * ell
    bump_at = rng.uniform(-1.0, 1.0, 3) * ell
    shift = grid.spacing * rng.integers(-4, 5, 3)
    eps = 0.01 * float(np.max(orbit.point().values))

    def sample(offset):
        bump = np.exp(-0.5 * (grid.distance_from(bump_at + offset) / ell) ** 2)
        return orbit.point(tau - offset).with_values(orbit.point(tau - offset).values + eps * bump)

    t0 = orbit.decompose(sample(np.zeros(3))).tau
    t1 = orbit.decompose(sample(shift)).tau
    return float(np.max(np.abs((t1 - (t0 - shift)) / ell)))


def criterion_9(ctx: Context) -> CriterionResult:
    res = CriterionResult(9, "nondegeneracy of the linearization at Q")
    rows = []
    l1, l0 = [], []
    overlap = math.nan
    omega0 = ctx.gs.omega0
    for n in SPECTRUM_NS:
        gs = ground_state(P, 20.0, n)
        s1 = lowest_eigenvalues(gs.q, EnergyParams(0.0, P), gs.omega0, 1, 3)
        s0 = lowest_eigenvalues(gs.q, EnergyParams(0.0, P), gs.omega0, 0, 3)
        l1.append(s1.min_abs)
        l0.append(s0.min_abs)
        overlap = s1.eigenvector_overlap
        rows.append([n, s1.min_abs, s1.eigenvector_overlap, s0.min_abs, s0.min_abs / gs.omega0, *s0.eigenvalues])
    res.check("l1_min_abs_eigenvalue", l1[-1], "<= 1e-4", l1[-1] <= 1e-4)
    res.check("l1_overlap_with_Q_prime", overlap, ">= 0.999", overlap >= 0.999)
    slope = float(np.polyfit(np.log(SPECTRUM_NS), np.log(l1), 1)[0])
    res.check("l1_refinement_order", -slope, ">= 1.8", -slope >= 1.8)
    ratio = min(l0) / omega0
    res.check("l0_min_abs_over_omega0", ratio, ">= 0.1", ratio >= 0.1)
    drift = (max(l0) - min(l0)) / min(l0)
    res.check("l0_refinement_drift", drift, "<= 1e-2", drift <= 1e-2)
    res.tables["spectrum"] = (
        ["n", "l1_min_abs", "l1_overlap", "l0_min_abs", "l0_over_omega0", "l0_eig1", "l0_eig2", "l0_eig3"],
        rows,
    )
    return res


def newton_order_ratio(residuals, floor: float = 1e-13) -> float:
    """Spread ``max/min`` of ``r_{k+1} / r_k^2`` over the last three steps above ``floor``.

    Bounded for quadratic convergence; grows like ``1/r_k`` for linear convergence.
    """
    pairs = [(a, b) for a, b in zip(residuals, residuals[1:]) if b > floor]
    pairs = pairs[-3:]
    if len(pairs) < 2:
        return 1.0
    c = [b / (a * a) for a, b in pairs]
    return max(c) / min(c)


def criterion_10(ctx: Context) -> CriterionResult:
    res = CriterionResult(10, "radial branch and uniqueness cross-check")
    gs = ctx.gs
    rows = []
    for rho in (1e-2, 5e-2):
        for f in (0.9, 1.0, 1.1):
            try:
                bp = newton_solve(rho, f * gs.omega0, gs.q, P)
            except Exception as exc:  # recorded as a failed check
                res.check(f"newton_rho_{rho:g}_omega_{f:g}", math.nan, "converged", False)
                rows.append([rho, f * gs.omega0, math.nan, math.nan, math.nan, math.nan, str(exc)])
                continue
            spread = newton_order_ratio(bp.residuals)
            res.check(f"quadratic_rho_{rho:g}_omega_{f:g}", spread, "<= 100", spread <= 100)
            rows.append([rho, bp.omega, bp.newton_residual, bp.min_sv, bp.steps, spread, ""])
    v = next(r for r in ctx.sweep() if r.rho == 1e-2)
    dist = uniqueness_cross_check(v.field, v.rho, v.omega, P)
    res.check("uniqueness_rho_1e-2", dist, "<= 1e-4", dist <= 1e-4)
    res.tables["branch"] = (["rho", "omega", "res", "min_sv", "steps", "c_spread", "error"], rows)
    res.tables["uniqueness"] = (["rho", "omega", "dist_h1"], [[v.rho, v.omega, dist]])
    return res


CRITERIA: dict[int, Callable[[Context], CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


def run_criterion(number: int, ctx: Context) -> CriterionResult:
    t = time.perf_counter()
    try:
        res = CRITERIA[number](ctx)
    except Exception as exc:  # a crashing criterion is a failed criterion
        res = CriterionResult(number, CRITERIA[number].__name__, error=f"{type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t
    return res


def write_tables(results, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        for name, (header, rows) in r.tables.items():
            paths.append(io.write_csv(out_dir / f"c{r.number:02d}_{name}.csv", header, rows))
    summary = []
    for r in results:
        for c in r.checks:
            summary.append([r.number, c.name, c.value, c.threshold, c.passed])
        if r.error:
            summary.append([r.number, "error", math.nan, r.error, False])
    paths.append(io.write_csv(out_dir / "acceptance.csv", ["criterion", "check", "value", "threshold", "passed"], summary))
    return paths


def clear_caches() -> None:
    ground_state.cache_clear()
    _coulomb_kernel_hat.cache_clear()


def run_suite(out_dir: Path, criteria=None, echo: Callable[[str], None] | None = None) -> tuple[list[CriterionResult], list[Path]]:
    ctx = Context()
    results = []
    for k in criteria or sorted(CRITERIA):
        r = run_criterion(k, ctx)
        if echo:
            echo(r.summary())
        results.append(r)
    return results, write_tables(results, Path(out_dir))


def determinism_check(first: list[Path], out_dir: Path, criteria=None) -> CriterionResult:
    res = CriterionResult(11, "byte-identical CSVs across two runs")
    t = time.perf_counter()
    clear_caches()
    with tempfile.TemporaryDirectory(dir=out_dir) as tmp:
        _, second = run_suite(Path(tmp), criteria)
        names = {p.name for p in second}
        for p in first:
            same = p.name in names and filecmp.cmp(p, Path(tmp) / p.name, shallow=False)
            res.check(f"identical_{p.name}", float(same), "== 1", same)
    res.seconds = time.perf_counter() - t
    return res


def run_all(out_dir, criteria=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    """Criteria 1..10 (or the given subset), then the determinism rerun as criterion 11."""
    out_dir = Path(out_dir)
    results, paths = run_suite(out_dir, criteria, echo)
    det = determinism_check(paths, out_dir, criteria)
    if echo:
        echo(det.summary())
    results.append(det)
    return results
