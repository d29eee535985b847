"""Command-line front end: ``sps-lab <experiment> [options]``.

Options come from an optional flat ``key = value`` file (``--config``) and from flags;
flags win.  Every experiment writes its tables (CSV), scalar reports (JSON), a small
plotting script and ``manifest.json`` into the output directory.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__, io
from .errors import ConfigError, SPSError

log = logging.getLogger("sps_lab")

EXPERIMENTS = (
    "groundstate",
    "minimize",
    "sweep",
    "radiality",
    "branch",
    "spectrum",
    "rescale-check",
    "decompose",
    "all-acceptance",
)


def _float(key, text):
    """A float; ``a/b`` fractions such as ``8/3`` are accepted."""
    try:
        x = float(Fraction(str(text).strip())) if "/" in str(text) else float(text)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(key, f"not a number: {text!r}") from None
    if not math.isfinite(x):
        raise ConfigError(key, f"must be finite, got {text!r}")
    return x


def _int(key, text):
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not an integer: {text!r}") from None
    if x != int(x):
        raise ConfigError(key, f"not an integer: {text!r}")
    return int(x)


def _float_list(key, text):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ConfigError(key, "empty list")
    return sorted((_float(key, t) for t in items), reverse=True)


def _bool(key, text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"not a boolean: {text!r}")


def _str(key, text):
    return str(text).strip()


def _int_list(key, text):
    if isinstance(text, (list, tuple)):
        return [_int(key, t) for t in text]
    return [_int(key, t) for t in str(text).split(",") if t.strip()]


# key -> (parser, range check or None, description of the range)
SCHEMA = {
    "p": (_float, lambda x: 2.0 < x < 10.0 / 3.0, "in (2, 10/3)"),
    "rho": (_float, lambda x: x >= 0.0, ">= 0"),
    "rho_list": (_float_list, lambda xs: all(x > 0 for x in xs), "all > 0"),
    "omega": (_float, lambda x: x > 0.0, "> 0"),
    "n": (_int, lambda x: x >= 16, ">= 16"),
    "r_max": (_float, lambda x: x > 0.0, "> 0"),
    "m": (_int, lambda x: x >= 8 and x % 2 == 0, "even and >= 8"),
    "box_length": (_float, lambda x: x > 0.0, "> 0"),
    "dt": (_float, lambda x: x > 0.0, "> 0"),
    "tol": (_float, lambda x: x > 0.0, "> 0"),
    "max_iter": (_int, lambda x: x >= 1, ">= 1"),
    "seed": (_int, lambda x: x >= 0, ">= 0"),
    "init": (_str, lambda x: x in ("groundstate", "gaussian", "random", "file"), "groundstate|gaussian|random|file"),
    "init_path": (_str, None, ""),
    "representation": (_str, lambda x: x in ("radial", "cartesian"), "radial|cartesian"),
    "ell": (_int, lambda x: x >= 0, ">= 0"),
    "k": (_int, lambda x: 1 <= x <= 10, "in [1, 10]"),
    "path_steps": (_int, lambda x: x >= 1, ">= 1"),
    "field_path": (_str, None, ""),
    "save_field": (_bool, None, ""),
    "output_dir": (_str, None, ""),
    "criteria": (_int_list, lambda xs: all(1 <= x <= 10 for x in xs), "integers in [1, 10]"),
}


@dataclass
class RunConfig:
    experiment: str
    p: float = 8.0 / 3.0
    rho: float = 0.0
    rho_list: list = field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    omega: float | None = None
    n: int = 4096
    r_max: float = 20.0
    m: int = 64
    box_length: float = 16.0
    dt: float = 1.0
    tol: float | None = None
    max_iter: int = 20000
    seed: int = 0
    init: str | None = None
    init_path: str | None = None
    representation: str = "radial"
    ell: int = 1
    k: int = 3
    path_steps: int = 10
    field_path: str | None = None
    save_field: bool = False
    output_dir: str = "sps_out"
    criteria: list | None = None

    def snapshot(self) -> dict:
        return asdict(self)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("config", f"line {lineno}: missing key")
        out[key] = value
    return out


def parse_config(experiment: str, file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file values with overrides (overrides win) and validate every key."""
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, raw in merged.items():
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        parse, ok, desc = SCHEMA[key]
        val = parse(key, raw)
        if ok is not None and not ok(val):
            raise ConfigError(key, f"out of range: {raw!r} (must be {desc})")
        values[key] = val
    required = {"p"} if experiment != "all-acceptance" else set()
    if experiment == "decompose":
        required.add("field_path")
    for key in sorted(required):
        if key not in values:
            raise ConfigError(key, f"missing required key for experiment {experiment!r}")
    if experiment == "all-acceptance" and "p" in values and abs(values["p"] - 8.0 / 3.0) > 1e-9:
        raise ConfigError("p", "the acceptance suite is defined at p = 8/3")
    return RunConfig(experiment=experiment, **values)


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock_seconds: float
    files: list
    acceptance: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and all(self.acceptance.values())


def _minimize_config(cfg: RunConfig, **extra):
    from .minimize import RADIALITY_TOL, MinimizeConfig

    representation = extra.get("representation", cfg.representation)
    kw = dict(
        dt=cfg.dt,
        tol=cfg.tol or (1e-9 if representation == "radial" else RADIALITY_TOL),
        max_iter=cfg.max_iter,
        init=cfg.init or "gaussian",
        seed=cfg.seed,
        init_path=cfg.init_path,
        representation=cfg.representation,
        n=cfg.n,
        r_max=cfg.r_max,
        m=cfg.m,
        box=cfg.box_length,
    )
    kw.update(extra)
    return MinimizeConfig(**kw)


PLOT_TEMPLATE = """# Plotting commands for {csv}; run with python3 if matplotlib is available.
import csv
import matplotlib.pyplot as plt

with open("{csv}") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
for col in {ys!r}:
    plt.{plot}(x, [abs(float(r[col])) for r in rows], marker="o", label=col)
plt.xlabel("{x}")
plt.legend()
plt.savefig("{png}")
"""


def _plot_script(out: Path, csv_name: str, x: str, ys, plot: str = "plot") -> Path:
    stem = Path(csv_name).stem
    path = out / f"plot_{stem}.py"
    path.write_text(PLOT_TEMPLATE.format(csv=csv_name, x=x, ys=list(ys), plot=plot, png=f"{stem}.png"), encoding="utf-8")
    return path


def _run_groundstate(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .groundstate import compute_groundstate, verify_groundstate

    gs = compute_groundstate(cfg.p, cfg.r_max, cfg.n)
    d = verify_groundstate(gs)
    files.append(io.write_radial(out / "q.csv", gs.q))
    files.append(io.write_json(out / "groundstate.json", {
        "p": gs.p,
        "omega0": gs.omega0,
        "phi0": gs.shoot_value,
        "residual_h1": gs.residual_h1,
        "mass": d.mass,
        "multiplier": d.multiplier,
    }))
    files.append(_plot_script(out, "q.csv", "r", ["u"], "semilogy"))
    acc["groundstate_verified"] = d.passed()


def _run_minimize(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .energy import EnergyParams
    from .minimize import minimize

    rep = minimize(EnergyParams(cfg.rho, cfg.p), _minimize_config(cfg))
    files.append(io.write_json(out / "minimize.json", {
        "rho": cfg.rho,
        "p": cfg.p,
        "k_value": rep.k_value,
        "omega": rep.omega,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "breakdown": rep.breakdown.to_dict(),
        "boundary_ratio": rep.boundary_ratio,
    }))
    files.append(io.write_csv(out / "energies.csv", ["iteration", "energy"], enumerate(rep.energies)))
    files.append(_plot_script(out, "energies.csv", "iteration", ["energy"]))
    if cfg.save_field:
        name = "field.csv" if cfg.representation == "radial" else "field.bin"
        files.append(io.write_field(out / name, rep.field))
    acc["converged"] = True


def _run_sweep(cfg: RunConfig, out: Path, files: list, acc: dict, errors: list):
    from .minimize import sweep_rho

    rows = sweep_rho(cfg.p, cfg.rho_list, _minimize_config(cfg))
    files.append(io.write_csv(
        out / "sweep.csv",
        ["rho", "K", "omega", "dist_h1", "iters", "residual"],
        [[r.rho, r.k_value, r.omega, r.dist_h1, r.iterations, r.residual] for r in rows],
    ))
    files.append(_plot_script(out, "sweep.csv", "rho", ["dist_h1", "residual"], "loglog"))
    errors.extend(f"rho={r.rho}: {r.error}" for r in rows if r.error)
    acc["all_rows_converged"] = not any(r.error for r in rows)


def _run_radiality(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .energy import EnergyParams
    from .minimize import minimize_3d_radiality_trial

    init = cfg.init or "random"
    trial = minimize_3d_radiality_trial(
        EnergyParams(cfg.rho, cfg.p),
        _minimize_config(cfg, representation="cartesian", init=init),
        monitor_every=5,
    )
    rep = trial.report
    files.append(io.write_json(out / "radiality.json", {
        "rho": cfg.rho,
        "p": cfg.p,
        "m": cfg.m,
        "box_length": cfg.box_length,
        "seed": cfg.seed,
        "k_value": rep.k_value,
        "omega": rep.omega,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "asymmetry": trial.asymmetry,
        "boundary_ratio": rep.boundary_ratio,
    }))
    files.append(io.write_csv(out / "radiality.csv", ["iteration", "asymmetry"], trial.history))
    files.append(_plot_script(out, "radiality.csv", "iteration", ["asymmetry"], "semilogy"))
    if cfg.save_field:
        files.append(io.write_field(out / "field.bin", rep.field))
    acc["asymmetry_below_1e-3"] = trial.asymmetry <= 1e-3


def _run_branch(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .branch import continue_branch
    from .fields import h1_distance
    from .groundstate import ground_state

    gs = ground_state(cfg.p, cfg.r_max, cfg.n)
    rho_end = cfg.rho if cfg.rho > 0 else 0.05
    omega = cfg.omega or gs.omega0
    path = [(0.0, gs.omega0)] + [
        (rho_end * i / cfg.path_steps, gs.omega0 + (omega - gs.omega0) * i / cfg.path_steps)
        for i in range(1, cfg.path_steps + 1)
    ]
    points = continue_branch(path, cfg.p, tol=cfg.tol or 1e-10, gs=gs)
    files.append(io.write_csv(
        out / "branch.csv",
        ["rho", "omega", "res", "min_sv", "dist_to_Q"],
        [[b.rho, b.omega, b.newton_residual, b.min_sv, h1_distance(b.w, gs.q, gs.omega0)] for b in points],
    ))
    files.append(io.write_json(out / "branch.json", {
        "accepted": len(points),
        "requested": len(path),
        "boundary": points.boundary,
    }))
    files.append(_plot_script(out, "branch.csv", "rho", ["min_sv", "dist_to_Q"]))
    acc["path_completed"] = points.boundary is None


def _run_spectrum(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .branch import lowest_eigenvalues, newton_solve
    from .energy import EnergyParams
    from .groundstate import ground_state

    gs = ground_state(cfg.p, cfg.r_max, cfg.n)
    omega = cfg.omega or gs.omega0
    w = gs.q
    if cfg.rho > 0 or omega != gs.omega0:
        w = newton_solve(cfg.rho, omega, gs.q, cfg.p).w
    rep = lowest_eigenvalues(w, EnergyParams(cfg.rho, cfg.p), omega, cfg.ell, cfg.k)
    files.append(io.write_csv(out / "spectrum.csv", ["index", "eigenvalue"], enumerate(rep.eigenvalues)))
    files.append(io.write_json(out / "spectrum.json", {
        "sector": rep.sector,
        "eigenvalues": rep.eigenvalues,
        "min_abs": rep.min_abs,
        "eigenvector_overlap": rep.eigenvector_overlap,
        "omega": omega,
        "omega0": gs.omega0,
        "n": rep.n,
    }))
    files.append(_plot_script(out, "spectrum.csv", "index", ["eigenvalue"], "semilogy"))
    acc["spectrum_computed"] = True


def _run_rescale(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .fields import RadialGrid
    from .scaling import alpha, alpha_printed, random_smooth_field, verify_equivalence

    grid = RadialGrid(cfg.r_max, cfg.n)
    rng = np.random.default_rng(cfg.seed)
    us = [random_smooth_field(grid, rng) for _ in range(20)]
    rhos = np.logspace(-3, 0, 7)
    rows = [[i, r, verify_equivalence(u, r, cfg.p)] for i, u in enumerate(us) for r in rhos]
    worst = max(row[2] for row in rows)
    ps = np.linspace(2.05, 3.3, 26)
    files.append(io.write_csv(out / "rescale.csv", ["field", "rho", "discrepancy"], rows))
    files.append(io.write_csv(out / "alpha.csv", ["p", "alpha_printed", "alpha"], [[p, alpha_printed(p), alpha(p)] for p in ps]))
    files.append(io.write_json(out / "rescale.json", {
        "p": cfg.p,
        "max_discrepancy": worst,
        "alpha": alpha(cfg.p),
        "alpha_printed": alpha_printed(cfg.p),
    }))
    files.append(_plot_script(out, "alpha.csv", "p", ["alpha", "alpha_printed"]))
    acc["equivalence_below_1e-11"] = worst <= 1e-11


def _run_decompose(cfg: RunConfig, out: Path, files: list, acc: dict):
    from .fields import RadialField
    from .geometry import Orbit, asymmetry, radial_distance_to_q
    from .groundstate import ground_state

    u = io.read_field(cfg.field_path)
    gs = ground_state(cfg.p)
    if isinstance(u, RadialField):
        report = {"tau": [0.0, 0.0, 0.0], "distance_h1": radial_distance_to_q(u, gs), "radial": True}
    else:
        from .fields import h1_norm_sq

        dec = Orbit(gs, u.grid).decompose(u)
        report = {
            "tau": dec.tau,
            "distance_h1": math.sqrt(h1_norm_sq(dec.remainder, gs.omega0)),
            "ortho_residuals": dec.ortho_residuals,
            "newton_iters": dec.newton_iters,
            "asymmetry": asymmetry(u),
            "radial": False,
        }
    files.append(io.write_json(out / "decompose.json", report))
    acc["decomposed"] = True


def _run_acceptance(cfg: RunConfig, out: Path, files: list, acc: dict, echo):
    from .acceptance import run_all

    results = run_all(out, cfg.criteria, echo=echo)
    for r in results:
        acc[f"criterion_{r.number}"] = r.passed
    files.extend(sorted(out.glob("*.csv")))


def run_experiment(cfg: RunConfig, echo=print) -> RunManifest:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files, acc, errors = [], {}, []
    runners = {
        "groundstate": _run_groundstate,
        "minimize": _run_minimize,
        "radiality": _run_radiality,
        "branch": _run_branch,
        "spectrum": _run_spectrum,
        "rescale-check": _run_rescale,
        "decompose": _run_decompose,
    }
    try:
        if cfg.experiment == "sweep":
            _run_sweep(cfg, out, files, acc, errors)
        elif cfg.experiment == "all-acceptance":
            _run_acceptance(cfg, out, files, acc, echo)
        else:
            runners[cfg.experiment](cfg, out, files, acc)
    except SPSError as exc:
        errors.append(f"{type(exc).__name__}: {exc}")
        acc["completed"] = False
    manifest = RunManifest(
        config=cfg.snapshot(),
        version=__version__,
        wall_clock_seconds=time.perf_counter() - t0,
        files=[str(Path(f).relative_to(out)) if Path(f).is_relative_to(out) else str(f) for f in files],
        acceptance=acc,
        errors=errors,
    )
    io.write_json(out / "manifest.json", asdict(manifest))
    return manifest


FLAGS = {
    "--p": ("p", float),
    "--rho": ("rho", float),
    "--n": ("n", str),
    "--rmax": ("r_max", float),
    "--m": ("m", str),
    "--box": ("box_length", float),
    "--dt": ("dt", float),
    "--tol": ("tol", float),
    "--max-iter": ("max_iter", str),
    "--seed": ("seed", str),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sps-lab", description="Schrödinger–Poisson–Slater numerical laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out", dest="output_dir", help="output directory")
        for flag, (key, _) in FLAGS.items():
            sp.add_argument(flag, dest=key, type=str, default=None)
        sp.add_argument("--verbose", "-v", action="store_true")
        if name == "sweep":
            sp.add_argument("--rho-list", dest="rho_list", help="comma-separated couplings")
        if name in ("minimize", "radiality"):
            sp.add_argument("--init", choices=("groundstate", "gaussian", "random", "file"))
            sp.add_argument("--init-path", dest="init_path")
            sp.add_argument("--save-field", dest="save_field", action="store_const", const="true")
        if name == "minimize":
            sp.add_argument("--representation", choices=("radial", "cartesian"))
        if name in ("branch", "spectrum"):
            sp.add_argument("--omega")
        if name == "branch":
            sp.add_argument("--steps", dest="path_steps")
        if name == "spectrum":
            sp.add_argument("--ell")
            sp.add_argument("--k")
        if name == "decompose":
            sp.add_argument("--field", dest="field_path", help="field file (.csv radial or raw + .json sidecar)")
        if name == "all-acceptance":
            sp.add_argument("--criteria", help="comma-separated subset of 1..10")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in {f.name for f in fields(RunConfig)} and v is not None}
    overrides.pop("experiment", None)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = parse_config(args.experiment, file_values, overrides)
    except ConfigError as exc:
        print(f"sps-lab: configuration error: {exc}", file=sys.stderr)
        return 2
    manifest = run_experiment(cfg)
    for err in manifest.errors:
        print(f"sps-lab: {err}", file=sys.stderr)
    if cfg.experiment != "all-acceptance":
        print(f"sps-lab {cfg.experiment}: wrote {len(manifest.files)} files to {cfg.output_dir}")
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    sys.exit(main())
