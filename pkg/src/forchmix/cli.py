"""Batch front end: ``python -m forchmix run <config> [--out DIR] [--seed N] [--verbose]``.

Configs are flat INI text (``[section]`` headers, ``key = value`` lines,
``#`` comments).  Sections and keys::

    [run]          mode = stationary | transient | study | sweep
                   tol = 1e-10, seed = 0
    [mesh]         nx, ny, domain = x0 x1 y0 y1
    [coefficients] alpha, beta, gamma, phi     (constants)
                   file = cells.csv            (per-cell columns alpha,beta,gamma,phi)
                   trajectory = gamma.csv      (per-level columns alpha,beta,gamma)
                   lipschitz_alpha, lipschitz_beta, lipschitz_gamma, lipschitz_f
    [source]       value = f                   (constant)
    [boundary]     value = S_b                 (constant)
    [initial]      value = c  |  profile = bump, amplitude = a
    [schedule]     eps0, factor, max_stages, stage_tol
    [time]         horizon, steps, vtk_every
    [study]        case = sine | skewed | constant, alpha, beta, meshes = 4 8 16
    [sweep]        samples, discrete_samples

Relative file paths are resolved against the config file's directory.
Exit status: 0 success, 1 usage or ingestion error, 2 solver failure.
"""

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import CoefficientField, MixedSystem
from .errors import ConditioningError, ContractError, IngestionError, NonConvergenceError
from .grid import BoundaryData, ScalarField, build_structured_mesh
from .io import read_csv, write_csv, write_vtk
from .stationary import ContinuationSchedule, solve_stationary
from .transient import TimeGrid, TransientProblem, check_dt_admissible, run
from .verify import constant_case, convergence_study, inequality_sweep, sine_case, skewed_case

log = logging.getLogger("forchmix")

MODES = ("stationary", "transient", "study", "sweep")
CASES = {"sine": sine_case, "skewed": skewed_case, "constant": lambda alpha, beta: constant_case(2.0, alpha, beta)}
COEFF_NAMES = ("alpha", "beta", "gamma", "phi")


@dataclass
class RunConfig:
    mode: str
    tol: float = 1e-10
    seed: int = 0
    nx: int = 8
    ny: int = 8
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    coefficients: dict = field(default_factory=lambda: {n: 1.0 for n in COEFF_NAMES})
    cell_coefficients: dict | None = None
    trajectory: list | None = None
    lipschitz: dict = field(default_factory=dict)
    source: float = 0.0
    boundary: float = 0.0
    initial_value: float = 0.0
    initial_profile: str = "constant"
    initial_amplitude: float = 1.0
    schedule: ContinuationSchedule | None = None
    horizon: float = 1.0
    steps: int = 10
    vtk_every: int = 0
    study_case: str = "sine"
    study_alpha: float = 1.0
    study_beta: float = 1.0
    study_meshes: tuple = (4, 8, 16)
    samples: int = 1000
    discrete_samples: int = 100
    base_dir: Path = Path(".")

    def mesh(self):
        return build_structured_mesh(self.nx, self.ny, self.domain)


# -- ingestion ---------------------------------------------------------------


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines[(section, None)] = i
        elif "=" in line and section is not None:
            lines[(section, line.split("=", 1)[0].strip().lower())] = i
    return lines


class _Reader:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines
        self.used = set()

    def fail(self, section, key, message):
        raise IngestionError(message, line=self.lines.get((section, key), self.lines.get((section, None))))

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            return default
        self.used.add((section, key))
        return self.parser.get(section, key).strip()

    def number(self, section, key, default=None, kind=float, positive=False, nonneg=False):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            value = kind(text) if kind is float else int(text, 10)
        except ValueError:
            self.fail(section, key, f"[{section}] {key}: cannot parse {text!r} as {kind.__name__}")
        if kind is float and not np.isfinite(value):
            self.fail(section, key, f"[{section}] {key} must be finite")
        if positive and not value > 0:
            self.fail(section, key, f"[{section}] {key} must be positive, got {text}")
        if nonneg and value < 0:
            self.fail(section, key, f"[{section}] {key} must be nonnegative, got {text}")
        return value

    def numbers(self, section, key, default, kind=float):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            return tuple(kind(t) for t in text.replace(",", " ").split())
        except ValueError:
            self.fail(section, key, f"[{section}] {key}: cannot parse {text!r}")


def _parse(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise IngestionError("expected a [section] header before the first key", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise IngestionError("malformed line (expected 'key = value')", line=lineno) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise IngestionError(str(exc).split(":")[-1].strip() or "duplicate entry", line=exc.lineno) from exc
    return parser


def _read_table(path, columns, reader, section, key):
    try:
        header, rows = read_csv(path)
    except (OSError, ValueError, StopIteration) as exc:
        reader.fail(section, key, f"cannot read {path}: {exc}")
    missing = [c for c in columns if c not in header]
    if missing:
        reader.fail(section, key, f"{path} lacks columns {missing}")
    return np.array([[row[header.index(c)] for c in columns] for row in rows], dtype=float)


def ingest(text, base_dir=".", seed=None) -> RunConfig:
    """Parse and validate config text; violations raise :class:`IngestionError`."""
    parser = _parse(text)
    lines = _key_lines(text)
    r = _Reader(parser, lines)
    if not parser.has_section("run"):
        raise IngestionError("missing [run] section")
    mode = r.raw("run", "mode")
    if mode not in MODES:
        r.fail("run", "mode", f"[run] mode must be one of {', '.join(MODES)}, got {mode!r}")
    cfg = RunConfig(mode=mode, base_dir=Path(base_dir))
    cfg.tol = r.number("run", "tol", cfg.tol, positive=True)
    cfg.seed = r.number("run", "seed", 0, kind=int, nonneg=True) if seed is None else int(seed)
    cfg.nx = r.number("mesh", "nx", cfg.nx, kind=int, positive=True)
    cfg.ny = r.number("mesh", "ny", cfg.ny, kind=int, positive=True)
    domain = r.numbers("mesh", "domain", cfg.domain)
    if len(domain) != 4 or not (domain[1] > domain[0] and domain[3] > domain[2]):
        r.fail("mesh", "domain", "[mesh] domain must be 'x0 x1 y0 y1' with x1 > x0 and y1 > y0")
    cfg.domain = tuple(domain)

    sec = "coefficients"
    for name in COEFF_NAMES:
        cfg.coefficients[name] = r.number(sec, name, cfg.coefficients[name])
    for name in ("alpha", "beta", "gamma", "f"):
        value = r.number(sec, f"lipschitz_{name}", None, nonneg=True)
        if value is not None:
            cfg.lipschitz[name] = value
    if r.has(sec, "file"):
        path = cfg.base_dir / r.raw(sec, "file")
        table = _read_table(path, COEFF_NAMES, r, sec, "file")
        if len(table) != cfg.nx * cfg.ny:
            r.fail(sec, "file", f"{path} has {len(table)} rows, expected one per cell ({cfg.nx * cfg.ny})")
        cfg.cell_coefficients = {n: table[:, i] for i, n in enumerate(COEFF_NAMES)}
    if r.has(sec, "trajectory"):
        path = cfg.base_dir / r.raw(sec, "trajectory")
        table = _read_table(path, ("alpha", "beta", "gamma"), r, sec, "trajectory")
        cfg.trajectory = [dict(zip(("alpha", "beta", "gamma"), row)) for row in table]
    _check_coefficients(cfg, r)

    cfg.source = r.number("source", "value", cfg.source)
    cfg.boundary = r.number("boundary", "value", cfg.boundary)
    cfg.initial_profile = r.raw("initial", "profile", "constant")
    if cfg.initial_profile not in ("constant", "bump"):
        r.fail("initial", "profile", "[initial] profile must be 'constant' or 'bump'")
    cfg.initial_value = r.number("initial", "value", cfg.initial_value)
    cfg.initial_amplitude = r.number("initial", "amplitude", cfg.initial_amplitude)

    if parser.has_section("schedule"):
        defaults = ContinuationSchedule()
        try:
            cfg.schedule = ContinuationSchedule(
                eps0=r.number("schedule", "eps0", defaults.eps0, positive=True),
                factor=r.number("schedule", "factor", defaults.factor, positive=True),
                max_stages=r.number("schedule", "max_stages", defaults.max_stages, kind=int, positive=True),
                stage_tol=r.number("schedule", "stage_tol", None, positive=True))
        except ContractError as exc:
            r.fail("schedule", None, f"[schedule] {exc}")

    if mode == "transient":
        cfg.horizon = r.number("time", "horizon", cfg.horizon, positive=True)
        cfg.steps = r.number("time", "steps", cfg.steps, kind=int, positive=True)
        cfg.vtk_every = r.number("time", "vtk_every", cfg.steps, kind=int, nonneg=True)
        if cfg.boundary != 0.0:
            r.fail("boundary", "value",
                   "transient runs require homogeneous Dirichlet data (boundary value 0); "
                   "the time-dependent model is only posed for zero boundary pressure")
        if cfg.trajectory is not None and len(cfg.trajectory) != cfg.steps + 1:
            r.fail(sec, "trajectory", f"trajectory needs {cfg.steps + 1} rows (levels 0..K), got {len(cfg.trajectory)}")
        try:
            problem = transient_problem(cfg)
        except ContractError as exc:
            r.fail(sec, None, f"invalid transient data: {exc}")
        ok, c_dt = check_dt_admissible(problem)
        if not ok:
            r.fail("time", "steps",
                   f"time step violates the energy-estimate smallness condition C*dt < 1 with "
                   f"C = 2 (1/(phi_lo gamma_lo) + L(gamma)/gamma_lo): C*dt = {c_dt:.6g}")
    if mode == "study":
        cfg.study_case = r.raw("study", "case", cfg.study_case)
        if cfg.study_case not in CASES:
            r.fail("study", "case", f"[study] case must be one of {', '.join(CASES)}")
        cfg.study_alpha = r.number("study", "alpha", cfg.study_alpha, positive=True)
        cfg.study_beta = r.number("study", "beta", cfg.study_beta, positive=True)
        cfg.study_meshes = r.numbers("study", "meshes", cfg.study_meshes, kind=int)
        if len(cfg.study_meshes) < 3 or min(cfg.study_meshes) < 1:
            r.fail("study", "meshes", "[study] meshes needs at least three positive sizes")
    if mode == "sweep":
        cfg.samples = r.number("sweep", "samples", cfg.samples, kind=int, positive=True)
        cfg.discrete_samples = r.number("sweep", "discrete_samples", cfg.discrete_samples, kind=int, nonneg=True)
    return cfg


def _check_coefficients(cfg, r):
    sec = "coefficients"
    sets = [cfg.coefficients]
    if cfg.cell_coefficients is not None:
        sets = [{n: np.min(v) for n, v in cfg.cell_coefficients.items()}]
    if cfg.trajectory is not None:
        sets = sets + cfg.trajectory
    for values in sets:
        for name in COEFF_NAMES:
            if name not in values:
                continue
            lo = float(np.min(values[name]))
            if name == "beta" and not lo > 0:
                r.fail(sec, "beta", "beta lower bound must be positive: the Forchheimer coefficient is "
                                    "assumed bounded below by a positive constant")
            if not lo > 0:
                r.fail(sec, name, f"{name} lower bound must be positive (coefficients are assumed "
                                  f"bounded below by positive constants)")


# -- problem construction -----------------------------------------------------


def coefficient_field(cfg, mesh, level=None):
    values = dict(cfg.coefficients)
    if cfg.cell_coefficients is not None:
        values.update(cfg.cell_coefficients)
    if level is not None and cfg.trajectory is not None:
        values.update(cfg.trajectory[level])
    return CoefficientField.constant(mesh, *(np.broadcast_to(values[n], (mesh.n_cells,)) for n in COEFF_NAMES))


def initial_field(cfg, mesh):
    if cfg.initial_profile == "bump":
        x0, x1, y0, y1 = cfg.domain
        c = mesh.cell_centroids
        bump = np.sin(np.pi * (c[:, 0] - x0) / (x1 - x0)) * np.sin(np.pi * (c[:, 1] - y0) / (y1 - y0))
        return ScalarField(mesh, cfg.initial_amplitude * bump)
    return ScalarField(mesh, np.full(mesh.n_cells, cfg.initial_value))


def transient_problem(cfg):
    mesh = cfg.mesh()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    if cfg.trajectory is None:
        coeffs = coefficient_field(cfg, mesh)
    else:
        coeffs = [coefficient_field(cfg, mesh, k) for k in range(cfg.steps + 1)]
    source = ScalarField(mesh, np.full(mesh.n_cells, cfg.source))
    return TransientProblem(mesh, grid, coeffs, initial_field(cfg, mesh), source, lipschitz=cfg.lipschitz)


def stationary_system(cfg):
    mesh = cfg.mesh()
    boundary = BoundaryData(mesh, np.full(len(mesh.boundary_edges), cfg.boundary))
    return MixedSystem(mesh, coefficient_field(cfg, mesh), boundary, ScalarField(mesh, np.full(mesh.n_cells, cfg.source)))


# -- execution ---------------------------------------------------------------


def _write_report(out, payload):
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def _stationary(cfg, out):
    sys_ = stationary_system(cfg)
    (m, S), report = solve_stationary(sys_, cfg.schedule, tol=cfg.tol)
    write_vtk(out / "solution.vtk", sys_.mesh, S, m, title="stationary solution")
    rows = [(i, s.eps, s.newton_iters, s.final_residual, s.distance, s.m_norm, s.S_norm)
            for i, s in enumerate(report.stages)]
    write_csv(out / "stages.csv", ("stage", "eps", "newton_iters", "final_residual", "distance", "m_norm", "S_norm"), rows)
    return {"mode": "stationary", **report.summary()}


def _transient(cfg, out):
    problem = transient_problem(cfg)
    traj, monitor = run(problem, tol=cfg.tol, schedule=cfg.schedule)
    monitor.to_csv(out / "monitor.csv")
    every = cfg.vtk_every
    steps = sorted({0, cfg.steps} | (set(range(0, cfg.steps + 1, every)) if every else set()))
    traj.to_vtk(out, steps=steps)
    _, c_dt = check_dt_admissible(problem)
    return {"mode": "transient", "converged": True, "steps": cfg.steps, "c_dt": c_dt,
            "recursion_violations": len(monitor.recursion_violations()),
            "final_energy": float(monitor.column("energy")[-1]),
            "increment_sum": float(monitor.column("increment_sum")[-1]),
            "max_mass_defect": float(monitor.column("mass_defect").max())}


def _study(cfg, out):
    case = CASES[cfg.study_case](alpha=cfg.study_alpha, beta=cfg.study_beta)
    table = convergence_study(case, list(cfg.study_meshes), cfg.schedule, tol=cfg.tol)
    table.to_csv(out / "study.csv")
    (out / "summary.txt").write_text(table.summary() + "\n")
    return {"mode": "study", "converged": True, "case": case.name, "order_S": table.order_S, "order_m": table.order_m}


def _sweep(cfg, out):
    result = inequality_sweep(cfg.seed, cfg.samples, discrete_samples=cfg.discrete_samples)
    write_csv(out / "sweep.csv", ("inequality", "min_relative_slack"), sorted(result.items()))
    return {"mode": "sweep", "converged": True, "seed": cfg.seed, "samples": cfg.samples,
            **{f"min_slack_{k}": v for k, v in result.items()}}


RUNNERS = {"stationary": _stationary, "transient": _transient, "study": _study, "sweep": _sweep}


def execute(cfg: RunConfig, out) -> int:
    """Run ``cfg`` writing artifacts to ``out``; returns the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        payload = RUNNERS[cfg.mode](cfg, out)
    except (NonConvergenceError, ConditioningError) as exc:
        log.error("solver failure: %s", exc)
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        _write_report(out, {"mode": cfg.mode, "converged": False, "error": str(exc)})
        return 2
    payload["schema"] = 1
    _write_report(out, payload)
    log.info("wrote %s", out)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="python -m forchmix", description="Mixed finite-element solver for Darcy-Forchheimer gas flow.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    r.add_argument("--seed", type=int, default=None, help="RNG seed (overrides [run] seed)")
    r.add_argument("--verbose", action="store_true", help="log solver progress")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"forchmix: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = ingest(text, base_dir=args.config.parent, seed=args.seed)
    except IngestionError as exc:
        print(f"forchmix: {args.config}: {exc}", file=sys.stderr)
        return 1
    return execute(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
