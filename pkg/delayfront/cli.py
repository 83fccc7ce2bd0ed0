"""
delayfront command line. Reports go to stdout as JSON (sorted keys, one time-dependent field
`timestamp`); logs go to stderr through rich.
"""
import argparse
import json
import logging
import os
import sys
import traceback
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from . import __version__
from .config import RunConfig, load_config
from .engine.errors import DelayFrontError, DomainError, EXIT_DOMAIN, EXIT_SUCCESS, EXIT_USAGE, exit_code_for
from .fronts.charspec import CharParams, real_roots, speed_bounds
from .fronts.dns import measure_speed, simulate
from .fronts.greens import apply_A
from .fronts.lattice import lattice_lambda, shift_match
from .fronts.nonlinearity import validate_H
from .fronts.profile import read_profile, residual
from .fronts.solver import solve_front
from .fronts.speedscan import SpeedScanReport, classify, estimate_cstar
from .metadata.sql_metadata_store import SqliteMetadataStore
from .resources.filesystem_store import RunDirectory


logger = logging.getLogger("delayfront")

SUBCOMMANDS = (
    "validate-g", "char-roots", "speed-bounds", "solve-front", "apply-A", "min-speed",
    "classify", "simulate", "lattice-char", "shift-match",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")



class Session:
    """Run directory and metadata store of one invocation; inert when no run directory is given."""
    def __init__(self, run_dir: Optional[str], command: str) -> None:
        self.run_dir = None
        self.store = None
        if run_dir is None:
            return
        self.store = SqliteMetadataStore("metadata", f"sqlite:///{os.path.abspath(run_dir)}/metadata.db", loggers=logger)
        self.run_dir = RunDirectory("run_dir", run_dir, metadata_store=self.store, loggers=logger)
        self.run_dir.setup()
        self.store.setup()
        self.store.start_run(command)

    def save_json(self, filename: str, content: Dict[str, Any]) -> None:
        if self.run_dir is not None:
            self.run_dir.save_json(filename, content)

    def save_profile(self, filename: str, profile) -> None:
        if self.run_dir is not None:
            self.run_dir.save_profile(filename, profile)

    def log_metrics(self, **kwargs) -> None:
        if self.store is not None:
            self.store.log_metrics(**kwargs)

    def log_params(self, **kwargs) -> None:
        if self.store is not None:
            self.store.log_params(**kwargs)

    def set_tags(self, **kwargs) -> None:
        if self.store is not None:
            self.store.set_tags(**kwargs)

    def close(self, exit_code: int) -> None:
        if self.store is not None:
            self.store.end_run(exit_code)



def emit(report: Dict[str, Any]) -> Dict[str, Any]:
    report = dict(report)
    report["timestamp"] = datetime.now().isoformat(timespec="seconds")
    sys.stdout.write(json.dumps(report, sort_keys=True, indent=2, default=str) + "\n")
    return report


def _config(args) -> RunConfig:
    return load_config(args.config)


def _run_dir(args, config: Optional[RunConfig] = None) -> Optional[str]:
    if getattr(args, "run_dir", None) is not None:
        return args.run_dir
    if config is not None:
        return config.outputs.run_dir
    return None


def _open(args, config: Optional[RunConfig]) -> Session:
    session = Session(_run_dir(args, config), args.command)
    if config is not None:
        session.save_json("config.json", config.model_dump(mode="json"))
    return session



def cmd_validate_g(args, session: Session, config: RunConfig) -> int:
    report = validate_H(config.problem.spec, relaxed=args.relaxed or config.problem.relaxed)
    content = emit(report.model_dump(mode="json"))
    session.save_json("validation.json", content)
    session.set_tags(validation="passed" if report.passed else "failed")
    return EXIT_SUCCESS if report.passed else EXIT_DOMAIN


def cmd_char_roots(args, session: Session, config: Optional[RunConfig]) -> int:
    roots = real_roots(CharParams(c=args.c, h=args.h, p=args.p))
    content = {"c": args.c, "h": args.h, "p": args.p}
    if roots is None:
        content.update({"lambda1": None, "lambda2": None, "degenerate": False, "real": False})
    else:
        content.update(roots.model_dump())
        content["real"] = True
    session.save_json("char_roots.json", emit(content))
    return EXIT_SUCCESS


def cmd_speed_bounds(args, session: Session, config: RunConfig) -> int:
    h = config.problem.h if args.h is None else args.h
    bounds = speed_bounds(config.problem.spec, h)
    content = emit(dict(bounds.model_dump(), h=h))
    session.save_json("speed_bounds.json", content)
    session.log_metrics(c_sharp=bounds.c_sharp, c_star_upper=bounds.c_star_upper)
    return EXIT_SUCCESS


def cmd_solve_front(args, session: Session, config: RunConfig) -> int:
    h = config.problem.h if args.h is None else args.h
    c = args.c if args.c is not None else config.numerics.c
    if c is None:
        raise DomainError("solve-front needs a speed: pass --c or set numerics.c")
    result = solve_front(config.problem.spec, c, h, config.numerics.solver_settings())
    content = emit(result.summary())
    session.save_json(f"front_c={c:.6f}.json", content)
    profile = result.profile
    profile.meta["strategy"] = result.strategy.value
    session.save_profile(f"front_c={c:.6f}.csv", profile)
    session.log_metrics(c=c, residual=result.report.final_residual, iterations=result.report.iterations)
    return EXIT_SUCCESS


def cmd_apply_A(args, session: Session, config: RunConfig) -> int:
    phi = read_profile(args.profile)
    spec = config.problem.spec
    out = apply_A(phi, spec, c=args.c, h=args.h)
    content = {
        "c": out.c, "h": out.h,
        "sup_change": float(np.max(np.abs(out.values - phi.values))),
        "quadrature_bound": out.meta.get("quadrature_bound"),
    }
    try:
        content["residual"] = residual(phi, spec) if (phi.c, phi.h) == (out.c, out.h) else None
    except DelayFrontError as e:
        content["residual"] = None
        logger.warning(f"residual of the input profile unavailable: {e}")
    session.save_json("apply_A.json", emit(content))
    session.save_profile("apply_A.csv", out)
    return EXIT_SUCCESS


def _save_fronts(session: Session, fronts: Dict[float, Any]) -> None:
    for c, result in sorted(fronts.items()):
        if result.report.converged:
            profile = result.profile
            profile.meta["strategy"] = result.strategy.value
            session.save_profile(f"front_c={c:.6f}.csv", profile)


def cmd_min_speed(args, session: Session, config: RunConfig) -> int:
    h = config.problem.h if args.h is None else args.h
    tol = config.numerics.scan_tol if args.tol is None else args.tol
    sim_config = config.sim_config() if config.simulation is not None else None
    report, fronts = estimate_cstar(
        config.problem.spec, h, tol=tol, settings=config.numerics.solver_settings(), jobs=args.jobs,
        dns=config.numerics.dns, sim_config=sim_config, loggers=logger
    )
    content = emit(report.model_dump(mode="json", exclude={"timestamp"}))
    session.save_json("speedscan.json", content)
    _save_fronts(session, fronts)
    session.log_metrics(c_star=report.c_star, dns_speed=report.dns_speed)
    session.set_tags(classification=report.classification.value)
    return EXIT_SUCCESS


def cmd_classify(args, session: Session, config: RunConfig) -> int:
    if session.run_dir is None:
        raise DomainError("classify needs a run directory (--run-dir or outputs.run_dir)")
    spec = config.problem.spec
    settings = config.numerics.solver_settings()
    scans = session.run_dir.list_artifacts("speedscan")
    if scans:
        report = SpeedScanReport.model_validate(session.run_dir.load_artifact(scans[-1]))
        fronts = {p.c: p for p in session.run_dir.load_profiles() if p.h == report.h}
        classification, evidence, notes, solved = classify(spec, report.h, report, settings, fronts=fronts, jobs=args.jobs, loggers=logger)
        report.classification = classification
        report.evidence = evidence
        report.notes.extend(notes)
        solved = {c: r for c, r in solved.items() if c not in fronts}
    else:
        logger.info("no speedscan.json in the run directory; running the speed scan first")
        sim_config = config.sim_config() if config.simulation is not None else None
        report, solved = estimate_cstar(
            spec, config.problem.h, tol=config.numerics.scan_tol, settings=settings, jobs=args.jobs,
            dns=config.numerics.dns, sim_config=sim_config, loggers=logger
        )
    content = emit(report.model_dump(mode="json", exclude={"timestamp"}))
    session.save_json("classification.json", content)
    _save_fronts(session, solved)
    session.set_tags(classification=report.classification.value)
    return EXIT_SUCCESS


def cmd_simulate(args, session: Session, config: RunConfig) -> int:
    sim_config = config.sim_config()
    if args.snapshot_every is not None:
        sim_config = sim_config.model_copy(update={"snapshot_every": args.snapshot_every})
    trajectory = simulate(sim_config)
    content: Dict[str, Any] = {"snapshots": int(trajectory.times.size), "T_final": float(trajectory.times[-1])}
    try:
        estimate = measure_speed(trajectory)
        content.update({"speed": estimate.speed, "stderr": estimate.stderr, "level": estimate.level, "window": estimate.window})
        content["note"] = "DNS spreading speed is an empirical estimator"
    except DomainError as e:
        content.update({"speed": None, "note": str(e)})
    content = emit(content)
    session.save_json("simulation.json", content)
    if session.run_dir is not None:
        for t, state in zip(trajectory.times, trajectory.states):
            session.run_dir.save_snapshot(f"snapshot_t={t:.6f}.csv", trajectory.x, state)
    session.log_metrics(dns_speed=content.get("speed"))
    return EXIT_SUCCESS


def cmd_lattice_char(args, session: Session, config: RunConfig) -> int:
    report = lattice_lambda(config.lattice_model())
    content = emit(report.model_dump(mode="json", by_alias=True))
    session.save_json("lattice_char.json", content)
    return EXIT_SUCCESS


def cmd_shift_match(args, session: Session, config: Optional[RunConfig]) -> int:
    match = shift_match(read_profile(args.a), read_profile(args.b))
    session.save_json("shift_match.json", emit(match.model_dump()))
    return EXIT_SUCCESS


COMMANDS: Dict[str, Callable] = {
    "validate-g": cmd_validate_g,
    "char-roots": cmd_char_roots,
    "speed-bounds": cmd_speed_bounds,
    "solve-front": cmd_solve_front,
    "apply-A": cmd_apply_A,
    "min-speed": cmd_min_speed,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "lattice-char": cmd_lattice_char,
    "shift-match": cmd_shift_match,
}
NEEDS_CONFIG = {"validate-g", "speed-bounds", "solve-front", "apply-A", "min-speed", "classify", "simulate", "lattice-char"}



def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--jobs", type=int, default=os.cpu_count(), help="parallel probe solves (default: available cores)")
    common.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    common.add_argument("--run-dir", default=None, help="append-only directory for reports, CSVs and run metadata")

    parser = _Parser(prog="delayfront", description="Traveling fronts of delayed reaction-diffusion equations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = subparsers.add_parser("validate-g", parents=[common], help="check the hypotheses on g")
    p.add_argument("--config", required=True)
    p.add_argument("--relaxed", action="store_true", help="accept nondecreasing g (lattice-only runs)")

    p = subparsers.add_parser("char-roots", parents=[common], help="real roots of the characteristic function")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--p", type=float, required=True)

    p = subparsers.add_parser("speed-bounds", parents=[common], help="c_# and c^*(g'_+)")
    p.add_argument("--config", required=True)
    p.add_argument("--h", type=float, default=None)

    p = subparsers.add_parser("solve-front", parents=[common], help="front at one speed")
    p.add_argument("--config", required=True)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--h", type=float, default=None)

    p = subparsers.add_parser("apply-A", parents=[common], help="apply the integral operator to a profile CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--h", type=float, default=None)

    p = subparsers.add_parser("min-speed", parents=[common], help="minimal speed and classification")
    p.add_argument("--config", required=True)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = subparsers.add_parser("classify", parents=[common], help="pulled/pushed classification from a run directory")
    p.add_argument("--config", required=True)

    p = subparsers.add_parser("simulate", parents=[common], help="direct simulation and spreading speed")
    p.add_argument("--config", required=True)
    p.add_argument("--snapshot-every", type=int, default=None)
    p.add_argument("--out", dest="run_dir", default=None, help="alias of --run-dir")

    p = subparsers.add_parser("lattice-char", parents=[common], help="lattice decay exponent and multiplicity")
    p.add_argument("--config", required=True)

    p = subparsers.add_parser("shift-match", parents=[common], help="translation between two profile CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    return parser


def configure_logging(quiet: bool) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    root.addHandler(handler)
    root.setLevel(logging.WARNING if quiet else logging.INFO)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()

    first = next((a for a in argv if not a.startswith("-")), None)
    if first is not None and first not in SUBCOMMANDS:
        sys.stderr.write(parser.format_usage() + f"delayfront: unknown subcommand '{first}'\n")
        return EXIT_USAGE

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e) + "\n")
        return EXIT_USAGE
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    if args.command is None:
        sys.stderr.write(parser.format_usage())
        return EXIT_USAGE

    configure_logging(args.quiet)
    session = None
    code = EXIT_SUCCESS
    try:
        config = _config(args) if args.command in NEEDS_CONFIG else None
        session = _open(args, config)
        code = COMMANDS[args.command](args, session, config)
    except Exception as e:
        code = exit_code_for(e)
        if isinstance(e, DelayFrontError):
            logger.error(f"{type(e).__name__}: {e}")
        else:
            logger.error(traceback.format_exc())
    finally:
        if session is not None:
            session.close(code)
    return code
