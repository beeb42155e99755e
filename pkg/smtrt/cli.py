"""Command-line entry point: ``smtrt {run,converge,compare,reference} --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import bench, output
from .config import RunConfig, parse_config
from .driver import METHODS, run
from .errors import ConfigurationError, SmtrtError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2

_HANDLER_FLAG = "_smtrt_cli_handler"


def configure_logging(verbose: int = 0, quiet: bool = False) -> None:
    """One stderr handler on the package logger with [LEVEL] prefixes."""
    pkg = logging.getLogger("smtrt")
    for handler in list(pkg.handlers):
        if getattr(handler, _HANDLER_FLAG, False):
            pkg.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
    setattr(handler, _HANDLER_FLAG, True)
    pkg.addHandler(handler)
    pkg.setLevel(logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO)


def _snapshot_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"snapshots must be comma-separated numbers, got {text!r}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("--threads must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smtrt",
        description="Slab multigroup Sn thermal radiative transfer with Second-Moment acceleration")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for studies")
    common.add_argument("--method", choices=METHODS, help="override the configured method")
    common.add_argument("--snapshots", type=_snapshot_list, help="snapshot times t1,t2,... in ns")
    common.add_argument("--reference", type=Path, help="reference file (default <out>/reference.json)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one simulation")
    sub.add_parser("reference", parents=[common], help="compute and store a discrete reference solution")
    sub.add_parser("converge", parents=[common], help="convergence study against a stored reference")
    sub.add_parser("compare", parents=[common], help="sweep counts of all methods over a dt ladder")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    update = {}
    if args.out is not None:
        update["output_dir"] = str(args.out)
    if args.method is not None:
        update["method"] = args.method
    if args.snapshots is not None:
        update["snapshots"] = args.snapshots
    return cfg.model_copy(update=update) if update else cfg


def _reference_path(cfg: RunConfig, args: argparse.Namespace) -> Path:
    return args.reference if args.reference is not None else Path(cfg.output_dir) / "reference.json"


def cmd_run(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec()
    problem = cfg.build_problem(spec)
    schedule = cfg.schedule(spec.t_final)
    out = output.prepare_output_dir(cfg.output_dir)
    traj = run(problem, cfg.solver_config(), schedule, probes=cfg.probes,
               progress=cfg.progress, checkpoint_dir=out)
    output.emit_outputs(out, traj, problem, cfg.method, cfg.deterministic)
    logger.info("%d steps, %d sweeps, %d floors", len(traj.reports), traj.total_sweeps, traj.total_floors)
    return EXIT_OK


def cmd_reference(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec()
    path = _reference_path(cfg, args)
    output.prepare_output_dir(path.parent)
    ref = bench.make_reference(spec, cfg.study.reference_elements, cfg.study.reference_dt,
                               cfg.solver_config())
    output.save_reference(path, ref)
    return EXIT_OK


def cmd_converge(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec()
    out = output.prepare_output_dir(cfg.output_dir)
    ref = output.load_reference(_reference_path(cfg, args))
    studies = []
    for method in cfg.study.methods:
        study = bench.convergence_study(spec, cfg.study.mesh_ladder, cfg.study.dt_ladder,
                                        cfg.solver_config(method), ref, threads=args.threads)
        logger.info("%s: space order %s, time order %s", method, study.space_order, study.time_order)
        studies.append(study)
    output.write_convergence(out, studies)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec = cfg.spec()
    out = output.prepare_output_dir(cfg.output_dir)
    elements = cfg.compare.elements or cfg.elements
    if elements is None:
        raise ConfigurationError("compare needs 'compare.elements' or 'elements'")
    dts = cfg.compare.dt_ladder or [cfg.dt]
    table = bench.compare_methods(spec, elements, dts, cfg.solver_config(),
                                  methods=cfg.compare.methods, threads=args.threads)
    output.write_compare(out, table, cfg.deterministic)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "reference": cmd_reference,
    "converge": cmd_converge,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        logger.error("%s", exc)
        for item in exc.errors:
            if item != str(exc):
                logger.error("  %s", item)
        return EXIT_USAGE
    except SmtrtError as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
