"""Command-line entry point: ``bv-veritas run --config PATH``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from bv_veritas.config import REPORT_ENV, SUITE_NAMES, RunConfig, config_from_text, load_config
from bv_veritas.errors import ConfigInvalid, VeritasError
from bv_veritas.green import dump_kernels
from bv_veritas.report import render_report
from bv_veritas.suites import Workspace, run_suites

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bv-veritas", description="Exact lattice checks of BV/BRST identities."
    )
    parser.add_argument(
        "--log-level", default="WARNING", help="DEBUG, INFO, WARNING or ERROR (default WARNING)"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="Run verification suites")
    run.add_argument("--config", type=Path, help="Config file; defaults apply without one")
    run.add_argument(
        "--suite", action="append", default=None, choices=SUITE_NAMES,
        help="Suite to run (repeatable); overrides the config list",
    )
    run.add_argument("--report", type=Path, default=None, help="Write the report here")
    run.add_argument("--format", choices=("json", "md"), default=None)
    run.add_argument("--dump-kernels", type=Path, default=None, help="Directory for kernel dumps")
    run.add_argument("--seed", type=int, default=None)
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    update: dict[str, object] = {}
    if args.suite:
        update["suites"] = list(args.suite)
    if args.seed is not None:
        update["seed"] = args.seed
    if args.format is not None:
        update["format"] = args.format
    if args.dump_kernels is not None:
        update["dump_kernels"] = str(args.dump_kernels)
    if args.report is not None and not os.environ.get(REPORT_ENV):
        update["report"] = str(args.report)
    if not update:
        return config
    return config.model_copy(update={"run": config.run.model_copy(update=update)})


def run_command(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config) if args.config else config_from_text("")
    except ConfigInvalid as exc:
        for line, message in exc.diagnostics:
            print(f"{args.config}:{line}: {message}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    config = _apply_overrides(config, args)
    workspace = Workspace(config)
    try:
        report = run_suites(config, workspace)
    except VeritasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.run.dump_kernels:
        paths = dump_kernels(workspace.props(config.model.name), Path(config.run.dump_kernels))
        logger.info(f"Wrote {len(paths)} kernel dumps to {config.run.dump_kernels}")
    text = render_report(report, config.run.format)
    if config.run.report:
        Path(config.run.report).write_text(text)
        logger.info(f"Report written to {config.run.report}")
    else:
        sys.stdout.write(text)
    return 0 if report.ok else 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "run":
        return run_command(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
