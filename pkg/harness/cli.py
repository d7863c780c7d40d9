import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable

from core.errors import ConfigError, GradTrackError
from core.mixing import spectral_catalog
from harness import reporter
from harness.config import SWEEP_ALIASES, EnvConfig, load_config, parse_sweep
from harness.experiment import ArtifactBundle, flat_theory, run_config, run_fig1, run_sweep, theory_only

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
LOG_LEVELS = ("debug", "info", "warning", "error")


def default_jobs() -> int:
    value = os.environ.get(EnvConfig.JOBS_VAR, "1")
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning("ignoring %s=%r, expected an integer", EnvConfig.JOBS_VAR, value)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradtrack", description="Distributed stochastic gradient tracking experiments.")
    parser.add_argument("--log", choices=LOG_LEVELS, default="warning", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p: argparse.ArgumentParser):
        p.add_argument("--jobs", type=int, default=default_jobs(), help=f"worker processes (default ${EnvConfig.JOBS_VAR} or 1)")
        p.add_argument("--progress", action="store_true", help="show a progress bar over replicas")

    run = sub.add_parser("run", help="run every algorithm of a config")
    run.add_argument("config", type=Path)
    add_run_options(run)

    theory = sub.add_parser("theory", help="print the closed-form guarantees of a config")
    theory.add_argument("config", type=Path)
    theory.add_argument("--json", type=Path, help="also write the report to this file")
    theory.add_argument("--catalog", action="store_true", help="append spectral gaps of the standard topologies")

    sweep = sub.add_parser("sweep", help="run a config once per axis value")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--axis", required=True, help="key=v1,v2,... (alpha=v is stepsize=constant:v)")
    add_run_options(sweep)

    fig1 = sub.add_parser("fig1", help="run the shipped ridge-regression suite")
    fig1.add_argument("--scale", type=float, default=1.0, help="multiplies steps and replicas")
    fig1.add_argument("--output", default="results/fig1")
    add_run_options(fig1)
    return parser


class CommandHandler:
    """Dispatches a parsed command line and turns outcomes into exit codes."""

    def __init__(self, out=None):
        self.out = out or sys.stdout
        self.handlers: dict[str, Callable[[argparse.Namespace], int]] = {
            "run": self._handle_run,
            "theory": self._handle_theory,
            "sweep": self._handle_sweep,
            "fig1": self._handle_fig1,
        }

    def dispatch(self, args: argparse.Namespace) -> int:
        try:
            return self.handlers[args.command](args)
        except GradTrackError as exc:
            logger.error("%s", exc)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    def _finish(self, bundles: list[ArtifactBundle]) -> int:
        code = EXIT_OK
        for bundle in bundles:
            self.out.write(f"{bundle.output}\n")
            if bundle.diverged:
                names = ",".join(a.value for a in bundle.diverged)
                self.out.write(f"  every replica diverged: {names}\n")
                code = EXIT_DIVERGED
        return code

    def _handle_run(self, args: argparse.Namespace) -> int:
        return self._finish(run_config(load_config(args.config), args.jobs, args.progress))

    def _handle_sweep(self, args: argparse.Namespace) -> int:
        cfg = load_config(args.config)
        try:
            key, values = parse_sweep(args.axis)
        except ValueError as exc:
            raise ConfigError(f"--axis: {exc}") from None
        logger.info("sweeping %s over %s", SWEEP_ALIASES.get(key, key), ",".join(values))
        return self._finish(run_sweep(cfg, key, values, args.jobs, args.progress))

    def _handle_fig1(self, args: argparse.Namespace) -> int:
        return self._finish(run_fig1(args.scale, args.output, args.jobs, args.progress))

    def _handle_theory(self, args: argparse.Namespace) -> int:
        cfg = load_config(args.config)
        reports = theory_only(cfg)
        flat = flat_theory(reports)
        if args.catalog:
            flat.update({f"catalog.{name}": gap for name, gap in spectral_catalog(cfg.agents).items()})
        self.out.write(reporter.render_flat(flat))
        if args.json is not None:
            reporter.write_json(args.json, {alg.value: r.flat() for alg, r in reports.items()})
        return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    return CommandHandler().dispatch(args)
