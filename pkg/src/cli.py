#src/cli.py
"""Command-line front end: run, sweep, profile, selftest, gen-toy-data."""
import argparse
import sys
from typing import List, Optional

from models.models import RunConfig
from src.config import load_run_config, render_run_config
from src.custom_exception import CustomException, InvalidInputError, SelftestError, SimulationError
from src.engines import ENGINE_KINDS
from src.logger import configure_logging, get_logger
from src.network_io import generate_toy_data
from src.selftest import run_selftest
from src.simulation import Simulation, render_report, render_sweep, write_output

logger = get_logger(__name__)


def _config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="run config file ([run], [geometry], [adc], [costs])")
    parser.add_argument("--engine", choices=ENGINE_KINDS)
    parser.add_argument("--sections", type=int, help="kernel sections per subarray")
    parser.add_argument("--sigma", type=float, help="ADC count-noise std (counts)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--network", help="network description file")
    parser.add_argument("--weights", help="directory of <layer>.xrt weight files")
    parser.add_argument("--data", help="dataset directory (XRT1 images + labels.csv)")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--baseline", action="store_true", default=None, help="add speedups vs the host baseline")
    parser.add_argument("--out", help="report file (default: stdout)")
    parser.add_argument("--format", dest="output_format", choices=("table", "csv", "json"))
    parser.add_argument("--jobs", type=int, help="worker processes for inference")
    parser.add_argument("--explain", action="store_true", default=None, help="per-layer event breakdown")
    parser.add_argument("--echo-config", action="store_true", help="print the effective config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xcelram", description="Compute-in-SRAM BNN inference simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="evaluate a dataset and report per-layer costs")
    _config_flags(run)

    sweep = commands.add_parser("sweep", help="re-run over values of sigma or sections")
    _config_flags(sweep)
    sweep.add_argument("--parameter", required=True, choices=("sigma", "sections"))
    sweep.add_argument("--values", required=True, help="comma-separated values")

    profile = commands.add_parser("profile", help="analytic single-inference costs from layer shapes")
    _config_flags(profile)

    selftest = commands.add_parser("selftest", help="oracle-equivalence and ADC round-trip checks")
    selftest.add_argument("--pairs", type=int, default=2000)
    selftest.add_argument("--seed", type=int, default=0)
    selftest.add_argument("--inject-fault", action="store_true", default=None,
                          help="corrupt the ADC decode tables (the checks must fail)")

    toy = commands.add_parser("gen-toy-data", help="write a toy network, weights and labeled images")
    toy.add_argument("--out", required=True)
    toy.add_argument("--images", type=int, default=16)
    toy.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "engine": args.engine,
        "network": args.network,
        "weights": args.weights,
        "data": args.data,
        "out": args.out,
        "output_format": args.output_format,
        "trials": args.trials,
        "jobs": args.jobs,
        "baseline": args.baseline,
        "explain": args.explain,
        "geometry": {"sections": args.sections},
        "adc": {"sigma": args.sigma, "seed": args.seed},
    }
    return load_run_config(args.config, overrides)


def parse_values(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidInputError(f"--values must be comma-separated numbers, got {text!r}", e)
    if not values:
        raise InvalidInputError("--values is empty")
    return values


def cmd_run(config: RunConfig) -> int:
    report = Simulation(config).run()
    write_output(render_report(report, config.output_format), config.out)
    return 0


def cmd_profile(config: RunConfig) -> int:
    report = Simulation(config).profile()
    write_output(render_report(report, config.output_format), config.out)
    return 0


def cmd_sweep(config: RunConfig, parameter: str, values: List[float]) -> int:
    rows = Simulation(config).sweep(parameter, values)
    output_format = config.output_format if config.output_format != "table" else "csv"
    write_output(render_sweep(rows, output_format), config.out)
    return 0


def cmd_selftest(pairs: int = 2000, seed: int = 0, inject_fault: Optional[bool] = None) -> int:
    result = run_selftest(pairs, seed, inject_fault)
    if not result.passed:
        raise SelftestError(f"{len(result.failures)} of {result.checks} selftest checks failed", result.failures)
    print(f"selftest passed: {result.checks} checks")
    return 0


def cmd_gen_toy_data(out: str, images: int, seed: int) -> int:
    paths = generate_toy_data(out, images, seed)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "selftest":
        return cmd_selftest(args.pairs, args.seed, args.inject_fault)
    if args.command == "gen-toy-data":
        return cmd_gen_toy_data(args.out, args.images, args.seed)
    config = config_from_args(args)
    if args.echo_config:
        print(render_run_config(config), end="")
        return 0
    if args.command == "run":
        return cmd_run(config)
    if args.command == "profile":
        return cmd_profile(config)
    return cmd_sweep(config, args.parameter, parse_values(args.values))


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors are validation errors
        return 1 if e.code else 0
    level = "ERROR" if args.quiet else {0: None, 1: "INFO"}.get(args.verbose, "DEBUG")
    configure_logging(level)
    try:
        return dispatch(args)
    except SelftestError as e:
        print(f"error: {e}", file=sys.stderr)
        for failure in e.failures:
            print(f"  - {failure}", file=sys.stderr)
        return e.exit_code
    except CustomException as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {SimulationError('unexpected failure', e)}", file=sys.stderr)
        return SimulationError.exit_code
