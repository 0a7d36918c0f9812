"""Command-line entry point of the partial hyperbolicity lab.

    python main.py <pipeline> [--map NAME] [--config FILE] [--seed N]
                   [--samples N] [--out DIR] [--format json|csv] [--verbose]
    python main.py runs [--out DIR]

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
error, 3 numerical failure.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from models.config import OUTPUT_DIR_ENV, PIPELINES, load_config
from models.errors import LabError
from models.responses import ErrorCode, error_response, success_response
from services.experiments import ExperimentService

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class ExperimentIdFormatter(logging.Formatter):
    """Formatter that fills in experiment_id for records logged without one."""
    def format(self, record):
        if not hasattr(record, "experiment_id"):
            record.experiment_id = "-"
        return super().format(record)


def configure_logging(verbose: bool = False) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(ExperimentIdFormatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - [experiment_id=%(experiment_id)s] - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    ))
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, handlers=[handler], force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Numerical lab for partially hyperbolic diffeomorphisms of 3-manifolds.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    for name in PIPELINES:
        sub = verbs.add_parser(name, help=f"run the {name} pipeline")
        sub.add_argument("--map", help="built-in map name (cat3, identity, skew, L, H, F)")
        sub.add_argument("--config", help="experiment config file")
        sub.add_argument("--seed", type=int, help="seed of the keyed random streams")
        sub.add_argument("--samples", type=int, help="random sample points per check")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--format", choices=("json", "csv"), help="report format")
        sub.add_argument("--verbose", action="store_true", help="debug logging")
    runs = verbs.add_parser("runs", help="list stored runs")
    runs.add_argument("--out", help="output directory")
    runs.add_argument("--limit", type=int, default=20)
    runs.add_argument("--verbose", action="store_true")
    return parser


def _emit(response) -> None:
    print(response.model_dump_json(indent=2))


def list_runs(args) -> int:
    output_dir = args.out or os.getenv(OUTPUT_DIR_ENV) or "results"
    runs = ExperimentService.list_runs(output_dir, args.limit)
    _emit(success_response(data=[r.model_dump(mode="json") for r in runs], message=f"{len(runs)} runs"))
    return EXIT_OK


def run_pipeline(args) -> int:
    overrides = {
        "experiment": {
            "pipeline": args.verb,
            "seed": args.seed,
            "samples": args.samples,
            "output_dir": args.out,
            "format": args.format,
        },
        "map": {"name": args.map},
    }
    config = load_config(args.config, overrides)
    outcome = ExperimentService.run_experiment(config)
    report = outcome.report
    data = {
        "experiment_id": report.experiment_id,
        "report": str(outcome.path),
        "passed": report.passed,
        "checks": len(report.checks),
        "failed": [c.name for c in report.failed_checks()],
    }
    if report.passed:
        _emit(success_response(data=data, message="all checks passed"))
    else:
        _emit(error_response(ErrorCode.LAB_CHECK_FAILED, f"{len(data['failed'])} checks failed", details=data))
    return outcome.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return list_runs(args) if args.verb == "runs" else run_pipeline(args)
    except LabError as exc:
        logger.error(f"{exc.code.value}: {exc.message}")
        _emit(error_response(exc.code, exc.message, details=exc.details or None, field=exc.field))
        return EXIT_USAGE if exc.exit_code == EXIT_USAGE else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
