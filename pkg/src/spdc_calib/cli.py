"""Command-line interface: ``spdc-calib <subcommand> --config SCENARIO``."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from spdc_calib.config import load_config
from spdc_calib.core.errors import CalibrationError, ValidationFailedError
from spdc_calib.export import read_clicks_csv
from spdc_calib.reports import TrialReport
from spdc_calib.runner import REPORT_FILE, TRIALS_FILE, run_scenario, run_trials, write_report
from spdc_calib.scenario import Scenario, list_presets, load_scenario, validate_topology

logger = logging.getLogger("spdc_calib")

# Subcommand -> method forced on the scenario (None keeps the configured method)
RUN_COMMANDS: dict[str, str | None] = {
    "simulate": None,
    "calibrate-coincidence": "coincidence",
    "calibrate-conditional": "conditional_rotation",
    "calibrate-analog": "analog",
    "compare": "compare",
}


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        required=True,
        help="Scenario JSON file or preset name (see 'spdc-calib presets')",
    )
    common.add_argument("--seed", type=int, help="Override the scenario seed")
    common.add_argument("--out", type=Path, help="Output directory (default $SPDC_CALIB_OUT_DIR)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdc-calib",
        description="Simulate twin-photon detector calibrations and run the estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    for name, method in RUN_COMMANDS.items():
        help_text = f"Run the {method} method" if method else "Run the scenario's own method"
        run = sub.add_parser(name, parents=[common], help=help_text)
        run.add_argument(
            "--clicks",
            type=Path,
            help="Calibrate recorded click streams (CSV) instead of simulating (coincidence)",
        )
        run.add_argument(
            "--save-clicks",
            action="store_true",
            help="Also write the click streams to clicks.csv (coincidence)",
        )

    trials = sub.add_parser("trials", parents=[common], help="Repeat a scenario with derived seeds")
    trials.add_argument("-n", "--n-trials", type=int, default=50, help="Number of trials")
    trials.add_argument("--jobs", type=int, help="Parallel workers (default $SPDC_CALIB_JOBS)")

    sub.add_parser("presets", help="List the shipped scenario presets")
    return parser


def _prepare(args: argparse.Namespace) -> Scenario:
    scenario = load_scenario(args.config)
    method = RUN_COMMANDS.get(args.command)
    if method is not None and method != scenario.method:
        scenario = validate_topology(scenario.model_copy(update={"method": method}))
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def _log_estimates(report: TrialReport) -> None:
    for method, estimate in report.estimates.items():
        logger.info("%s: %.5f ± %.5f", method, estimate.value, estimate.std_uncertainty)
    if report.comparison is not None:
        logger.info(
            "difference: %.5f ± %.5f",
            report.comparison.difference,
            report.comparison.combined_std,
        )


def _execute(args: argparse.Namespace) -> None:
    settings = load_config()
    logging.getLogger().setLevel(logging.WARNING if getattr(args, "quiet", False) else settings.log_level_value)

    if args.command == "presets":
        for name in list_presets():
            logger.info(name)
        return

    scenario = _prepare(args)
    out_dir: Path = args.out or settings.out_dir

    if args.command == "trials":
        aggregate = run_trials(scenario, args.n_trials, n_jobs=args.jobs or settings.jobs)
        write_report(aggregate, out_dir / TRIALS_FILE)
        return

    recorded_clicks = read_clicks_csv(args.clicks) if args.clicks else None
    report = run_scenario(
        scenario, out_dir=out_dir, recorded_clicks=recorded_clicks, save_clicks=args.save_clicks
    )
    write_report(report, out_dir / REPORT_FILE)
    _log_estimates(report)
    if report.validation is not None and not report.validation.passed:
        raise ValidationFailedError(
            "Estimate outside the validation tolerance",
            details={"deviations": report.validation.deviations},
        )


def main(argv: list[str] | None = None) -> int:
    """CLI entry point; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        _execute(args)
    except CalibrationError as e:
        logger.error(json.dumps(e.to_dict(), default=str))
        return e.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
