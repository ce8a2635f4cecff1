"""
Command line interface

    iotstage validate SCENARIO
    iotstage run SCENARIO [--seed N] [--mode M] [--rtf X] [--repeat N]
                          [--trace PATH] [--report PATH] [--metrics PATH]
    iotstage calibrate --target HOST:PORT --probes K [--spacing-ms M]
                       [--timeout-ms T] [--merge-into SCENARIO --channel SEL]
    iotstage version

Exit codes: 0 success, 2 invalid scenario, 3 runtime failure, 64 usage.
stdout carries the summary only; diagnostics go to stderr.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from iotstage import __version__
from iotstage.config import get_config, log_level_from_env
from iotstage.models.scenario import RunMode
from iotstage.services.calibration import calibrate
from iotstage.services.coordinator import Coordinator
from iotstage.services.report import emit_report
from iotstage.services.scenario_loader import (
    apply_overrides,
    dump_scenario,
    load_scenario,
    merge_calibration,
)
from iotstage.services.scenario_validator import validate
from iotstage.utils.exceptions import (
    IoTStageError,
    RunAbortedError,
    ScenarioValidationError,
    UsageError,
)
from iotstage.utils.metrics import write_metrics
from iotstage.utils.structured_logging import setup_json_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(message, payload={"usage": self.format_usage()})


def build_parser(settings=None) -> argparse.ArgumentParser:
    settings = settings or get_config()
    parser = _Parser(prog="iotstage", description="Staging environments for IoT applications")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    validate_cmd = commands.add_parser("validate", help="check a scenario file")
    validate_cmd.add_argument("scenario")
    validate_cmd.set_defaults(handler=cmd_validate)

    run_cmd = commands.add_parser("run", help="execute a scenario")
    run_cmd.add_argument("scenario")
    run_cmd.add_argument("--seed", type=_seed)
    run_cmd.add_argument("--mode", choices=[m.value for m in RunMode])
    run_cmd.add_argument("--rtf", type=float)
    run_cmd.add_argument("--repeat", type=_positive, default=1)
    run_cmd.add_argument("--trace", help="JSON Lines trace; -NNN suffix per run when repeating")
    run_cmd.add_argument("--report", help="JSON report path")
    run_cmd.add_argument("--metrics", help="Prometheus textfile path", default=settings.METRICS_PATH)
    run_cmd.set_defaults(handler=cmd_run)

    cal_cmd = commands.add_parser("calibrate", help="estimate channel parameters")
    cal_cmd.add_argument("--target", required=True, help="UDP echo endpoint host:port")
    cal_cmd.add_argument("--probes", type=_positive, required=True)
    cal_cmd.add_argument("--spacing-ms", type=_positive, default=settings.CALIBRATION_SPACING_MS)
    cal_cmd.add_argument("--timeout-ms", type=_positive, default=settings.CALIBRATION_TIMEOUT_MS)
    cal_cmd.add_argument("--merge-into", help="scenario file to update in place")
    cal_cmd.add_argument("--channel", default="wireless", help="wireless or link:<a>:<b>")
    cal_cmd.set_defaults(handler=cmd_calibrate)

    version_cmd = commands.add_parser("version", help="print the version")
    version_cmd.set_defaults(handler=cmd_version)
    return parser


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario, args.settings.DEFAULT_STEP_MS)
    violations = validate(scenario)
    for violation in violations:
        print(violation)
    if violations:
        return ScenarioValidationError.exit_code
    print(f"{scenario.name}: valid")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario, args.settings.DEFAULT_STEP_MS)
    scenario, overrides = apply_overrides(scenario, args.seed, args.mode, args.rtf)
    if args.repeat > 1:
        overrides["repeat"] = args.repeat

    coordinator = Coordinator()
    try:
        report = coordinator.run_repeated(scenario, args.repeat, args.trace, overrides)
    except RunAbortedError as e:
        if args.report and e.partial is not None and e.partial.runs:
            emit_report(e.partial, args.report)
        raise
    finally:
        if args.metrics:
            write_metrics(args.metrics)

    if args.report:
        emit_report(report, args.report)
    lines = report.summary_lines() or [f"{scenario.name}: no probe samples"]
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    estimate = calibrate(args.target, args.probes, args.spacing_ms, args.timeout_ms)
    print(json.dumps(estimate.to_dict(), sort_keys=True))
    if args.merge_into:
        scenario = load_scenario(args.merge_into, args.settings.DEFAULT_STEP_MS)
        dump_scenario(merge_calibration(scenario, estimate, args.channel), args.merge_into)
        logger.info("Calibration merged", extra={"path": args.merge_into, "channel": args.channel})
    return EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line; returns the process exit code."""
    settings = get_config()()
    if os.getenv("IOTSTAGE_LOG"):
        settings.LOG_LEVEL = log_level_from_env()
    setup_json_logging(settings)

    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
        args.settings = settings
        return args.handler(args)
    except ScenarioValidationError as e:
        for violation in e.violations:
            print(violation, file=sys.stderr)
        return e.exit_code
    except UsageError as e:
        sys.stderr.write(parser.format_usage())
        print(f"iotstage: error: {e.message}", file=sys.stderr)
        return e.exit_code
    except IoTStageError as e:
        logger.error(e.message, extra={"code": e.code})
        return e.exit_code
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return EXIT_RUNTIME
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_RUNTIME
