"""Command line front-end.

Exit codes: 0 every step passed, 1 a step failed, 2 the scenario did not
parse, 3 the model could not be built.
"""
import argparse
import logging
import os
import sys

from . import fibred_hodge
from .scenario import STEPS, ScenarioParseError, load_scenario, run_pipeline

log = logging.getLogger("weinfib")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file (key = value)")
    common.add_argument("--out", default="weinfib-out", help="output directory for reports and tables")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: $WEINFIB_THREADS or 1)")
    common.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    common.add_argument("--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="weinfib", description="Fibred symplectic geometry checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the scenario pipeline")
    for step in STEPS:
        sub.add_parser(step, parents=[common], help=f"run only the {step} step")
    return ap


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("WEINFIB_THREADS")
    try:
        return int(env) if env else 1
    except ValueError:
        log.warning("ignoring WEINFIB_THREADS=%r", env)
        return 1


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.seed is not None and args.seed < 0:
        log.error("--seed must be non-negative")
        return 2
    fibred_hodge.set_threads(_threads(args.threads))
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioParseError as exc:
        log.error("%s", exc)
        return 2
    steps = None if args.command == "run" else [args.command]
    code, report = run_pipeline(scenario, args.out, steps, args.seed)
    if report.get("failed_steps"):
        print(f"failed steps: {', '.join(report['failed_steps'])}", file=sys.stderr)
    for rep in report.get("steps", []):
        print(f"{rep['step']:<20} {'pass' if rep['passed'] else 'FAIL'}  {rep['wall_time_ms']:.0f} ms")
    return code


if __name__ == "__main__":
    sys.exit(main())
