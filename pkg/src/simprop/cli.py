"""Command-line interface: run, score, report and validate subcommands."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from .harness import HarnessError, SuiteRunPlan, parse_script, run_suite
from .ontology import OntologyError, parse_ontology
from .reporting import (
    ReportError,
    read_run_dir,
    render_html_report,
    render_score_table_text,
)
from .properties import PropertyError
from .scenario import ConfigError, GenerationError, parse_scenario_config
from .scoring import suite_score
from .simworld import FaultProfile, WorldError

_USER_ERRORS = (
    OntologyError,
    ConfigError,
    GenerationError,
    HarnessError,
    PropertyError,
    ReportError,
    WorldError,
    OSError,
)


def _seed_from(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SIMPROP_SEED")
    if env is not None:
        try:
            return int(env, 0)
        except ValueError:
            raise HarnessError(f"SIMPROP_SEED is not an integer: {env!r}") from None
    return 0


def _fault_profile(pairs: list[str]) -> FaultProfile:
    fields = {
        "p_desync",
        "p_collide",
        "p_slip",
        "p_block",
        "p_perception_miss",
        "sigma_pos",
    }
    values = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or key not in fields:
            raise HarnessError(
                f"bad --fault {pair!r}; expected <name>=<value> with name in {sorted(fields)}"
            )
        try:
            values[key] = float(raw)
        except ValueError:
            raise HarnessError(f"--fault {pair!r}: value is not a number") from None
    try:
        return FaultProfile(**values)
    except ValueError as exc:
        raise HarnessError(str(exc)) from exc


def _trace_to_stderr(entry: dict) -> None:
    sys.stderr.write(json.dumps(entry, sort_keys=True) + "\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _cmd_run(args: argparse.Namespace) -> int:
    ontology = parse_ontology(Path(args.ontology))
    script = parse_script(Path(args.script), ontology) if args.script else None
    config = None
    if args.config:
        config = parse_scenario_config(Path(args.config), ontology)
    elif script is None:
        raise HarnessError("--config is required unless --script is given")

    plan = SuiteRunPlan(
        ontology=ontology,
        config=config,
        master_seed=_seed_from(args),
        out_dir=Path(args.out),
        jobs=args.jobs,
        deterministic_time=args.deterministic_time,
        faults=_fault_profile(args.fault),
        script=script,
        trace=_trace_to_stderr if args.trace else None,
        config_digest=_digest(Path(args.config)) if args.config else "",
        ontology_digest=_digest(Path(args.ontology)),
    )
    records, scores, paths = run_suite(plan)
    print(render_score_table_text(records, scores), end="")
    print(f"wrote {len(paths.run_files)} run record(s) to {args.out}")
    if paths.html:
        print(f"report: {paths.html}")
    return 0 if scores.suite_exact == Fraction(1) else 1


def _cmd_score(args: argparse.Namespace) -> int:
    records = read_run_dir(Path(args.in_dir))
    scores = suite_score(records)
    print(render_score_table_text(records, scores), end="")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    records = read_run_dir(Path(args.in_dir))
    scores = suite_score(records)
    path = render_html_report(records, scores, Path(args.html))
    print(f"report: {path}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    ontology = parse_ontology(Path(args.ontology))
    parse_scenario_config(Path(args.config), ontology)
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simprop",
        description="Property-based verification of tabletop manipulation actions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="generate, execute and score a test suite")
    run.add_argument("--config", help="scenario configuration file")
    run.add_argument("--ontology", required=True, help="action ontology file")
    run.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                     help="master seed (fallback: SIMPROP_SEED, then 0)")
    run.add_argument("--jobs", type=int, default=1, help="parallel run workers")
    run.add_argument("--deterministic-time", action="store_true",
                     help="record wall durations as 0 for byte-stable output")
    run.add_argument("--script", help="scripted-outcome replay file (skips simulation)")
    run.add_argument("--fault", action="append", default=[], metavar="NAME=VALUE",
                     help="fault profile override, e.g. p_collide=0.5 (repeatable)")
    run.add_argument("--trace", action="store_true",
                     help="dump per-step execution traces to stderr")
    run.add_argument("--out", required=True, help="output directory for run records")
    run.set_defaults(fn=_cmd_run)

    score = sub.add_parser("score", help="print the score table for stored run records")
    score.add_argument("--in", dest="in_dir", required=True, help="run record directory")
    score.set_defaults(fn=_cmd_score)

    report = sub.add_parser("report", help="render the HTML report for stored run records")
    report.add_argument("--in", dest="in_dir", required=True, help="run record directory")
    report.add_argument("--html", required=True, help="output HTML file")
    report.set_defaults(fn=_cmd_report)

    validate = sub.add_parser("validate", help="check a config/ontology pair")
    validate.add_argument("--config", required=True)
    validate.add_argument("--ontology", required=True)
    validate.set_defaults(fn=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
