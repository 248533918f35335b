"""Suite scoring: per-action, per-scenario and suite-level success fractions.

All scores are exact rationals; decimal rendering is the only lossy step.
Two suite totals are reported: the exact mean of the scenario scores, and a
"rounded basis" mean computed from scenario scores rounded up at two
decimals, which is how the reference evaluation's printed totals turn out
to have been produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .properties import ActionRecord
from .simworld import DESYNCED

RUN_PASSED = "passed"
RUN_FAILED = "failed"
RUN_BROKEN = "broken"

STABLE = "stable"
UNSTABLE = "unstable"
UNKNOWN = "unknown"

DURATION_COV_LIMIT = 0.5


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """One executed (or replayed) scenario run."""

    test: str
    run_index: int
    seed: int
    scenario_digest: str
    actions: tuple[ActionRecord, ...]
    status: str
    wall_durations: tuple[float, ...]

    def sim_duration(self) -> float:
        return sum(a.outcome.duration for a in self.actions)

    def wall_duration(self) -> float:
        return sum(self.wall_durations)


def run_status(actions: tuple[ActionRecord, ...]) -> str:
    if any(a.outcome.status == DESYNCED for a in actions):
        return RUN_BROKEN
    if all(a.all_passed for a in actions):
        return RUN_PASSED
    return RUN_FAILED


def make_run_record(
    test: str,
    run_index: int,
    seed: int,
    scenario_digest: str,
    actions: tuple[ActionRecord, ...],
    wall_durations: tuple[float, ...],
) -> RunRecord:
    return RunRecord(
        test, run_index, seed, scenario_digest, actions, run_status(actions), wall_durations
    )


def action_score(record: ActionRecord) -> Fraction:
    """Fraction of the action's properties that passed."""
    n = len(record.results)
    if n == 0:
        raise ScoringError(f"action {record.action!r} has no property results")
    return Fraction(sum(record.indicators), n)


def scenario_score(records: list[ActionRecord] | tuple[ActionRecord, ...]) -> Fraction:
    """Unweighted mean of the action scores of one run."""
    if not records:
        raise ScoringError("scenario has no action records")
    return sum((action_score(r) for r in records), Fraction(0)) / len(records)


def round_half_up(fr: Fraction, digits: int = 2) -> Fraction:
    scale = 10**digits
    scaled = fr * scale
    whole = scaled.numerator // scaled.denominator
    if scaled - whole >= Fraction(1, 2):
        whole += 1
    return Fraction(whole, scale)


def round_ceiling(fr: Fraction, digits: int = 2) -> Fraction:
    scale = 10**digits
    scaled = fr * scale
    return Fraction(-((-scaled.numerator) // scaled.denominator), scale)


def render_score(fr: Fraction, digits: int = 2) -> str:
    """Half-up fixed-point rendering, e.g. Fraction(2,3) -> \"0.67\"."""
    scale = 10**digits
    n = round_half_up(fr, digits) * scale
    sign = "-" if n < 0 else ""
    n = abs(int(n))
    return f"{sign}{n // scale}.{n % scale:0{digits}d}"


@dataclass(frozen=True)
class SuiteScore:
    m: int
    run_scores: tuple[Fraction, ...]
    action_scores: tuple[tuple[Fraction, ...], ...]
    suite_exact: Fraction
    suite_rounded_basis: Fraction
    stability: dict[str, str]


def classify_stability(runs: list[RunRecord]) -> str:
    """Unstable when outcomes differ across runs or durations swing wildly."""
    if len(runs) < 2:
        return UNKNOWN
    if len({r.status for r in runs}) > 1:
        return UNSTABLE
    durations = [r.wall_duration() for r in runs]
    mean = sum(durations) / len(durations)
    if mean <= 0.0:
        return STABLE
    variance = sum((d - mean) ** 2 for d in durations) / len(durations)
    if math.sqrt(variance) / mean > DURATION_COV_LIMIT:
        return UNSTABLE
    return STABLE


def suite_score(runs: list[RunRecord]) -> SuiteScore:
    """Aggregate all runs of a suite into one score set, exactly."""
    if not runs:
        raise ScoringError("suite has no runs")
    per_run_actions = tuple(
        tuple(action_score(a) for a in run.actions) for run in runs
    )
    run_scores = tuple(scenario_score(run.actions) for run in runs)
    exact = sum(run_scores, Fraction(0)) / len(run_scores)
    rounded_basis = sum(
        (round_ceiling(s) for s in run_scores), Fraction(0)
    ) / len(run_scores)

    by_test: dict[str, list[RunRecord]] = {}
    for run in runs:
        by_test.setdefault(run.test, []).append(run)
    stability = {name: classify_stability(test_runs) for name, test_runs in by_test.items()}

    return SuiteScore(
        m=len(runs),
        run_scores=run_scores,
        action_scores=per_run_actions,
        suite_exact=exact,
        suite_rounded_basis=rounded_basis,
        stability=stability,
    )
