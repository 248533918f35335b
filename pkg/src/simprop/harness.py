"""Suite orchestration: generate, execute, evaluate, persist, score, report.

Runs are independent work items: each owns its world and its RNG stream
(derived from the master seed, the test name and the run index), so a suite
can execute on any number of workers and still produce identical output
files. A scripted replay mode substitutes a fixed indicator matrix for the
simulation so the scoring and reporting path can be exercised against known
outcomes.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .ontology import Ontology, get_success_properties
from .properties import (
    ActionRecord,
    PropertyResult,
    ToleranceSet,
    evaluate_action,
    property_registered,
)
from .reporting import (
    render_html_report,
    scenario_block,
    scenario_digest,
    write_run_record,
)
from .scenario import (
    ScenarioConfig,
    derive_stream_seed,
    generate_scenario,
)
from .scoring import RunRecord, SuiteScore, make_run_record, suite_score
from .simworld import (
    COMPLETED,
    DESYNCED,
    EXECUTABLE_ACTIONS,
    FAILED,
    ActionOutcome,
    FaultProfile,
    TraceFn,
    audit_world,
    execute_action,
    init_world,
    snapshot,
)


class HarnessError(RuntimeError):
    pass


class ScriptError(HarnessError):
    """Malformed scripted-outcome replay document."""


@dataclass(frozen=True)
class ScriptDoc:
    test: str
    actions: tuple[str, ...]
    runs: tuple[tuple[dict[str, Any], ...], ...]


@dataclass
class SuiteRunPlan:
    ontology: Ontology
    config: ScenarioConfig | None
    master_seed: int
    out_dir: Path
    jobs: int = 1
    deterministic_time: bool = False
    faults: FaultProfile = field(default_factory=FaultProfile)
    script: ScriptDoc | None = None
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)
    trace: TraceFn = None
    render_html: bool = True
    config_digest: str = ""
    ontology_digest: str = ""

    def __post_init__(self):
        if self.jobs < 1:
            raise HarnessError("parallelism degree must be >= 1")
        if self.script is None and self.config is None:
            raise HarnessError("a scenario config is required unless a script is given")


@dataclass(frozen=True)
class ReportPaths:
    run_files: tuple[Path, ...]
    html: Path | None


def execute_run(
    config: ScenarioConfig,
    ontology: Ontology,
    test_name: str,
    run_index: int,
    master_seed: int,
    faults: FaultProfile,
    tolerances: ToleranceSet,
    deterministic_time: bool = False,
    trace: TraceFn = None,
) -> tuple[RunRecord, dict[str, Any]]:
    """Generate and execute one run; returns the record and scenario block.

    A desynced action zeroes every downstream action of the task: those are
    recorded as desynced without being executed.
    """
    seed = derive_stream_seed(master_seed, test_name, run_index)
    rng = random.Random(seed)
    instance = generate_scenario(
        config, test_name, run_index, master_seed, ontology, rng=rng
    )
    world = init_world(instance, config.world_defs[instance.world], config.models)

    records: list[ActionRecord] = []
    walls: list[float] = []
    desynced = False
    for step in instance.task:
        if desynced:
            here = snapshot(world)
            records.append(
                evaluate_action(
                    step.action,
                    ontology,
                    step.params,
                    here,
                    here,
                    ActionOutcome(DESYNCED, 0.0),
                    None,
                    tolerances,
                )
            )
            walls.append(0.0)
            continue
        started = time.perf_counter()
        pre = snapshot(world)
        outcome, perception = execute_action(
            world, step.action, step.params, faults, rng, trace
        )
        if __debug__:
            audit_world(world)
        post = snapshot(world)
        records.append(
            evaluate_action(
                step.action, ontology, step.params, pre, post, outcome, perception, tolerances
            )
        )
        walls.append(0.0 if deterministic_time else time.perf_counter() - started)
        if outcome.status == DESYNCED:
            desynced = True

    block = scenario_block(instance)
    record = make_run_record(
        test_name, run_index, seed, scenario_digest(block), tuple(records), tuple(walls)
    )
    return record, block


# ---------------------------------------------------------------------------
# Scripted replay

def parse_script(document: str | Path, ontology: Ontology) -> ScriptDoc:
    """Load and validate a scripted-outcome replay document.

    Format (JSON): {"test": name, "actions": [action ids...], "runs":
    [{"actions": [{"status": "completed"|"failed"|"desynced",
    "indicators": [0|1, ...], "reason": str?}, ...]}, ...]}. Indicator counts
    must match each action's declared property count; desynced entries may
    omit them (all zero).
    """
    if isinstance(document, Path):
        try:
            text = document.read_text()
        except FileNotFoundError:
            raise ScriptError(f"script file not found: {document}") from None
    else:
        text = document
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScriptError(f"script is not valid JSON: {exc}") from exc

    if not isinstance(doc, dict) or {"test", "actions", "runs"} - set(doc):
        raise ScriptError("script needs 'test', 'actions' and 'runs' fields")
    test = doc["test"]
    actions = doc["actions"]
    if not isinstance(actions, list) or not actions:
        raise ScriptError("script 'actions' must be a non-empty list")
    n_props: list[int] = []
    for action_id in actions:
        n_props.append(len(get_success_properties(ontology, action_id)))

    runs: list[tuple[dict[str, Any], ...]] = []
    for r, run in enumerate(doc["runs"]):
        entries = run.get("actions") if isinstance(run, dict) else None
        if not isinstance(entries, list) or len(entries) != len(actions):
            raise ScriptError(f"run {r}: needs one entry per scripted action")
        checked = []
        for action_id, n, entry in zip(actions, n_props, entries):
            status = entry.get("status")
            if status not in (COMPLETED, FAILED, DESYNCED):
                raise ScriptError(f"run {r}, {action_id}: bad status {status!r}")
            indicators = entry.get("indicators")
            if status == DESYNCED:
                indicators = [0] * n
            if (
                not isinstance(indicators, list)
                or len(indicators) != n
                or any(i not in (0, 1) for i in indicators)
            ):
                raise ScriptError(
                    f"run {r}, {action_id}: needs {n} 0/1 indicators"
                )
            checked.append(
                {
                    "status": status,
                    "indicators": list(indicators),
                    "reason": entry.get("reason", ""),
                }
            )
        runs.append(tuple(checked))
    if not runs:
        raise ScriptError("script has no runs")
    return ScriptDoc(test, tuple(actions), tuple(runs))


def _scripted_record(
    script: ScriptDoc, ontology: Ontology, run_index: int, seed: int
) -> tuple[RunRecord, dict[str, Any]]:
    actions: list[ActionRecord] = []
    for action_id, entry in zip(script.actions, script.runs[run_index]):
        status = entry["status"]
        reason = entry["reason"] or ("scripted failure" if status == FAILED else "")
        outcome = ActionOutcome(status, 0.0, reason)
        results = []
        for pp, indicator in zip(
            get_success_properties(ontology, action_id), entry["indicators"]
        ):
            if status == DESYNCED:
                results.append(PropertyResult(pp.id, False, "desynced"))
            elif indicator:
                results.append(PropertyResult(pp.id, True, "scripted"))
            else:
                results.append(
                    PropertyResult(pp.id, False, reason or "scripted indicator 0")
                )
        actions.append(ActionRecord(action_id, outcome, tuple(results), {}))
    block = scenario_block(None)
    record = make_run_record(
        script.test,
        run_index,
        seed,
        scenario_digest(block),
        tuple(actions),
        tuple(0.0 for _ in script.actions),
    )
    return record, block


# ---------------------------------------------------------------------------
# Suite driver

def _check_executable(config: ScenarioConfig, ontology: Ontology) -> None:
    """Simulated runs need an executor and a check for everything configured."""
    for test in config.tests:
        for action_id in test.actions:
            if action_id not in EXECUTABLE_ACTIONS:
                raise HarnessError(
                    f"test {test.name!r}: no executor for action {action_id!r}"
                )
            for pp in get_success_properties(ontology, action_id):
                if not property_registered(pp.id):
                    raise HarnessError(
                        f"no implementation registered for property {pp.id!r}"
                    )


def run_suite(plan: SuiteRunPlan) -> tuple[list[RunRecord], SuiteScore, ReportPaths]:
    """Execute (or replay) every configured run, persist and score it all."""
    jobs: list[tuple[str, int]] = []
    if plan.script is not None:
        jobs = [(plan.script.test, i) for i in range(len(plan.script.runs))]
    else:
        assert plan.config is not None
        _check_executable(plan.config, plan.ontology)
        for test in plan.config.tests:
            jobs.extend((test.name, i) for i in range(plan.config.test_count))

    def work(job: tuple[str, int]) -> tuple[RunRecord, Path]:
        test_name, run_index = job
        if plan.script is not None:
            seed = derive_stream_seed(plan.master_seed, test_name, run_index)
            record, block = _scripted_record(plan.script, plan.ontology, run_index, seed)
        else:
            record, block = execute_run(
                plan.config,
                plan.ontology,
                test_name,
                run_index,
                plan.master_seed,
                plan.faults,
                plan.tolerances,
                plan.deterministic_time,
                plan.trace,
            )
        path = write_run_record(record, plan.out_dir, block)
        return record, path

    if plan.jobs == 1:
        outputs = [work(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            outputs = list(pool.map(work, jobs))

    records = [record for record, _ in outputs]
    paths = tuple(path for _, path in outputs)
    scores = suite_score(records)

    html_path = None
    if plan.render_html:
        metadata = {
            "master seed": plan.master_seed,
            "runs": len(records),
            "mode": "scripted replay" if plan.script else "simulation",
        }
        if plan.config_digest:
            metadata["config digest"] = plan.config_digest
        if plan.ontology_digest:
            metadata["ontology digest"] = plan.ontology_digest
        if not plan.deterministic_time:
            metadata["generated"] = time.strftime("%Y-%m-%d %H:%M:%S")
        html_path = render_html_report(
            records, scores, plan.out_dir / "report.html", metadata=metadata
        )
    return records, scores, ReportPaths(paths, html_path)
