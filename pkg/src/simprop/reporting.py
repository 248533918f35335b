"""Per-run JSON records and the aggregate HTML report.

One JSON file is written per run (schema version 1); the HTML report is a
single self-contained file with an overview, run history, retry details,
the score table and a per-property pass/fail/de-synced breakdown per test.
The renderer never recomputes scores: it formats what the scoring module
produced.
"""

from __future__ import annotations

import hashlib
import html
import json
from fractions import Fraction
from pathlib import Path
from typing import Any

from .geometry import Pose
from .properties import ActionRecord, PropertyResult
from .scenario import ScenarioInstance
from .scoring import (
    RUN_BROKEN,
    RUN_FAILED,
    RUN_PASSED,
    RunRecord,
    SuiteScore,
    action_score,
    render_score,
    scenario_score,
)
from .simworld import ActionOutcome, FAILED

SCHEMA_VERSION = 1


class ReportError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# JSON encoding

def _encode_pose(pose: Pose) -> list[float]:
    return [pose.x, pose.y, pose.z, pose.yaw]


def _encode_param(value: Any) -> Any:
    if isinstance(value, Pose):
        return {"pose": _encode_pose(value)}
    return value


def _decode_param(value: Any) -> Any:
    if isinstance(value, dict) and set(value) == {"pose"}:
        return Pose(*value["pose"])
    return value


def scenario_block(instance: ScenarioInstance | None) -> dict[str, Any]:
    """The world-properties-and-parameters section of a run record."""
    if instance is None:
        return {"world": "scripted", "spawned": [], "obstacles": [], "task": []}
    return {
        "world": instance.world,
        "spawned": [
            {"model": s.model, "pose": _encode_pose(s.pose), "surface": s.surface}
            for s in instance.spawned_objects
        ],
        "obstacles": [
            {"model": s.model, "pose": _encode_pose(s.pose)}
            for s in instance.spawned_obstacles
        ],
        "task": [
            {
                "action": step.action,
                "params": {k: _encode_param(v) for k, v in step.params.items()},
            }
            for step in instance.task
        ],
    }


def scenario_digest(block: dict[str, Any]) -> str:
    canonical = json.dumps(block, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def run_record_document(record: RunRecord, scenario: dict[str, Any]) -> dict[str, Any]:
    actions = []
    for action, wall in zip(record.actions, record.wall_durations):
        entry: dict[str, Any] = {
            "action": action.action,
            "status": action.outcome.status,
            "duration_sim_s": action.outcome.duration,
            "duration_wall_s": wall,
            "properties": [
                {"id": r.property_id, "passed": r.passed, "detail": r.detail}
                for r in action.results
            ],
        }
        if action.outcome.reason:
            entry["reason"] = action.outcome.reason
        actions.append(entry)
    return {
        "schema": SCHEMA_VERSION,
        "test": record.test,
        "run_index": record.run_index,
        "seed": record.seed,
        "scenario": scenario,
        "actions": actions,
        "status": record.status,
        "scores": {
            "actions": [str(action_score(a)) for a in record.actions],
            "scenario": str(scenario_score(record.actions)),
        },
    }


def write_run_record(
    record: RunRecord,
    out_dir: Path,
    scenario: dict[str, Any] | None = None,
) -> Path:
    """Write one run's JSON file; content is byte-stable for equal inputs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = run_record_document(record, scenario if scenario is not None else scenario_block(None))
    path = out_dir / f"{record.test}_run{record.run_index:03d}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_run_record(path: Path) -> RunRecord:
    doc = json.loads(path.read_text())
    if doc.get("schema") != SCHEMA_VERSION:
        raise ReportError(f"{path}: unsupported schema {doc.get('schema')!r}")
    task = doc["scenario"].get("task", [])
    actions = []
    walls = []
    for i, entry in enumerate(doc["actions"]):
        params = {}
        if i < len(task):
            params = {k: _decode_param(v) for k, v in task[i].get("params", {}).items()}
        outcome = ActionOutcome(
            entry["status"], entry["duration_sim_s"], entry.get("reason", "")
        )
        results = tuple(
            PropertyResult(p["id"], p["passed"], p["detail"])
            for p in entry["properties"]
        )
        actions.append(ActionRecord(entry["action"], outcome, results, params))
        walls.append(entry["duration_wall_s"])
    return RunRecord(
        test=doc["test"],
        run_index=doc["run_index"],
        seed=doc["seed"],
        scenario_digest=scenario_digest(doc["scenario"]),
        actions=tuple(actions),
        status=doc["status"],
        wall_durations=tuple(walls),
    )


def read_run_dir(path: Path) -> list[RunRecord]:
    files = sorted(path.glob("*_run*.json"))
    if not files:
        raise ReportError(f"no run records found under {path}")
    records = [read_run_record(f) for f in files]
    records.sort(key=lambda r: (r.test, r.run_index))
    return records


# ---------------------------------------------------------------------------
# Score table (shared by the CLI and the HTML report)

def score_table_rows(
    records: list[RunRecord], scores: SuiteScore
) -> dict[str, list[tuple[int, list[Fraction], Fraction]]]:
    """Per test: (run index, per-action scores, scenario score) rows."""
    by_test: dict[str, list[tuple[int, list[Fraction], Fraction]]] = {}
    for i, record in enumerate(records):
        by_test.setdefault(record.test, []).append(
            (record.run_index, list(scores.action_scores[i]), scores.run_scores[i])
        )
    return by_test


def render_score_table_text(records: list[RunRecord], scores: SuiteScore) -> str:
    lines: list[str] = []
    for test, rows in score_table_rows(records, scores).items():
        n_actions = max(len(r[1]) for r in rows)
        lines.append(f"Test: {test}")
        header = ["Run"] + [f"A{i + 1}" for i in range(n_actions)] + ["S"]
        lines.append("  ".join(f"{h:>6}" for h in header))
        for run_index, action_scores, s in rows:
            cells = [f"{run_index + 1:>6}"]
            cells += [f"{render_score(a):>6}" for a in action_scores]
            cells += [""] * (n_actions - len(action_scores))
            cells.append(f"{render_score(s):>6}")
            lines.append("  ".join(cells))
        lines.append("")
    lines.append(f"T (exact)          {render_score(scores.suite_exact)}"
                 f"  [{float(scores.suite_exact):.4f}]")
    lines.append(f"T (rounded basis)  {render_score(scores.suite_rounded_basis)}"
                 f"  [{float(scores.suite_rounded_basis):.4f}]")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# HTML report

_PAGE_STYLE = """
body { font-family: sans-serif; margin: 2em; color: #222; }
h1 { font-size: 1.4em; } h2 { font-size: 1.15em; margin-top: 1.6em; }
table { border-collapse: collapse; margin: 0.6em 0; }
th, td { border: 1px solid #bbb; padding: 0.25em 0.7em; text-align: right; }
th { background: #eee; }
.badge { padding: 0.1em 0.5em; border-radius: 0.6em; font-size: 0.85em; }
.stable { background: #cfe8cf; } .unstable { background: #f6d6a0; }
.unknown { background: #ddd; }
.chip { display: inline-block; width: 1.2em; text-align: center; margin: 1px;
        border-radius: 3px; font-size: 0.8em; }
.passed { background: #b6e2b6; } .failed { background: #eda9a9; }
.broken { background: #ccb6e0; }
.bar { display: inline-block; height: 0.8em; }
.bar.pass { background: #5aae5a; } .bar.fail { background: #d55c5c; }
.bar.desync { background: #9673c4; }
.detail { color: #555; font-size: 0.9em; }
.meta { color: #666; font-size: 0.85em; }
"""

_STATUS_CHIP = {RUN_PASSED: "P", RUN_FAILED: "F", RUN_BROKEN: "B"}


def _property_counts(runs: list[RunRecord]) -> dict[str, dict[str, int]]:
    """Per property id: pass / fail / de-synced counts over all runs."""
    counts: dict[str, dict[str, int]] = {}
    for run in runs:
        for action in run.actions:
            for result in action.results:
                slot = counts.setdefault(
                    result.property_id, {"pass": 0, "fail": 0, "desync": 0}
                )
                if result.passed:
                    slot["pass"] += 1
                elif result.detail == "desynced":
                    slot["desync"] += 1
                else:
                    slot["fail"] += 1
    return counts


def _render_bars(counts: dict[str, dict[str, int]]) -> list[str]:
    out = ["<table><tr><th>Property</th><th style='text-align:left'>pass / fail / de-synced</th></tr>"]
    for pid, slot in counts.items():
        total = max(1, slot["pass"] + slot["fail"] + slot["desync"])
        bars = "".join(
            f"<span class='bar {cls}' style='width:{120 * slot[key] // total}px'></span>"
            for key, cls in (("pass", "pass"), ("fail", "fail"), ("desync", "desync"))
        )
        out.append(
            f"<tr><td>{html.escape(pid)}</td>"
            f"<td style='text-align:left'>{bars} "
            f"<span class='meta'>{slot['pass']} / {slot['fail']} / {slot['desync']}</span></td></tr>"
        )
    out.append("</table>")
    return out


def render_html_report(
    records: list[RunRecord],
    scores: SuiteScore,
    out_path: Path,
    metadata: dict[str, Any] | None = None,
) -> Path:
    """Render the aggregate report for all runs into one HTML file."""
    if not records:
        raise ReportError("cannot render a report without run records")

    by_test: dict[str, list[RunRecord]] = {}
    for record in records:
        by_test.setdefault(record.test, []).append(record)
    table_rows = score_table_rows(records, scores)

    parts = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        "<title>Action verification report</title>",
        f"<style>{_PAGE_STYLE}</style></head><body>",
        "<h1>Action verification report</h1>",
    ]
    if metadata:
        meta = " &middot; ".join(
            f"{html.escape(str(k))}: {html.escape(str(v))}" for k, v in metadata.items()
        )
        parts.append(f"<p class='meta'>{meta}</p>")

    for test, runs in by_test.items():
        passed = sum(1 for r in runs if r.status == RUN_PASSED)
        mean_sim = sum(r.sim_duration() for r in runs) / len(runs)
        mean_wall = sum(r.wall_duration() for r in runs) / len(runs)
        stability = scores.stability.get(test, "unknown")
        parts.append(f"<h2>Test: {html.escape(test)}</h2>")
        parts.append(
            "<h3>Overview</h3><p>"
            f"Runs: {len(runs)} &middot; passed: {passed} &middot; "
            f"success rate: {100.0 * passed / len(runs):.0f}% &middot; "
            f"mean duration: {mean_sim:.1f} s simulated, {mean_wall:.2f} s wall &middot; "
            f"stability: <span class='badge {stability}'>{stability}</span></p>"
        )

        chips = "".join(
            f"<span class='chip {r.status}' title='run {r.run_index}'>"
            f"{_STATUS_CHIP.get(r.status, '?')}</span>"
            for r in runs
        )
        parts.append(f"<h3>History</h3><p>{chips}</p>")

        parts.append("<h3>Retries</h3>")
        retries = [r for r in runs if r.status != RUN_PASSED]
        if not retries:
            parts.append("<p class='meta'>no failed or broken runs</p>")
        else:
            parts.append("<ul>")
            for run in retries:
                failures = [
                    (a.action, res)
                    for a in run.actions
                    for res in a.results
                    if not res.passed
                ]
                reasons = "; ".join(
                    f"{html.escape(action)}/{html.escape(res.property_id)}: "
                    f"{html.escape(res.detail)}"
                    for action, res in failures[:4]
                )
                reason_line = ""
                for a in run.actions:
                    if a.outcome.status == FAILED and a.outcome.reason:
                        reason_line = f" [{html.escape(a.outcome.reason)}]"
                        break
                parts.append(
                    f"<li>run {run.run_index}: <b class='{run.status}'>{run.status}</b>"
                    f"{reason_line} <span class='detail'>{reasons}</span></li>"
                )
            parts.append("</ul>")

        rows = table_rows[test]
        n_actions = max(len(r[1]) for r in rows)
        parts.append("<h3>Scores</h3><table><tr><th>Run</th>")
        parts.extend(f"<th>A{i + 1}</th>" for i in range(n_actions))
        parts.append("<th>S</th></tr>")
        for run_index, action_scores, s in rows:
            parts.append(f"<tr><td>{run_index + 1}</td>")
            parts.extend(f"<td>{render_score(a)}</td>" for a in action_scores)
            parts.extend("<td></td>" for _ in range(n_actions - len(action_scores)))
            parts.append(f"<td>{render_score(s)}</td></tr>")
        parts.append("</table>")

        parts.append("<h3>Properties</h3>")
        parts.extend(_render_bars(_property_counts(runs)))

    parts.append(
        f"<h2>Suite</h2><p>T (exact) = {render_score(scores.suite_exact)} "
        f"<span class='meta'>[{float(scores.suite_exact):.4f}]</span> &middot; "
        f"T (rounded basis) = {render_score(scores.suite_rounded_basis)} "
        f"<span class='meta'>[{float(scores.suite_rounded_basis):.4f}]</span> "
        f"over {scores.m} runs</p>"
    )
    parts.append("</body></html>")

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("".join(parts))
    return out_path
