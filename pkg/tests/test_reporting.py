from __future__ import annotations

import json
from pathlib import Path

import pytest

from simprop.harness import SuiteRunPlan, execute_run, parse_script, run_suite
from simprop.properties import ToleranceSet
from simprop.reporting import (
    ReportError,
    read_run_dir,
    read_run_record,
    render_html_report,
    render_score_table_text,
    scenario_digest,
    write_run_record,
)
from simprop.scoring import suite_score
from simprop.simworld import FaultProfile

DATA = Path(__file__).parent / "data"
NO_FAULTS = FaultProfile(sigma_pos=0.0)
TOL = ToleranceSet()


def one_run(config, ontology, run_index=0, faults=NO_FAULTS, seed=42):
    return execute_run(
        config, ontology, config.tests[0].name, run_index, seed, faults, TOL,
        deterministic_time=True,
    )


class TestRunRecordJson:
    def test_round_trip(self, make_config, ontology, tmp_path):
        config = make_config()
        record, block = one_run(config, ontology)
        path = write_run_record(record, tmp_path, block)
        assert read_run_record(path) == record

    def test_round_trip_with_faults(self, make_config, ontology, tmp_path):
        config = make_config()
        record, block = one_run(
            config, ontology, faults=FaultProfile(p_collide=1.0, sigma_pos=0.0)
        )
        path = write_run_record(record, tmp_path, block)
        assert read_run_record(path) == record

    def test_byte_identical_for_same_seed(self, make_config, ontology, tmp_path):
        config = make_config()
        r1, b1 = one_run(config, ontology)
        r2, b2 = one_run(config, ontology)
        p1 = write_run_record(r1, tmp_path / "a", b1)
        p2 = write_run_record(r2, tmp_path / "b", b2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_fault_free_pick_file_contents(self, make_config, ontology, tmp_path):
        config = make_config(tests=[["pick", ["move_to", "perceive_plane", "pick_object"]]])
        record, block = one_run(config, ontology)
        doc = json.loads(write_run_record(record, tmp_path, block).read_text())
        assert doc["schema"] == 1
        assert doc["status"] == "passed"
        pick = doc["actions"][2]
        assert pick["action"] == "pick_object"
        assert all(p["passed"] for p in pick["properties"])
        assert doc["scores"]["actions"][2] == "1"

    def test_desynced_run_file(self, make_config, ontology, tmp_path):
        config = make_config()
        record, block = one_run(config, ontology, faults=FaultProfile(p_desync=1.0))
        doc = json.loads(write_run_record(record, tmp_path, block).read_text())
        assert doc["status"] == "broken"
        for action in doc["actions"]:
            assert all(not p["passed"] for p in action["properties"])
            assert all(p["detail"] == "desynced" for p in action["properties"])

    def test_digest_tracks_scenario_content(self, make_config, ontology):
        config = make_config()
        _, b1 = one_run(config, ontology, run_index=0)
        _, b2 = one_run(config, ontology, run_index=1)
        assert scenario_digest(b1) != scenario_digest(b2)
        assert scenario_digest(b1) == scenario_digest(json.loads(json.dumps(b1)))

    def test_read_dir_sorts_by_run(self, make_config, ontology, tmp_path):
        config = make_config(test_count=3)
        for i in (2, 0, 1):
            record, block = one_run(config, ontology, run_index=i)
            write_run_record(record, tmp_path, block)
        records = read_run_dir(tmp_path)
        assert [r.run_index for r in records] == [0, 1, 2]

    def test_read_dir_empty(self, tmp_path):
        with pytest.raises(ReportError, match="no run records"):
            read_run_dir(tmp_path)


class TestScoreTable:
    def test_table_from_json_equals_in_memory(self, make_config, ontology, tmp_path):
        config = make_config(test_count=4)
        plan = SuiteRunPlan(
            ontology=ontology, config=config, master_seed=3, out_dir=tmp_path,
            deterministic_time=True, faults=NO_FAULTS, render_html=False,
        )
        records, scores, _ = run_suite(plan)
        reread = read_run_dir(tmp_path)
        assert reread == records
        assert render_score_table_text(reread, suite_score(reread)) == \
            render_score_table_text(records, scores)

    def test_table_layout(self, make_config, ontology, tmp_path):
        config = make_config(test_count=2)
        plan = SuiteRunPlan(
            ontology=ontology, config=config, master_seed=3, out_dir=tmp_path,
            deterministic_time=True, faults=NO_FAULTS, render_html=False,
        )
        records, scores, _ = run_suite(plan)
        text = render_score_table_text(records, scores)
        assert "Test: pick_and_place" in text
        assert "A1" in text and "A4" in text and "S" in text
        assert "T (exact)" in text and "T (rounded basis)" in text


class TestHtmlReport:
    def test_navigation_report_content(self, ontology, tmp_path):
        script = parse_script(DATA / "fig6_replay.json", ontology)
        plan = SuiteRunPlan(
            ontology=ontology, config=None, master_seed=1, out_dir=tmp_path / "runs",
            script=script,
        )
        records, scores, paths = run_suite(plan)
        html = paths.html.read_text()
        assert "Runs: 4" in html
        retries = html.split("<h3>Retries</h3>")[1].split("<h3>")[0]
        assert retries.count("<li>") == 4
        assert retries.count("goal blocked") >= 3
        assert retries.count(">broken<") == 1
        assert "badge unstable" in html

    def test_pick_suite_has_property_bars(self, make_config, ontology, tmp_path):
        config = make_config(
            tests=[["pick", ["move_to", "perceive_plane", "pick_object"]]],
            test_count=3,
        )
        plan = SuiteRunPlan(
            ontology=ontology, config=config, master_seed=5, out_dir=tmp_path,
            deterministic_time=True, faults=NO_FAULTS,
        )
        _, _, paths = run_suite(plan)
        html = paths.html.read_text()
        for pid in ("close_object", "object_grasped", "no_grasp_collisions",
                    "moved_object", "object_in_gripper"):
            assert pid in html

    def test_empty_record_list_rejected(self, tmp_path):
        from simprop.scoring import SuiteScore
        from fractions import Fraction

        empty = SuiteScore(0, (), (), Fraction(0), Fraction(0), {})
        with pytest.raises(ReportError):
            render_html_report([], empty, tmp_path / "r.html")

    def test_report_is_self_contained(self, make_config, ontology, tmp_path):
        config = make_config(test_count=1)
        plan = SuiteRunPlan(
            ontology=ontology, config=config, master_seed=2, out_dir=tmp_path,
            deterministic_time=True, faults=NO_FAULTS,
        )
        _, _, paths = run_suite(plan)
        html = paths.html.read_text()
        assert "<style>" in html
        assert "http://" not in html and "https://" not in html
