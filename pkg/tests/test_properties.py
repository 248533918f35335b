from __future__ import annotations

import random
from fractions import Fraction

import pytest

from simprop.geometry import Pose
from simprop.ontology import get_action_parameters
from simprop.properties import (
    PropertyContext,
    PropertyError,
    ToleranceSet,
    evaluate_action,
    evaluate_property,
    resolve_action_parameters,
)
from simprop.properties import test_action as check_action
from simprop.scoring import action_score
from simprop.simworld import (
    COMPLETED,
    DESYNCED,
    ActionOutcome,
    Detection,
    FaultProfile,
    PerceptionResult,
    execute_action,
    snapshot,
)

from test_simworld import NO_FAULTS, make_world


def run_action(world, action_id, params, faults, seed=0, tolerances=None):
    pre = snapshot(world)
    outcome, perception = execute_action(world, action_id, params, faults, random.Random(seed))
    post = snapshot(world)
    return pre, post, outcome, perception


def evaluate(ontology, world, action_id, params, faults, seed=0):
    pre, post, outcome, perception = run_action(world, action_id, params, faults, seed)
    return evaluate_action(action_id, ontology, params, pre, post, outcome, perception)


PICK_PARAMS = {"target_object": "glass_0", "source_surface": "coffee_table"}


class TestIndividualProperties:
    def test_moved_object_fails_without_displacement(self):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        frozen = snapshot(world)
        ctx = PropertyContext(
            frozen, frozen, ActionOutcome(COMPLETED, 1.0), {"target_object": "glass_0"}
        )
        result = evaluate_property("moved_object", ctx)
        assert not result.passed
        assert result.detail

    def test_object_in_gripper_passes_when_held(self):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        pre = snapshot(world)
        execute_action(world, "pick_object", PICK_PARAMS, NO_FAULTS, random.Random(0))
        ctx = PropertyContext(
            pre, snapshot(world), ActionOutcome(COMPLETED, 1.0), {"target_object": "glass_0"}
        )
        assert evaluate_property("object_in_gripper", ctx).passed

    def test_unknown_property_id(self):
        world = make_world()
        frozen = snapshot(world)
        ctx = PropertyContext(frozen, frozen, ActionOutcome(COMPLETED, 1.0), {})
        with pytest.raises(PropertyError, match="unknown property"):
            evaluate_property("levitates", ctx)

    def test_missing_parameter(self):
        world = make_world()
        frozen = snapshot(world)
        ctx = PropertyContext(frozen, frozen, ActionOutcome(COMPLETED, 1.0), {})
        with pytest.raises(PropertyError, match="target_object"):
            evaluate_property("moved_object", ctx)

    def test_desync_fails_any_property(self):
        world = make_world()
        frozen = snapshot(world)
        ctx = PropertyContext(frozen, frozen, ActionOutcome(DESYNCED, 1.0), {})
        result = evaluate_property("action_completed", ctx)
        assert not result.passed
        assert result.detail == "desynced"


class TestPickSignatures:
    def test_fault_free_pick_passes_all(self, ontology):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        record = evaluate(ontology, world, "pick_object", PICK_PARAMS, NO_FAULTS)
        assert record.indicators == (1, 1, 1, 1, 1)

    def test_knock_over_signature(self, ontology):
        # The collision knocks the target over: the action fails, the contact
        # topples the target and the gripper stays empty, so only proximity
        # and the (involuntary) displacement check pass: 2/5 = 0.4.
        for seed in range(20):
            world = make_world(
                objects=(("glass", 1.0, 0.0), ("cup", 1.2, 0.1)),
                robot_at=Pose(0.7, 0.0, 0.0, 0.0),
            )
            record = evaluate(
                ontology, world, "pick_object", PICK_PARAMS,
                FaultProfile(p_collide=1.0, sigma_pos=0.0), seed=seed,
            )
            passed = [r.property_id for r in record.results if r.passed]
            assert passed == ["close_object", "moved_object"], f"seed {seed}"
            assert action_score(record) == Fraction(2, 5)

    def test_slip_signature(self, ontology):
        # Enumerating the pick conditions against the slip postcondition:
        # the object was close (pass), the action reported completion (pass),
        # bystanders never move and the slip contact does not topple (pass),
        # the target ends at least the slip offset away from where it started
        # (pass), but the gripper is empty at the end (fail): 4/5 = 0.8.
        for seed in range(20):
            world = make_world(
                objects=(("glass", 1.0, 0.0), ("cup", 1.2, 0.1)),
                robot_at=Pose(0.7, 0.0, 0.0, 0.0),
            )
            record = evaluate(
                ontology, world, "pick_object", PICK_PARAMS,
                FaultProfile(p_slip=1.0, sigma_pos=0.0), seed=seed,
            )
            failed = [r.property_id for r in record.results if not r.passed]
            assert failed == ["object_in_gripper"], f"seed {seed}"
            assert action_score(record) == Fraction(4, 5)


class TestEvaluateAction:
    def test_desynced_move_to(self, ontology):
        world = make_world()
        record = evaluate(
            ontology, world, "move_to", {"goal_location": "far_corner"},
            FaultProfile(p_desync=1.0),
        )
        assert record.indicators == (0, 0, 0, 0, 0)
        assert all(r.detail == "desynced" for r in record.results)

    def test_indicator_count_matches_ontology(self, ontology):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        for action_id, params in (
            ("move_to", {"goal_location": "far_corner"}),
            ("perceive_plane", {"target_surface": "coffee_table"}),
            ("pick_object", PICK_PARAMS),
        ):
            w = snapshot(world)
            record = evaluate(ontology, w, action_id, params, NO_FAULTS)
            assert len(record.results) == len(
                ontology.actions[action_id].success_properties
            )

    def test_partially_missed_perception(self, ontology):
        # One of two objects missed: the plane is fine but the greedy match
        # cannot pair every ground-truth object, so 2/3 pass.
        world = make_world(
            objects=(("glass", 1.0, 0.0), ("cup", 1.2, 0.1)),
            robot_at=Pose(0.7, 0.0, 0.0, 0.0),
        )
        pre = snapshot(world)
        surface = world.surface("coffee_table")
        perception = PerceptionResult(
            plane_top=surface.top_height,
            plane_footprint=surface.footprint,
            objects=(Detection(world.object("glass_0").pose, (0.03, 0.03, 0.06)),),
        )
        record = evaluate_action(
            "perceive_plane", ontology, {"target_surface": "coffee_table"},
            pre, snapshot(world), ActionOutcome(COMPLETED, 2.0), perception,
        )
        assert record.indicators == (1, 1, 0)
        assert action_score(record) == Fraction(2, 3)

    def test_results_follow_declaration_order(self, ontology):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        record = evaluate(ontology, world, "pick_object", PICK_PARAMS, NO_FAULTS)
        assert [r.property_id for r in record.results] == list(
            ontology.actions["pick_object"].success_properties
        )

    def test_plane_match_respects_tolerance(self, ontology):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        pre = snapshot(world)
        surface = world.surface("coffee_table")
        shifted = PerceptionResult(
            plane_top=surface.top_height + 0.2,
            plane_footprint=surface.footprint,
            objects=(),
        )
        record = evaluate_action(
            "perceive_plane", ontology, {"target_surface": "coffee_table"},
            pre, snapshot(world), ActionOutcome(COMPLETED, 2.0), shifted,
        )
        assert record.results[1].property_id == "plane_matches"
        assert not record.results[1].passed


class TestAlgorithmEngine:
    def test_fault_free_pick_is_true(self, ontology, demo_config):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        assert check_action(
            "pick_object", ontology, demo_config, world, random.Random(0), NO_FAULTS
        )

    def test_forced_desync_is_false(self, ontology, demo_config):
        world = make_world(robot_at=Pose(0.7, 0.0, 0.0, 0.0))
        assert not check_action(
            "pick_object", ontology, demo_config, world, random.Random(0),
            FaultProfile(p_desync=1.0),
        )

    def test_matches_indicator_conjunction(self, ontology, demo_config):
        # Same RNG stream through both routes: the early-return engine must
        # agree with the conjunction of the full indicator evaluation.
        actions = ("move_to", "perceive_plane", "pick_object", "place_object")
        for i in range(80):
            profile_rng = random.Random(4000 + i)
            faults = FaultProfile(
                p_desync=profile_rng.uniform(0, 0.6),
                p_collide=profile_rng.uniform(0, 1),
                p_slip=profile_rng.uniform(0, 1),
                p_block=profile_rng.uniform(0, 0.5),
                p_perception_miss=profile_rng.uniform(0, 1),
                sigma_pos=profile_rng.uniform(0, 0.02),
            )
            action_id = actions[i % len(actions)]
            base = make_world(
                objects=(("glass", 1.0, 0.0), ("cup", 1.2, 0.1)),
                robot_at=Pose(0.7, 0.0, 0.0, 0.0),
            )
            w1, w2 = snapshot(base), snapshot(base)
            verdict = check_action(
                action_id, ontology, demo_config, w1, random.Random(7000 + i), faults
            )
            rng = random.Random(7000 + i)
            designators = get_action_parameters(ontology, action_id)
            params = resolve_action_parameters(designators, demo_config, w2, rng)
            pre = snapshot(w2)
            outcome, perception = execute_action(w2, action_id, params, faults, rng)
            record = evaluate_action(
                action_id, ontology, params, pre, snapshot(w2), outcome, perception
            )
            assert verdict == record.all_passed, f"iteration {i} ({action_id})"


class TestToleranceSet:
    def test_defaults(self):
        tol = ToleranceSet()
        assert (tol.eps_pos, tol.eps_yaw, tol.delta_move) == (0.05, 0.1, 0.02)
        assert (tol.proximity, tol.eps_match) == (0.8, 0.05)

    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            ToleranceSet(eps_pos=0.0)

    def test_failed_result_requires_detail(self):
        from simprop.properties import PropertyResult

        with pytest.raises(ValueError):
            PropertyResult("close_object", False, "")
