"""Success-property registry and the action verification engine.

A property is a predicate over the world before and after an action, its
outcome, the bound parameters and (for perception actions) the sensing
result. ``evaluate_action`` scores every declared property of an action and
never short-circuits, because the per-property indicators feed the scoring
and the failure breakdowns. ``test_action`` is the boolean engine on top:
generate parameters, execute, return false on the first violated property.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .geometry import yaw_difference
from .ontology import (
    Ontology,
    ParameterDesignator,
    bind_property_parameters,
    get_action_parameters,
    get_success_properties,
)
from .scenario import ScenarioConfig, generate_parameter
from .simworld import (
    COMPLETED,
    DESYNCED,
    SUPPORT_GRIPPER,
    ActionOutcome,
    FaultProfile,
    PerceptionResult,
    WorldState,
    execute_action,
    snapshot,
)


class PropertyError(ValueError):
    """Unknown property id or missing bound parameter."""


@dataclass(frozen=True)
class ToleranceSet:
    """Numeric slack for the shipped properties (none come from the model)."""

    eps_pos: float = 0.05  # position tolerance, meters
    eps_yaw: float = 0.1  # orientation tolerance, radians
    delta_move: float = 0.02  # minimum displacement that counts as movement
    proximity: float = 0.8  # how close a manipulable object must be
    eps_match: float = 0.05  # detection-to-object association radius

    def __post_init__(self):
        for name in ("eps_pos", "eps_yaw", "delta_move", "proximity", "eps_match"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class PropertyResult:
    property_id: str
    passed: bool
    detail: str

    def __post_init__(self):
        if not self.passed and not self.detail:
            raise ValueError("failed property needs a detail string")


@dataclass(frozen=True)
class PropertyContext:
    pre: WorldState
    post: WorldState
    outcome: ActionOutcome
    params: dict[str, Any]
    perception: PerceptionResult | None = None
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)

    def __post_init__(self):
        if self.pre.clock > self.post.clock:
            raise ValueError("pre snapshot is newer than post snapshot")

    def events_during(self):
        return [
            e for e in self.post.events if self.pre.clock < e.time <= self.post.clock
        ]


@dataclass(frozen=True)
class ActionRecord:
    action: str
    outcome: ActionOutcome
    results: tuple[PropertyResult, ...]
    params: dict[str, Any]

    @property
    def indicators(self) -> tuple[int, ...]:
        return tuple(1 if r.passed else 0 for r in self.results)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)


_CheckFn = Callable[[PropertyContext], tuple[bool, str]]
_REGISTRY: dict[str, _CheckFn] = {}


def _check(property_id: str, also: str | None = None):
    def register(fn: _CheckFn) -> _CheckFn:
        _REGISTRY[property_id] = fn
        if also:
            _REGISTRY[also] = fn
        return fn

    return register


def registered_properties() -> list[str]:
    return sorted(_REGISTRY)


def property_registered(property_id: str) -> bool:
    return property_id in _REGISTRY


# -- pick_object ------------------------------------------------------------

@_check("close_object")
def _close_object(ctx: PropertyContext):
    target = ctx.pre.object(ctx.params["target_object"])
    dist = ctx.pre.robot.base_pose.planar_distance(target.pose)
    limit = ctx.tolerances.proximity
    return dist <= limit, f"target at {dist:.3f} m before action (proximity {limit} m)"


@_check("object_grasped")
def _object_grasped(ctx: PropertyContext):
    return ctx.outcome.status == COMPLETED, f"action reported {ctx.outcome.status}"


@_check("no_grasp_collisions", also="no_place_collisions")
def _no_collisions_except_target(ctx: PropertyContext):
    """Bystander objects must stay put and no contact may topple anything."""
    target_id = ctx.params["target_object"]
    tol = ctx.tolerances.delta_move
    for obj in ctx.pre.objects.values():
        if obj.id == target_id:
            continue
        moved = obj.pose.distance(ctx.post.object(obj.id).pose)
        if moved >= tol:
            return False, f"{obj.id} moved {moved:.3f} m during the action"
    for event in ctx.events_during():
        if event.toppled:
            return False, f"contact toppled {event.object_id} during the action"
    return True, "no bystander displaced, no toppling contact"


@_check("moved_object")
def _moved_object(ctx: PropertyContext):
    target_id = ctx.params["target_object"]
    moved = ctx.pre.object(target_id).pose.distance(ctx.post.object(target_id).pose)
    tol = ctx.tolerances.delta_move
    return moved >= tol, f"target displaced {moved:.3f} m (needs >= {tol} m)"


@_check("object_in_gripper")
def _object_in_gripper(ctx: PropertyContext):
    held = ctx.post.robot.held_object
    return held == ctx.params["target_object"], f"gripper holds {held!r} after action"


# -- move_to ----------------------------------------------------------------

@_check("goal_exists")
def _goal_exists(ctx: PropertyContext):
    name = ctx.params["goal_location"]
    return name in ctx.pre.locations, f"goal location {name!r} lookup"


@_check("action_completed")
def _action_completed(ctx: PropertyContext):
    return ctx.outcome.status == COMPLETED, f"action reported {ctx.outcome.status}"


@_check("at_goal_position")
def _at_goal_position(ctx: PropertyContext):
    goal = ctx.pre.locations.get(ctx.params["goal_location"])
    if goal is None:
        return False, "goal location undefined"
    dist = ctx.post.robot.base_pose.planar_distance(goal)
    return dist <= ctx.tolerances.eps_pos, f"base {dist:.3f} m from goal"


@_check("at_goal_orientation")
def _at_goal_orientation(ctx: PropertyContext):
    goal = ctx.pre.locations.get(ctx.params["goal_location"])
    if goal is None:
        return False, "goal location undefined"
    err = abs(yaw_difference(ctx.post.robot.base_pose.yaw, goal.yaw))
    return err <= ctx.tolerances.eps_yaw, f"yaw error {err:.3f} rad"


@_check("no_navigation_collisions")
def _no_navigation_collisions(ctx: PropertyContext):
    events = ctx.events_during()
    if events:
        return False, f"{len(events)} contact event(s) during navigation"
    return True, "no contact events"


# -- perceive_plane ---------------------------------------------------------

@_check("plane_detected")
def _plane_detected(ctx: PropertyContext):
    return ctx.perception is not None, "no perception result"


@_check("plane_matches")
def _plane_matches(ctx: PropertyContext):
    if ctx.perception is None:
        return False, "no perception result"
    truth = ctx.pre.surface(ctx.params["target_surface"])
    tol = ctx.tolerances.eps_pos
    height_err = abs(ctx.perception.plane_top - truth.top_height)
    if height_err > tol:
        return False, f"plane height off by {height_err:.3f} m"
    detected, actual = ctx.perception.plane_footprint, truth.footprint
    for det, act in ((detected.min_corner, actual.min_corner), (detected.max_corner, actual.max_corner)):
        corner_err = ((det[0] - act[0]) ** 2 + (det[1] - act[1]) ** 2) ** 0.5
        if corner_err > tol:
            return False, f"footprint corner off by {corner_err:.3f} m"
    return True, "plane matches ground truth"


@_check("objects_detected")
def _objects_detected(ctx: PropertyContext):
    """Greedy nearest-neighbour match of on-surface objects to detections."""
    if ctx.perception is None:
        return False, "no perception result"
    surface_id = ctx.params["target_surface"]
    truth = [o for o in ctx.pre.objects.values() if o.support == surface_id]
    unused = list(ctx.perception.objects)
    tol = ctx.tolerances.eps_match
    for obj in truth:
        best, best_dist = None, None
        for det in unused:
            dist = obj.pose.distance(det.pose)
            if best_dist is None or dist < best_dist:
                best, best_dist = det, dist
        if best is None or best_dist > tol:
            return False, f"{obj.id} has no detection within {tol} m"
        unused.remove(best)
    return True, f"all {len(truth)} on-surface object(s) detected"


# -- place_object -----------------------------------------------------------

@_check("object_on_surface")
def _object_on_surface(ctx: PropertyContext):
    target = ctx.post.object(ctx.params["target_object"])
    surface = ctx.post.surface(ctx.params["place_surface"])
    if not surface.footprint.contains_xy(target.pose.x, target.pose.y):
        return False, f"{target.id} is outside the {surface.name} footprint"
    expected_z = surface.top_height + target.half_extents[2]
    err = abs(target.pose.z - expected_z)
    if err > ctx.tolerances.eps_pos:
        return False, f"{target.id} rest height off by {err:.3f} m"
    return True, f"{target.id} rests on {surface.name}"


@_check("object_upright")
def _object_upright(ctx: PropertyContext):
    target = ctx.post.object(ctx.params["target_object"])
    return target.upright, f"{target.id} upright={target.upright} after action"


# -- engine -----------------------------------------------------------------

def evaluate_property(property_id: str, ctx: PropertyContext) -> PropertyResult:
    """Evaluate one indicator. Desynced outcomes fail every property."""
    if property_id not in _REGISTRY:
        raise PropertyError(f"unknown property {property_id!r}")
    if ctx.outcome.status == DESYNCED:
        return PropertyResult(property_id, False, "desynced")
    try:
        passed, detail = _REGISTRY[property_id](ctx)
    except KeyError as exc:
        raise PropertyError(
            f"property {property_id!r} missing parameter {exc.args[0]!r}"
        ) from None
    return PropertyResult(property_id, passed, detail)


def evaluate_action(
    action_id: str,
    ontology: Ontology,
    bound_params: dict[str, Any],
    pre: WorldState,
    post: WorldState,
    outcome: ActionOutcome,
    perception: PerceptionResult | None = None,
    tolerances: ToleranceSet | None = None,
) -> ActionRecord:
    """Evaluate every success property of the action, in declared order."""
    tolerances = tolerances or ToleranceSet()
    results = []
    for pp in get_success_properties(ontology, action_id):
        needed = bind_property_parameters(pp, bound_params)
        ctx = PropertyContext(pre, post, outcome, needed, perception, tolerances)
        results.append(evaluate_property(pp.id, ctx))
    return ActionRecord(action_id, outcome, tuple(results), dict(bound_params))


def resolve_action_parameters(
    designators: list[ParameterDesignator],
    config: ScenarioConfig,
    world: WorldState,
    rng: random.Random,
) -> dict[str, Any]:
    """Resolve designators against a live world (the engine's generate step).

    Object targets are drawn among graspable spawned objects; source-style
    surface parameters default to the chosen target's support surface; pose
    parameters land on the place surface. Poses resolve after everything
    else so their surface is already known.
    """
    params: dict[str, Any] = {}
    for d in sorted(designators, key=lambda d: d.kind == "pose"):
        candidates: Any = None
        if d.name not in config.property_parameter_bindings:
            if d.kind == "object_id":
                if world.robot.held_object is not None:
                    candidates = [world.robot.held_object]
                else:
                    candidates = [
                        o.id
                        for o in world.objects.values()
                        if o.support != SUPPORT_GRIPPER
                        and config.models[o.model].graspable
                    ]
            elif d.kind == "surface_id" and d.name != "place_surface":
                target_id = params.get("target_object")
                if target_id is not None:
                    support = world.object(target_id).support
                    if support in world.surfaces:
                        candidates = [support]
            elif d.kind == "pose":
                surface_name = params.get("place_surface")
                if surface_name is None:
                    non_pose = [n for n, v in params.items() if isinstance(v, str) and v in world.surfaces]
                    surface_name = non_pose[0] if non_pose else None
                if surface_name is not None:
                    candidates = world.surfaces[surface_name]
        params[d.name] = generate_parameter(d, config, world, rng, candidates)
    return {d.name: params[d.name] for d in designators}


def test_action(
    action_id: str,
    ontology: Ontology,
    config: ScenarioConfig,
    world: WorldState,
    rng: random.Random,
    faults: FaultProfile | None = None,
    tolerances: ToleranceSet | None = None,
) -> bool:
    """Generate parameters, execute the action, check its success properties.

    Returns false on the first violated property. By construction this equals
    the conjunction of the indicators ``evaluate_action`` produces for the
    same RNG stream state.
    """
    faults = faults or FaultProfile()
    tolerances = tolerances or ToleranceSet()
    designators = get_action_parameters(ontology, action_id)
    p_val = resolve_action_parameters(designators, config, world, rng)
    pre = snapshot(world)
    outcome, perception = execute_action(world, action_id, p_val, faults, rng)
    post = snapshot(world)
    for pp in get_success_properties(ontology, action_id):
        pp_val = bind_property_parameters(pp, p_val)
        ctx = PropertyContext(pre, post, outcome, pp_val, perception, tolerances)
        if not evaluate_property(pp.id, ctx).passed:
            return False
    return True
