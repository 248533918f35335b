"""Deterministic ground-truth world simulator with injected failure modes.

Stands in for a physics simulator plus the robot software stack: actions are
kinematic models over poses, supports and gripper attachment, and failures
(lost action messages, grasp collisions, slips, blocked goals, missed
detections) are triggered by configured probabilities drawn from the run's
RNG stream. Everything the shipped properties need is ground truth here.

Fault draw order is fixed per action (desync first, then collide, then slip)
so a single RNG stream yields reproducible traces.
"""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .geometry import Aabb, FrameTree, Pose, box_world_aabb, settle_on_surface
from .scenario import (
    ModelSpec,
    ScenarioInstance,
    Surface,
    WorldDef,
    object_id_for,
    obstacle_id_for,
)

# Kinematic conventions. None of these come from measured robot data; they
# only need to be self-consistent with the property tolerances.
ROBOT_RADIUS = 0.25
REACH = 0.8
PERCEIVE_RANGE = 1.5
LIFT_HEIGHT = 0.05
BASE_SPEED = 0.3  # m/s
ARM_SPEED = 0.1  # m/s
PATH_STEP = 0.05
APPROACH_STEP = 0.02
GOAL_CLEARANCE = 0.3  # the robot will not creep closer to a blocked goal
DESYNC_TIMEOUT_S = 30.0
PRECHECK_DURATION_S = 0.5
PERCEIVE_DURATION_S = 2.0
GRASP_OVERHEAD_S = 1.0
GRIPPER_HOME = Pose(0.3, 0.0, 0.8, 0.0)

SUPPORT_FLOOR = "floor"
SUPPORT_GRIPPER = "gripper"

EXECUTABLE_ACTIONS = ("move_to", "perceive_plane", "pick_object", "place_object")

COMPLETED = "completed"
FAILED = "failed"
DESYNCED = "desynced"

TraceFn = Optional[Callable[[dict[str, Any]], None]]


class WorldError(RuntimeError):
    """Request referencing something the world does not contain."""


class WorldInvariantError(AssertionError):
    """The support/attachment bookkeeping is inconsistent."""


@dataclass
class FaultProfile:
    """Failure-mode probabilities plus perception noise, all per action."""

    p_desync: float = 0.0
    p_collide: float = 0.0
    p_slip: float = 0.0
    p_block: float = 0.0
    p_perception_miss: float = 0.0
    sigma_pos: float = 0.01

    def __post_init__(self):
        for name in ("p_desync", "p_collide", "p_slip", "p_block", "p_perception_miss"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.sigma_pos < 0.0:
            raise ValueError("sigma_pos must be >= 0")


@dataclass
class ActionOutcome:
    status: str
    duration: float
    reason: str = ""

    def __post_init__(self):
        if self.status == FAILED and not self.reason:
            raise ValueError("failed outcome needs a reason")
        if self.status == DESYNCED and self.reason:
            raise ValueError("desynced outcome carries no reason")


@dataclass(frozen=True)
class ContactEvent:
    time: float
    object_id: str
    displacement: float
    toppled: bool

    def __post_init__(self):
        if self.displacement < 0:
            raise ValueError("displacement must be >= 0")


@dataclass(frozen=True)
class Detection:
    pose: Pose
    half_extents: tuple[float, float, float]


@dataclass(frozen=True)
class PerceptionResult:
    plane_top: float
    plane_footprint: Aabb
    objects: tuple[Detection, ...]


@dataclass
class ObjectState:
    id: str
    model: str
    pose: Pose
    half_extents: tuple[float, float, float]
    upright: bool = True
    support: str = SUPPORT_FLOOR

    def effective_half_extents(self) -> tuple[float, float, float]:
        """Half extents as resting: toppled boxes lie on their largest face."""
        if self.upright:
            return self.half_extents
        a, b, c = sorted(self.half_extents, reverse=True)
        return (a, b, c)

    def world_aabb(self) -> Aabb:
        return box_world_aabb(self.pose, self.effective_half_extents())


@dataclass
class RobotState:
    base_pose: Pose
    gripper_offset: Pose = GRIPPER_HOME
    held_object: str | None = None

    def gripper_pose(self) -> Pose:
        return self.base_pose.compose(self.gripper_offset)


@dataclass
class WorldState:
    """Mutable ground truth for one run; snapshots are deep copies."""

    frame_tree: FrameTree
    surfaces: dict[str, Surface]
    floor: Aabb
    locations: dict[str, Pose]
    objects: dict[str, ObjectState] = field(default_factory=dict)
    robot: RobotState = field(default_factory=lambda: RobotState(Pose(0, 0, 0, 0)))
    events: list[ContactEvent] = field(default_factory=list)
    clock: float = 0.0

    def add_object(self, obj: ObjectState) -> None:
        if obj.id in self.objects:
            raise WorldError(f"duplicate object id {obj.id!r}")
        self.objects[obj.id] = obj

    def object(self, object_id: str) -> ObjectState:
        try:
            return self.objects[object_id]
        except KeyError:
            raise WorldError(f"unknown object {object_id!r}") from None

    def surface(self, name: str) -> Surface:
        try:
            return self.surfaces[name]
        except KeyError:
            raise WorldError(f"unknown surface {name!r}") from None

    def location(self, name: str) -> Pose:
        try:
            return self.locations[name]
        except KeyError:
            raise WorldError(f"unknown location {name!r}") from None

    def floor_obstacles(self) -> list[ObjectState]:
        return [o for o in self.objects.values() if o.support == SUPPORT_FLOOR]

    def move_base(self, pose: Pose) -> None:
        self.robot.base_pose = pose
        self.frame_tree.set_edge("map", "base_link", pose)


def snapshot(w: WorldState) -> WorldState:
    """Deep, structurally comparable copy; later world mutations are invisible."""
    return copy.deepcopy(w)


def audit_world(w: WorldState) -> None:
    """Check the support invariant; raises WorldInvariantError on violation."""
    for obj in w.objects.values():
        hz = obj.effective_half_extents()[2]
        if obj.support == SUPPORT_GRIPPER:
            if w.robot.held_object != obj.id:
                raise WorldInvariantError(f"{obj.id} claims gripper support but is not held")
            if not obj.upright:
                raise WorldInvariantError(f"{obj.id} toppled while attached to gripper")
        elif obj.support == SUPPORT_FLOOR:
            if not math.isclose(obj.pose.z, hz, abs_tol=1e-9):
                raise WorldInvariantError(f"{obj.id} does not rest on the floor")
        else:
            surface = w.surface(obj.support)
            if not math.isclose(obj.pose.z, surface.top_height + hz, abs_tol=1e-9):
                raise WorldInvariantError(f"{obj.id} does not rest on {obj.support!r}")
    held = w.robot.held_object
    if held is not None and w.object(held).support != SUPPORT_GRIPPER:
        raise WorldInvariantError(f"held object {held!r} lacks gripper support")


def init_world(
    instance: ScenarioInstance,
    world_def: WorldDef,
    models: dict[str, ModelSpec],
) -> WorldState:
    """Materialize a generated scenario into ground truth at clock zero."""
    tree = FrameTree()
    for surface in world_def.surfaces.values():
        fp = surface.footprint
        center = Pose(
            (fp.min_corner[0] + fp.max_corner[0]) / 2.0,
            (fp.min_corner[1] + fp.max_corner[1]) / 2.0,
            surface.top_height,
            0.0,
        )
        tree.add("map", f"surface_{surface.name}", center)
    tree.add("map", "base_link", world_def.robot_start)

    world = WorldState(
        frame_tree=tree,
        surfaces=dict(world_def.surfaces),
        floor=world_def.floor,
        locations=dict(world_def.locations),
        robot=RobotState(base_pose=world_def.robot_start),
    )
    for i, spawn in enumerate(instance.spawned_objects):
        world.add_object(
            ObjectState(
                id=object_id_for(spawn.model, i),
                model=spawn.model,
                pose=spawn.pose,
                half_extents=models[spawn.model].half_extents,
                support=spawn.surface,
            )
        )
    for i, spawn in enumerate(instance.spawned_obstacles):
        world.add_object(
            ObjectState(
                id=obstacle_id_for(spawn.model, i),
                model=spawn.model,
                pose=spawn.pose,
                half_extents=models[spawn.model].half_extents,
                support=SUPPORT_FLOOR,
            )
        )
    audit_world(world)
    return world


def _desync(w: WorldState) -> ActionOutcome:
    w.clock += DESYNC_TIMEOUT_S
    return ActionOutcome(DESYNCED, DESYNC_TIMEOUT_S)


def _settle_after_displacement(
    w: WorldState, obj: ObjectState, x: float, y: float, preferred_surface: str | None
) -> None:
    """Drop a detached object at (x, y): onto the surface it came from when
    still over it, otherwise onto the floor."""
    hz = obj.effective_half_extents()[2]
    surface = w.surfaces.get(preferred_surface) if preferred_surface else None
    if surface is not None and surface.footprint.contains_xy(x, y):
        obj.pose = Pose(x, y, surface.top_height + hz, obj.pose.yaw)
        obj.support = surface.name
    else:
        obj.pose = Pose(x, y, hz, obj.pose.yaw)
        obj.support = SUPPORT_FLOOR


def _segment_samples(start: Pose, goal: Pose, step: float) -> list[tuple[float, float]]:
    length = start.planar_distance(goal)
    if length == 0.0:
        return [(start.x, start.y)]
    n = max(1, math.ceil(length / step))
    return [
        (start.x + (goal.x - start.x) * i / n, start.y + (goal.y - start.y) * i / n)
        for i in range(n + 1)
    ]


def execute_move_to(
    w: WorldState,
    goal_location: str,
    faults: FaultProfile,
    rng: random.Random,
    trace: TraceFn = None,
) -> tuple[WorldState, ActionOutcome]:
    """Drive the base along the straight segment to a named location.

    Obstacles on the floor, inflated by the robot radius, block the goal when
    they cover it or any path sample in the final approach stretch; mid-path
    obstacles are assumed to be avoided by the (unmodelled) planner.
    """
    goal = w.location(goal_location)
    if rng.random() < faults.p_desync:
        return w, _desync(w)
    forced_block = rng.random() < faults.p_block

    start = w.robot.base_pose
    samples = _segment_samples(start, goal, PATH_STEP)
    obstacle_boxes = [o.world_aabb().inflated(ROBOT_RADIUS) for o in w.floor_obstacles()]

    def blocked(x: float, y: float) -> bool:
        return any(box.contains_xy(x, y) for box in obstacle_boxes)

    goal_blocked = forced_block or blocked(goal.x, goal.y)
    if not goal_blocked:
        for x, y in samples:
            if math.hypot(x - goal.x, y - goal.y) <= GOAL_CLEARANCE and blocked(x, y):
                goal_blocked = True
                break

    heading = math.atan2(goal.y - start.y, goal.x - start.x) if samples[-1] != (start.x, start.y) else start.yaw

    if goal_blocked:
        stop = (start.x, start.y)
        for x, y in samples:
            if blocked(x, y) or math.hypot(x - goal.x, y - goal.y) <= GOAL_CLEARANCE:
                break
            stop = (x, y)
            if trace:
                trace({"action": "move_to", "x": x, "y": y})
        w.move_base(Pose(stop[0], stop[1], 0.0, heading))
        traveled = math.hypot(stop[0] - start.x, stop[1] - start.y)
        duration = traveled / BASE_SPEED
        w.clock += duration
        return w, ActionOutcome(FAILED, duration, "goal blocked")

    if trace:
        for x, y in samples:
            trace({"action": "move_to", "x": x, "y": y})
    w.move_base(Pose(goal.x, goal.y, 0.0, goal.yaw))
    duration = start.planar_distance(goal) / BASE_SPEED
    w.clock += duration
    return w, ActionOutcome(COMPLETED, duration)


def execute_perceive_plane(
    w: WorldState,
    surface_id: str,
    faults: FaultProfile,
    rng: random.Random,
    trace: TraceFn = None,
) -> tuple[WorldState, ActionOutcome, PerceptionResult | None]:
    """Detect the support plane and the objects on it, with sensing noise.

    Each on-surface object is dropped independently with p_perception_miss;
    surviving detections are ground truth perturbed per axis by sigma_pos.
    """
    surface = w.surface(surface_id)
    if rng.random() < faults.p_desync:
        return w, _desync(w), None

    fp = surface.footprint
    base = w.robot.base_pose
    dx = max(fp.min_corner[0] - base.x, 0.0, base.x - fp.max_corner[0])
    dy = max(fp.min_corner[1] - base.y, 0.0, base.y - fp.max_corner[1])
    if math.hypot(dx, dy) > PERCEIVE_RANGE:
        w.clock += PRECHECK_DURATION_S
        return w, ActionOutcome(FAILED, PRECHECK_DURATION_S, "surface out of range"), None

    sigma = faults.sigma_pos
    top = max(0.0, surface.top_height + rng.gauss(0.0, sigma))
    lo = (fp.min_corner[0] + rng.gauss(0.0, sigma), fp.min_corner[1] + rng.gauss(0.0, sigma))
    hi = (fp.max_corner[0] + rng.gauss(0.0, sigma), fp.max_corner[1] + rng.gauss(0.0, sigma))
    plane = Aabb(
        (min(lo[0], hi[0]), min(lo[1], hi[1]), 0.0),
        (max(lo[0], hi[0]), max(lo[1], hi[1]), top),
    )

    detections: list[Detection] = []
    for obj in w.objects.values():
        if obj.support != surface_id:
            continue
        if rng.random() < faults.p_perception_miss:
            continue
        noisy = Pose(
            obj.pose.x + rng.gauss(0.0, sigma),
            obj.pose.y + rng.gauss(0.0, sigma),
            obj.pose.z + rng.gauss(0.0, sigma),
            obj.pose.yaw,
        )
        detections.append(Detection(noisy, obj.half_extents))
        if trace:
            trace({"action": "perceive_plane", "object": obj.id, "x": noisy.x, "y": noisy.y})

    w.clock += PERCEIVE_DURATION_S
    result = PerceptionResult(top, plane, tuple(detections))
    return w, ActionOutcome(COMPLETED, PERCEIVE_DURATION_S), result


def execute_pick(
    w: WorldState,
    target_id: str,
    source_surface_id: str,
    faults: FaultProfile,
    rng: random.Random,
    trace: TraceFn = None,
) -> tuple[WorldState, ActionOutcome]:
    """Approach and grasp the target object.

    With p_collide the approach strikes the target: it topples and is
    displaced, and the action fails. A successful grasp lifts the object;
    with p_slip it then drops back out of the gripper while the action still
    reports completion (the mismatch is what the properties are for).
    """
    target = w.object(target_id)
    w.surface(source_surface_id)
    if rng.random() < faults.p_desync:
        return w, _desync(w)

    base = w.robot.base_pose
    if base.planar_distance(target.pose) > REACH:
        w.clock += PRECHECK_DURATION_S
        return w, ActionOutcome(FAILED, PRECHECK_DURATION_S, "object out of reach")

    grasp_point = target.pose
    gripper_start = w.robot.gripper_pose()
    approach_len = gripper_start.distance(grasp_point)
    n_steps = max(1, math.ceil(approach_len / APPROACH_STEP))
    step_time = APPROACH_STEP / ARM_SPEED
    if trace:
        for i in range(n_steps + 1):
            t = i / n_steps
            trace({
                "action": "pick_object",
                "step": i,
                "x": gripper_start.x + (grasp_point.x - gripper_start.x) * t,
                "y": gripper_start.y + (grasp_point.y - gripper_start.y) * t,
                "z": gripper_start.z + (grasp_point.z - gripper_start.z) * t,
            })

    if rng.random() < faults.p_collide:
        collision_step = rng.randrange(n_steps)
        magnitude = rng.uniform(0.05, 0.15)
        angle = rng.uniform(-math.pi, math.pi)
        old_pose = target.pose
        target.upright = False
        _settle_after_displacement(
            w,
            target,
            old_pose.x + magnitude * math.cos(angle),
            old_pose.y + magnitude * math.sin(angle),
            preferred_surface=target.support if target.support in w.surfaces else None,
        )
        duration = (collision_step + 1) * step_time
        w.events.append(
            ContactEvent(w.clock + duration, target_id, old_pose.distance(target.pose), True)
        )
        if trace:
            trace({"action": "pick_object", "collision_step": collision_step, "object": target_id})
        w.clock += duration
        return w, ActionOutcome(FAILED, duration, "grasp collision")

    support_top = 0.0
    if target.support in w.surfaces:
        support_top = w.surfaces[target.support].top_height
    lifted = Pose(
        target.pose.x,
        target.pose.y,
        support_top + target.half_extents[2] + LIFT_HEIGHT,
        target.pose.yaw,
    )
    source_surface = target.support if target.support in w.surfaces else None
    target.pose = lifted
    target.support = SUPPORT_GRIPPER
    w.robot.held_object = target_id
    w.robot.gripper_offset = base.inverse().compose(lifted)
    duration = approach_len / ARM_SPEED + GRASP_OVERHEAD_S

    if rng.random() < faults.p_slip:
        to_floor = rng.random() < 0.5
        magnitude = rng.uniform(0.05, 0.1)
        angle = rng.uniform(-math.pi, math.pi)
        x = lifted.x + magnitude * math.cos(angle)
        y = lifted.y + magnitude * math.sin(angle)
        w.robot.held_object = None
        w.robot.gripper_offset = GRIPPER_HOME
        target.support = SUPPORT_FLOOR  # provisional; settle decides
        if to_floor:
            target.pose = Pose(x, y, target.half_extents[2], lifted.yaw)
        else:
            _settle_after_displacement(w, target, x, y, preferred_surface=source_surface)
        w.events.append(
            ContactEvent(w.clock + duration, target_id, lifted.distance(target.pose), False)
        )
        if trace:
            trace({"action": "pick_object", "slip": True, "object": target_id})
        w.clock += duration
        return w, ActionOutcome(COMPLETED, duration)

    if trace:
        trace({"action": "pick_object", "grasped": target_id})
    w.clock += duration
    return w, ActionOutcome(COMPLETED, duration)


def execute_place(
    w: WorldState,
    target_id: str,
    place_pose: Pose,
    place_surface_id: str,
    faults: FaultProfile,
    rng: random.Random,
    trace: TraceFn = None,
) -> tuple[WorldState, ActionOutcome]:
    """Release the held object at a planar pose on the target surface."""
    target = w.object(target_id)
    surface = w.surface(place_surface_id)
    if rng.random() < faults.p_desync:
        return w, _desync(w)

    if w.robot.held_object != target_id:
        w.clock += PRECHECK_DURATION_S
        return w, ActionOutcome(FAILED, PRECHECK_DURATION_S, "nothing in gripper")
    if not surface.footprint.contains_xy(place_pose.x, place_pose.y):
        w.clock += PRECHECK_DURATION_S
        return w, ActionOutcome(FAILED, PRECHECK_DURATION_S, "invalid placement pose")

    travel = w.robot.gripper_pose().distance(
        Pose(place_pose.x, place_pose.y, surface.top_height, place_pose.yaw)
    )
    duration = travel / ARM_SPEED + GRASP_OVERHEAD_S

    if rng.random() < faults.p_collide:
        magnitude = rng.uniform(0.05, 0.15)
        angle = rng.uniform(-math.pi, math.pi)
        old_pose = target.pose
        w.robot.held_object = None
        w.robot.gripper_offset = GRIPPER_HOME
        target.upright = False
        _settle_after_displacement(
            w,
            target,
            place_pose.x + magnitude * math.cos(angle),
            place_pose.y + magnitude * math.sin(angle),
            preferred_surface=place_surface_id,
        )
        w.events.append(
            ContactEvent(w.clock + duration, target_id, old_pose.distance(target.pose), True)
        )
        if trace:
            trace({"action": "place_object", "collision": True, "object": target_id})
        w.clock += duration
        return w, ActionOutcome(FAILED, duration, "place collision")

    target.pose = settle_on_surface(
        target.half_extents, place_pose, surface.top_height, surface.footprint
    )
    target.upright = True
    target.support = place_surface_id
    w.robot.held_object = None
    w.robot.gripper_offset = GRIPPER_HOME
    if trace:
        trace({"action": "place_object", "placed": target_id})
    w.clock += duration
    return w, ActionOutcome(COMPLETED, duration)


def execute_action(
    w: WorldState,
    action_id: str,
    params: dict[str, Any],
    faults: FaultProfile,
    rng: random.Random,
    trace: TraceFn = None,
) -> tuple[ActionOutcome, PerceptionResult | None]:
    """Dispatch one task action by its canonical parameter names."""
    try:
        if action_id == "move_to":
            _, outcome = execute_move_to(w, params["goal_location"], faults, rng, trace)
            return outcome, None
        if action_id == "perceive_plane":
            _, outcome, perception = execute_perceive_plane(
                w, params["target_surface"], faults, rng, trace
            )
            return outcome, perception
        if action_id == "pick_object":
            _, outcome = execute_pick(
                w, params["target_object"], params["source_surface"], faults, rng, trace
            )
            return outcome, None
        if action_id == "place_object":
            _, outcome = execute_place(
                w,
                params["target_object"],
                params["place_pose"],
                params["place_surface"],
                faults,
                rng,
                trace,
            )
            return outcome, None
    except KeyError as exc:
        raise WorldError(f"action {action_id!r} missing parameter {exc.args[0]!r}") from None
    raise WorldError(f"no executor for action {action_id!r}")
