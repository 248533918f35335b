"""Scenario configuration and randomized scenario generation.

A scenario is an environment configuration (which world, which objects where,
which obstacles) plus an objective: the ordered task the robot must perform
with fully resolved parameters. Generation is a pure function of the config,
the test name, the run index and the master seed, so any run can be
reproduced or executed in parallel.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .geometry import Aabb, Pose, aabb_intersects, box_world_aabb, settle_on_surface
from .ontology import Ontology, ParameterDesignator, get_action_parameters

DEFAULT_PLACEMENT_ATTEMPTS = 100

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid scenario configuration, world definition or model file."""


class GenerationError(RuntimeError):
    """Scenario generation could not satisfy its constraints."""


# ---------------------------------------------------------------------------
# Seed streams

def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_stream_seed(master_seed: int, test_name: str, run_index: int) -> int:
    """Per-run 64-bit stream seed, splitmix-mixed from the run coordinates."""
    s = _splitmix64(master_seed & _MASK64)
    s = _splitmix64(s ^ _fnv1a64(test_name))
    s = _splitmix64(s ^ (run_index & _MASK64))
    return s


def run_rng(master_seed: int, test_name: str, run_index: int) -> random.Random:
    return random.Random(derive_stream_seed(master_seed, test_name, run_index))


# ---------------------------------------------------------------------------
# World definitions and object models

@dataclass(frozen=True)
class Surface:
    """Horizontal support surface: top plane height plus solid volume."""

    name: str
    top_height: float
    footprint: Aabb  # solid volume from the floor to the top plane

    @classmethod
    def from_extent(cls, name, top_height, x0, y0, x1, y1) -> Surface:
        return cls(name, top_height, Aabb((x0, y0, 0.0), (x1, y1, top_height)))


@dataclass(frozen=True)
class WorldDef:
    name: str
    floor: Aabb  # z collapsed to the ground plane
    robot_start: Pose
    surfaces: dict[str, Surface]
    locations: dict[str, Pose]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    half_extents: tuple[float, float, float]
    graspable: bool

    def __post_init__(self):
        if any(h <= 0 for h in self.half_extents):
            raise ConfigError(f"model {self.name!r} has non-positive half extents")


def _floats(value: Any, n: int, where: str) -> tuple[float, ...]:
    if (
        not isinstance(value, list)
        or len(value) != n
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"{where} must be a list of {n} numbers")
    return tuple(float(v) for v in value)


def _closed_table(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def parse_world_file(path: Path) -> dict[str, WorldDef]:
    """Load the world-definition file the config's test_launcher points at."""
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"world definition file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error in {path}: {exc}") from exc

    _closed_table(doc, {"world"}, str(path))
    worlds: dict[str, WorldDef] = {}
    for name, body in doc.get("world", {}).items():
        where = f"[world.{name}]"
        _closed_table(body, {"floor", "robot_start", "surfaces", "locations"}, where)
        fx0, fy0, fx1, fy1 = _floats(body.get("floor"), 4, f"{where}.floor")
        rx, ry, ryaw = _floats(body.get("robot_start"), 3, f"{where}.robot_start")
        surfaces: dict[str, Surface] = {}
        for sname, sbody in body.get("surfaces", {}).items():
            _closed_table(sbody, {"top_height", "footprint"}, f"{where}.surfaces.{sname}")
            top = sbody.get("top_height")
            if not isinstance(top, (int, float)) or top <= 0:
                raise ConfigError(f"surface {sname!r} needs a positive top_height")
            x0, y0, x1, y1 = _floats(sbody.get("footprint"), 4, f"surface {sname!r} footprint")
            surfaces[sname] = Surface.from_extent(sname, float(top), x0, y0, x1, y1)
        locations: dict[str, Pose] = {}
        for lname, lbody in body.get("locations", {}).items():
            _closed_table(lbody, {"pose"}, f"{where}.locations.{lname}")
            lx, ly, lyaw = _floats(lbody.get("pose"), 3, f"location {lname!r} pose")
            locations[lname] = Pose(lx, ly, 0.0, lyaw)
        worlds[name] = WorldDef(
            name=name,
            floor=Aabb((fx0, fy0, 0.0), (fx1, fy1, 0.0)),
            robot_start=Pose(rx, ry, 0.0, ryaw),
            surfaces=surfaces,
            locations=locations,
        )
    if not worlds:
        raise ConfigError(f"no worlds declared in {path}")
    return worlds


def parse_model_file(path: Path, name: str) -> ModelSpec:
    try:
        doc = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"model {name!r} does not resolve to a file: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error in {path}: {exc}") from exc
    _closed_table(doc, {"half_extents", "graspable"}, str(path))
    hx, hy, hz = _floats(doc.get("half_extents"), 3, f"model {name!r} half_extents")
    graspable = doc.get("graspable", False)
    if not isinstance(graspable, bool):
        raise ConfigError(f"model {name!r}: graspable must be a boolean")
    return ModelSpec(name, (hx, hy, hz), graspable)


# ---------------------------------------------------------------------------
# Scenario configuration

@dataclass(frozen=True)
class TestDef:
    name: str
    actions: tuple[str, ...]


_CONFIG_KEYS = {
    "tests",
    "test_count",
    "test_launcher",
    "model_dir",
    "worlds",
    "model_list",
    "nav_obstacle_list",
    "nav_obstacle_count",
    "location_list",
    "object_surfaces",
    "place_object_surfaces",
    "property_parameter",
}


@dataclass(frozen=True)
class ScenarioConfig:
    tests: tuple[TestDef, ...]
    test_count: int
    test_launcher: str
    model_dir: str
    worlds: tuple[str, ...]
    model_list: tuple[str, ...]
    nav_obstacle_list: tuple[str, ...]
    nav_obstacle_count: int
    location_list: tuple[str, ...]
    object_surfaces: tuple[str, ...]
    place_object_surfaces: tuple[str, ...]
    property_parameter_bindings: dict[str, tuple[Any, ...]] = field(default_factory=dict)
    # Resolved at parse time from test_launcher / model_dir:
    world_defs: dict[str, WorldDef] = field(default_factory=dict)
    models: dict[str, ModelSpec] = field(default_factory=dict)

    def test(self, name: str) -> TestDef:
        for t in self.tests:
            if t.name == name:
                return t
        raise ConfigError(f"unknown test {name!r}")


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ConfigError(f"{where} must be a list of strings")
    return tuple(value)


def parse_scenario_config(
    document: str | Path,
    ontology: Ontology,
    base_dir: Path | None = None,
) -> ScenarioConfig:
    """Parse and fully validate a scenario configuration.

    `document` is a path to a TOML file or TOML text; relative test_launcher
    and model_dir entries resolve against the config file's directory (or
    `base_dir` when text is passed directly). All cross-references against
    the ontology and the world definitions are checked here so generation
    can assume a consistent config.
    """
    if isinstance(document, Path):
        if base_dir is None:
            base_dir = document.parent
        try:
            text = document.read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {document}") from None
    else:
        text = document
    if base_dir is None:
        base_dir = Path.cwd()

    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    _closed_table(doc, _CONFIG_KEYS, "scenario config")

    raw_tests = doc.get("tests")
    if not isinstance(raw_tests, list) or not raw_tests:
        raise ConfigError("tests must be a non-empty list")
    tests: list[TestDef] = []
    for entry in raw_tests:
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not isinstance(entry[0], str)
        ):
            raise ConfigError('each test must be ["<name>", ["<action>", ...]]')
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", entry[0]):
            raise ConfigError(f"test name {entry[0]!r} is not filename-safe")
        actions = _str_list(entry[1], f"actions of test {entry[0]!r}")
        if not actions:
            raise ConfigError(f"test {entry[0]!r} has no actions")
        tests.append(TestDef(entry[0], actions))
    if len({t.name for t in tests}) != len(tests):
        raise ConfigError("duplicate test names")

    test_count = doc.get("test_count")
    if not isinstance(test_count, int) or isinstance(test_count, bool) or test_count < 1:
        raise ConfigError("test_count must be an integer >= 1")

    launcher = doc.get("test_launcher")
    model_dir = doc.get("model_dir")
    if not isinstance(launcher, str) or not isinstance(model_dir, str):
        raise ConfigError("test_launcher and model_dir must be path strings")

    worlds = _str_list(doc.get("worlds", []), "worlds")
    if not worlds:
        raise ConfigError("worlds must name at least one world")
    model_list = _str_list(doc.get("model_list", []), "model_list")
    nav_obstacle_list = _str_list(doc.get("nav_obstacle_list", []), "nav_obstacle_list")
    nav_obstacle_count = doc.get("nav_obstacle_count", 0)
    if (
        not isinstance(nav_obstacle_count, int)
        or isinstance(nav_obstacle_count, bool)
        or nav_obstacle_count < 0
    ):
        raise ConfigError("nav_obstacle_count must be a non-negative integer")
    location_list = _str_list(doc.get("location_list", []), "location_list")
    object_surfaces = _str_list(doc.get("object_surfaces", []), "object_surfaces")
    place_surfaces = _str_list(doc.get("place_object_surfaces", []), "place_object_surfaces")

    bindings: dict[str, tuple[Any, ...]] = {}
    for pname, body in doc.get("property_parameter", {}).items():
        _closed_table(body, {"values"}, f"[property_parameter.{pname}]")
        values = body.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"property_parameter.{pname}.values must be a non-empty list")
        bindings[pname] = tuple(values)

    world_defs = parse_world_file(base_dir / launcher)
    needed_models = sorted(set(model_list) | set(nav_obstacle_list))
    models = {
        name: parse_model_file(base_dir / model_dir / f"{name}.model", name)
        for name in needed_models
    }

    config = ScenarioConfig(
        tests=tuple(tests),
        test_count=test_count,
        test_launcher=launcher,
        model_dir=model_dir,
        worlds=worlds,
        model_list=model_list,
        nav_obstacle_list=nav_obstacle_list,
        nav_obstacle_count=nav_obstacle_count,
        location_list=location_list,
        object_surfaces=object_surfaces,
        place_object_surfaces=place_surfaces,
        property_parameter_bindings=bindings,
        world_defs=world_defs,
        models=models,
    )
    _validate_config(config, ontology)
    return config


def _validate_config(config: ScenarioConfig, ontology: Ontology) -> None:
    for world_name in config.worlds:
        if world_name not in config.world_defs:
            raise ConfigError(f"world {world_name!r} not defined in {config.test_launcher}")
    for world_name in config.worlds:
        world = config.world_defs[world_name]
        for sname in (*config.object_surfaces, *config.place_object_surfaces):
            if sname not in world.surfaces:
                raise ConfigError(f"surface {sname!r} not defined in world {world_name!r}")
        for lname in config.location_list:
            if lname not in world.locations:
                raise ConfigError(f"location {lname!r} not defined in world {world_name!r}")

    if config.nav_obstacle_count > 0 and not config.nav_obstacle_list:
        raise ConfigError("nav_obstacle_count > 0 but nav_obstacle_list is empty")

    known_params: set[str] = set()
    configured_actions = {a for t in config.tests for a in t.actions}
    for action_id in configured_actions:
        if action_id not in ontology.actions:
            raise ConfigError(f"test references unknown action {action_id!r}")
        for designator in get_action_parameters(ontology, action_id):
            known_params.add(designator.name)
            _check_resolvable(designator, config)
    for pname in config.property_parameter_bindings:
        if pname not in known_params:
            raise ConfigError(f"binding for unknown property parameter {pname!r}")


def _check_resolvable(designator: ParameterDesignator, config: ScenarioConfig) -> None:
    if designator.name in config.property_parameter_bindings:
        return
    kind = designator.kind
    if kind == "location_id" and not config.location_list:
        raise ConfigError(
            f"parameter {designator.name!r} needs location_list entries or a binding"
        )
    if kind == "object_id":
        if not any(config.models[m].graspable for m in config.model_list):
            raise ConfigError(
                "a manipulation action is configured but model_list has no graspable model"
            )
        if not config.object_surfaces:
            raise ConfigError("object_surfaces must name a spawn surface for manipulation")
    if kind == "surface_id":
        candidates = (
            config.place_object_surfaces
            if designator.name == "place_surface"
            else config.object_surfaces
        )
        if not candidates:
            raise ConfigError(
                f"parameter {designator.name!r} has no candidate surfaces configured"
            )
    if kind == "scalar":
        raise ConfigError(
            f"scalar parameter {designator.name!r} needs a [lo, hi] binding"
        )


# ---------------------------------------------------------------------------
# Generated scenario instances

@dataclass(frozen=True)
class SpawnedObject:
    model: str
    pose: Pose
    surface: str


@dataclass(frozen=True)
class SpawnedObstacle:
    model: str
    pose: Pose


@dataclass(frozen=True)
class TaskStep:
    action: str
    params: dict[str, Any]


@dataclass(frozen=True)
class ScenarioInstance:
    seed: int
    world: str
    spawned_objects: tuple[SpawnedObject, ...]
    spawned_obstacles: tuple[SpawnedObstacle, ...]
    task: tuple[TaskStep, ...]


def object_id_for(model: str, index: int) -> str:
    """Stable id of the index-th spawned object (shared with world setup)."""
    return f"{model}_{index}"


def obstacle_id_for(model: str, index: int) -> str:
    return f"{model}_obs_{index}"


def generate_parameter(
    designator: ParameterDesignator,
    config: ScenarioConfig,
    world: WorldDef,
    rng: random.Random,
    candidates: Any = None,
) -> Any:
    """Resolve one designator to a concrete value.

    Resolution order: explicit `candidates`, then the config's binding table
    for the designator's name, then the kind's default config list. Pose
    parameters are drawn uniformly over a surface footprint with uniform yaw;
    for those, `candidates` (or the binding) must supply the surface.
    """
    name, kind = designator.name, designator.kind
    values = candidates
    if values is None:
        values = config.property_parameter_bindings.get(name)

    if kind == "pose":
        surface: Surface | None = None
        if isinstance(values, Surface):
            surface = values
        elif values is not None:
            drawn = values[rng.randrange(len(values))]
            coords = _floats(list(drawn), 4, f"pose binding for {name!r}")
            return Pose(*coords)
        if surface is None:
            if not config.object_surfaces:
                raise GenerationError(f"no surface available for pose parameter {name!r}")
            surface = world.surfaces[config.object_surfaces[0]]
        x = rng.uniform(surface.footprint.min_corner[0], surface.footprint.max_corner[0])
        y = rng.uniform(surface.footprint.min_corner[1], surface.footprint.max_corner[1])
        yaw = rng.uniform(-math.pi, math.pi)
        return Pose(x, y, surface.top_height, yaw)

    if kind == "scalar":
        if values is None:
            raise GenerationError(f"scalar parameter {name!r} has no configured range")
        lo, hi = _floats(list(values), 2, f"scalar range for {name!r}")
        if lo > hi:
            raise GenerationError(f"scalar range for {name!r} is inverted")
        return rng.uniform(lo, hi)

    if values is None:
        if kind == "location_id":
            values = config.location_list
        elif kind == "surface_id":
            values = (
                config.place_object_surfaces
                if name == "place_surface"
                else config.object_surfaces
            )
        else:
            values = ()
    if not values:
        raise GenerationError(f"empty candidate list for parameter {name!r}")
    return values[rng.randrange(len(values))]


def place_models_collision_free(
    models: list[ModelSpec],
    surface: Surface,
    rng: random.Random,
    max_attempts: int = DEFAULT_PLACEMENT_ATTEMPTS,
    occupied: list[Aabb] | None = None,
) -> list[Pose]:
    """Rest each model on the surface so that no two AABBs intersect.

    Rejection sampling re-draws only the colliding model; models placed
    earlier keep their poses.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    placed: list[Aabb] = list(occupied) if occupied else []
    poses: list[Pose] = []
    fp = surface.footprint
    for model in models:
        for _ in range(max_attempts):
            x = rng.uniform(fp.min_corner[0], fp.max_corner[0])
            y = rng.uniform(fp.min_corner[1], fp.max_corner[1])
            yaw = rng.uniform(-math.pi, math.pi)
            pose = settle_on_surface(
                model.half_extents, Pose(x, y, 0.0, yaw), surface.top_height, fp
            )
            box = box_world_aabb(pose, model.half_extents)
            if not any(aabb_intersects(box, other) for other in placed):
                placed.append(box)
                poses.append(pose)
                break
        else:
            raise GenerationError(
                f"could not place model {model.name!r} after {max_attempts} attempts"
            )
    return poses


def _place_obstacles(
    config: ScenarioConfig,
    world: WorldDef,
    rng: random.Random,
    occupied: list[Aabb],
    max_attempts: int,
) -> list[SpawnedObstacle]:
    obstacles: list[SpawnedObstacle] = []
    floor = world.floor
    for _ in range(config.nav_obstacle_count):
        model_name = config.nav_obstacle_list[rng.randrange(len(config.nav_obstacle_list))]
        model = config.models[model_name]
        for _ in range(max_attempts):
            x = rng.uniform(floor.min_corner[0], floor.max_corner[0])
            y = rng.uniform(floor.min_corner[1], floor.max_corner[1])
            yaw = rng.uniform(-math.pi, math.pi)
            pose = Pose(x, y, model.half_extents[2], yaw)
            box = box_world_aabb(pose, model.half_extents)
            if not any(aabb_intersects(box, other) for other in occupied):
                occupied.append(box)
                obstacles.append(SpawnedObstacle(model_name, pose))
                break
        else:
            raise GenerationError(
                f"could not place obstacle {model_name!r} after {max_attempts} attempts"
            )
    return obstacles


def generate_scenario(
    config: ScenarioConfig,
    test_name: str,
    run_index: int,
    master_seed: int,
    ontology: Ontology,
    world_defs: dict[str, WorldDef] | None = None,
    max_attempts: int = DEFAULT_PLACEMENT_ATTEMPTS,
    rng: random.Random | None = None,
) -> ScenarioInstance:
    """Deterministically generate one concrete scenario for a run.

    The run's RNG stream is derived from (master seed, test name, run index);
    two calls with the same arguments produce identical instances. A caller
    that will keep executing the run may pass the stream in via `rng` (it
    must be freshly seeded with the run's stream seed).
    """
    test = config.test(test_name)
    seed = derive_stream_seed(master_seed, test_name, run_index)
    if rng is None:
        rng = random.Random(seed)
    if world_defs is None:
        world_defs = config.world_defs

    world_name = config.worlds[rng.randrange(len(config.worlds))]
    world = world_defs[world_name]

    spawned: list[SpawnedObject] = []
    spawn_surface: Surface | None = None
    if config.model_list:
        surface_name = config.object_surfaces[rng.randrange(len(config.object_surfaces))]
        spawn_surface = world.surfaces[surface_name]
        models = [config.models[m] for m in config.model_list]
        poses = place_models_collision_free(models, spawn_surface, rng, max_attempts)
        spawned = [
            SpawnedObject(m.name, pose, surface_name) for m, pose in zip(models, poses)
        ]

    occupied = [
        box_world_aabb(s.pose, config.models[s.model].half_extents) for s in spawned
    ]
    occupied.extend(s.footprint for s in world.surfaces.values())
    obstacles = _place_obstacles(config, world, rng, occupied, max_attempts)

    graspable_ids = [
        object_id_for(s.model, i)
        for i, s in enumerate(spawned)
        if config.models[s.model].graspable
    ]

    # Parameters with the same name are resolved once and shared across the
    # task's actions (a place target is the object that was picked). Pose
    # parameters resolve last so they can land on an already-chosen surface.
    resolved: dict[str, Any] = {}
    task: list[TaskStep] = []
    for action_id in test.actions:
        designators = get_action_parameters(ontology, action_id)
        params: dict[str, Any] = {}
        for d in sorted(designators, key=lambda d: d.kind == "pose"):
            if d.name in resolved:
                params[d.name] = resolved[d.name]
                continue
            candidates: Any = None
            if d.kind == "object_id" and d.name not in config.property_parameter_bindings:
                candidates = graspable_ids
            elif d.kind == "surface_id" and d.name not in config.property_parameter_bindings:
                if d.name != "place_surface" and spawn_surface is not None:
                    candidates = [spawn_surface.name]
            elif d.kind == "pose" and d.name not in config.property_parameter_bindings:
                surface_param = params.get("place_surface", resolved.get("place_surface"))
                if surface_param is None and spawn_surface is not None:
                    surface_param = spawn_surface.name
                if surface_param is not None:
                    candidates = world.surfaces[surface_param]
            value = generate_parameter(d, config, world, rng, candidates)
            params[d.name] = value
            resolved[d.name] = value
        ordered = {d.name: params[d.name] for d in designators}
        task.append(TaskStep(action_id, ordered))

    return ScenarioInstance(
        seed=seed,
        world=world_name,
        spawned_objects=tuple(spawned),
        spawned_obstacles=tuple(obstacles),
        task=tuple(task),
    )
