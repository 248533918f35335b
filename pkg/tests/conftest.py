from __future__ import annotations

import json
from pathlib import Path

import pytest

import simprop
from simprop.ontology import parse_ontology
from simprop.scenario import parse_scenario_config

DATA_DIR = Path(__file__).parent / "data"
DEMO_DIR = simprop.demo_dir()

CONFIG_DEFAULTS = {
    "tests": [["pick_and_place", ["move_to", "perceive_plane", "pick_object", "place_object"]]],
    "test_count": 2,
    "test_launcher": str(DEMO_DIR / "worlds.toml"),
    "model_dir": str(DEMO_DIR / "models"),
    "worlds": ["lab"],
    "model_list": ["glass", "cup"],
    "nav_obstacle_list": ["box"],
    "nav_obstacle_count": 0,
    "location_list": ["coffee_table_front"],
    "object_surfaces": ["coffee_table"],
    "place_object_surfaces": ["coffee_table"],
}


def config_text(bindings: dict | None = None, **overrides) -> str:
    """Render a scenario config as TOML (JSON literals are valid TOML values)."""
    entries = {**CONFIG_DEFAULTS, **overrides}
    lines = [f"{key} = {json.dumps(value)}" for key, value in entries.items()]
    for name, values in (bindings or {}).items():
        lines.append(f"[property_parameter.{name}]")
        lines.append(f"values = {json.dumps(values)}")
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def ontology():
    return parse_ontology(simprop.default_ontology_path())


@pytest.fixture(scope="session")
def demo_config(ontology):
    return parse_scenario_config(DEMO_DIR / "config.toml", ontology)


@pytest.fixture()
def make_config(ontology):
    def build(bindings: dict | None = None, **overrides):
        return parse_scenario_config(config_text(bindings, **overrides), ontology, base_dir=DEMO_DIR)

    return build
