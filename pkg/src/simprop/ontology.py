"""Action-property-parameter model: load, validate and query.

The model relates each action to the properties that define its success and
to the parameter designators those properties need. It is stored in a small
TOML document (see ``parse_ontology``) and is immutable after loading.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

DESIGNATOR_KINDS = ("object_id", "surface_id", "location_id", "pose", "scalar")


class OntologyError(ValueError):
    """Malformed or inconsistent ontology document."""


@dataclass(frozen=True)
class ParameterDesignator:
    """Named parameter placeholder; its value is bound at test runtime."""

    name: str
    kind: str
    value: Any = None

    def __post_init__(self):
        if self.kind not in DESIGNATOR_KINDS:
            raise OntologyError(
                f"parameter {self.name!r} has unknown kind {self.kind!r} "
                f"(expected one of {', '.join(DESIGNATOR_KINDS)})"
            )

    def bound(self, value: Any) -> ParameterDesignator:
        return replace(self, value=value)


@dataclass(frozen=True)
class PropertySpec:
    id: str
    needs_parameters: tuple[str, ...]


@dataclass(frozen=True)
class ActionSpec:
    id: str
    performed_in: str
    success_properties: tuple[str, ...]
    parameters: tuple[ParameterDesignator, ...]


@dataclass(frozen=True)
class Ontology:
    actions: dict[str, ActionSpec] = field(default_factory=dict)
    properties: dict[str, PropertySpec] = field(default_factory=dict)
    frames: frozenset[str] = frozenset()


def _require_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise OntologyError(f"unknown key(s) {sorted(unknown)} in {where}")


def _str_list(value: Any, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise OntologyError(f"{where} must be a list of strings")
    return value


def parse_ontology(document: str | Path) -> Ontology:
    """Parse and validate an ontology document.

    `document` is either a path to a TOML file or TOML text. The format:

        [frames]
        declared = ["map", "base_link"]

        [action.<id>]
        performed_in = "<frame>"
        success_properties = ["<property id>", ...]
        parameters = [{name = "<name>", kind = "<kind>"}, ...]

        [property.<id>]
        needs_parameters = ["<parameter name>", ...]

    The schema is closed: unknown keys are an error, as are dangling
    references and duplicate ids (duplicates are rejected by the TOML layer).
    """
    if isinstance(document, Path):
        text = document.read_text()
    else:
        text = document
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise OntologyError(f"syntax error: {exc}") from exc

    _require_keys(doc, {"frames", "action", "property"}, "ontology document")

    frames_table = doc.get("frames", {})
    _require_keys(frames_table, {"declared"}, "[frames]")
    frames = frozenset(_str_list(frames_table.get("declared", []), "frames.declared"))

    properties: dict[str, PropertySpec] = {}
    for pid, body in doc.get("property", {}).items():
        _require_keys(body, {"needs_parameters"}, f"[property.{pid}]")
        needs = _str_list(body.get("needs_parameters", []), f"property.{pid}.needs_parameters")
        if len(set(needs)) != len(needs):
            raise OntologyError(f"property {pid!r} lists a parameter twice")
        properties[pid] = PropertySpec(pid, tuple(needs))

    actions: dict[str, ActionSpec] = {}
    for aid, body in doc.get("action", {}).items():
        _require_keys(
            body, {"performed_in", "success_properties", "parameters"}, f"[action.{aid}]"
        )
        frame = body.get("performed_in")
        if not isinstance(frame, str) or not frame:
            raise OntologyError(f"action {aid!r} needs a performed_in frame")
        if frame not in frames:
            raise OntologyError(f"action {aid!r} performed in undeclared frame {frame!r}")
        succ = _str_list(body.get("success_properties", []), f"action.{aid}.success_properties")
        if not succ:
            raise OntologyError(f"action {aid!r} declares no success properties")
        if len(set(succ)) != len(succ):
            raise OntologyError(f"action {aid!r} lists a success property twice")
        raw_params = body.get("parameters", [])
        if not isinstance(raw_params, list):
            raise OntologyError(f"action.{aid}.parameters must be a list of tables")
        params: list[ParameterDesignator] = []
        for entry in raw_params:
            if not isinstance(entry, dict):
                raise OntologyError(f"action.{aid}.parameters entries must be tables")
            _require_keys(entry, {"name", "kind"}, f"action.{aid}.parameters")
            try:
                params.append(ParameterDesignator(entry["name"], entry["kind"]))
            except KeyError as exc:
                raise OntologyError(
                    f"action.{aid}.parameters entry missing {exc.args[0]!r}"
                ) from exc
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise OntologyError(f"action {aid!r} declares a parameter twice")
        actions[aid] = ActionSpec(aid, frame, tuple(succ), tuple(params))

    if not actions:
        raise OntologyError("no actions declared")

    # Cross-reference checks: success properties exist, and every parameter a
    # property needs is among the declaring action's parameters.
    for action in actions.values():
        declared = {p.name for p in action.parameters}
        for pid in action.success_properties:
            if pid not in properties:
                raise OntologyError(
                    f"action {action.id!r} references undeclared property {pid!r}"
                )
            missing = set(properties[pid].needs_parameters) - declared
            if missing:
                raise OntologyError(
                    f"property {pid!r} of action {action.id!r} needs parameter(s) "
                    f"{sorted(missing)} the action does not declare"
                )

    return Ontology(actions=actions, properties=properties, frames=frames)


def serialize_ontology(o: Ontology) -> str:
    """Render an ontology back to its document format (parse round-trips)."""
    lines = ["[frames]", f"declared = {_toml_str_list(sorted(o.frames))}", ""]
    for action in o.actions.values():
        lines.append(f"[action.{action.id}]")
        lines.append(f'performed_in = "{action.performed_in}"')
        lines.append(f"success_properties = {_toml_str_list(action.success_properties)}")
        params = ", ".join(
            f'{{ name = "{p.name}", kind = "{p.kind}" }}' for p in action.parameters
        )
        lines.append(f"parameters = [{params}]")
        lines.append("")
    for prop in o.properties.values():
        lines.append(f"[property.{prop.id}]")
        lines.append(f"needs_parameters = {_toml_str_list(prop.needs_parameters)}")
        lines.append("")
    return "\n".join(lines)


def _toml_str_list(items) -> str:
    return "[" + ", ".join(f'"{i}"' for i in items) + "]"


def get_action_parameters(o: Ontology, action_id: str) -> list[ParameterDesignator]:
    """The action's declared designators, unresolved."""
    try:
        return list(o.actions[action_id].parameters)
    except KeyError:
        raise OntologyError(f"unknown action {action_id!r}") from None


def get_success_properties(o: Ontology, action_id: str) -> list[PropertySpec]:
    """The action's success properties, in declaration order."""
    try:
        action = o.actions[action_id]
    except KeyError:
        raise OntologyError(f"unknown action {action_id!r}") from None
    return [o.properties[pid] for pid in action.success_properties]


def bind_property_parameters(pp: PropertySpec, bound: dict[str, Any]) -> dict[str, Any]:
    """Restrict resolved action parameters to the ones this property needs."""
    missing = [name for name in pp.needs_parameters if name not in bound]
    if missing:
        raise OntologyError(
            f"property {pp.id!r} needs unbound parameter(s) {missing}"
        )
    return {name: bound[name] for name in pp.needs_parameters}
