"""Scene-graph data model: parsing, validation, canonical serialization, diffing.

A scene graph is a directed attributed graph. Nodes are objects with two
fixed attribute fields, State and Hazard; edges are subject-predicate-object
triples. A "full" graph carries both attribute fields on every node, a
"reduced" graph carries only State. The literal string "N/A" is a preserved
sentinel meaning "attribute does not apply"; absence of the Hazard field is
reserved for the reduced variant.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field


class GraphVariant(enum.Enum):
    FULL = "full"
    REDUCED = "reduced"


class ParseErrorCategory(enum.Enum):
    """Total taxonomy of structured-output rejection reasons.

    Every rejected input maps to exactly one category; the parsing-error
    rate metric counts these downstream.
    """

    NOT_JSON = "NotJson"
    SCHEMA_SHAPE = "SchemaShape"
    MISSING_FIELD = "MissingField"
    DANGLING_EDGE = "DanglingEdge"
    DUPLICATE_NODE = "DuplicateNode"
    DUPLICATE_EDGE = "DuplicateEdge"
    EMPTY_IDENTIFIER = "EmptyIdentifier"
    WRONG_ENUM_VALUE = "WrongEnumValue"
    NO_RESPONSE = "NoResponse"


class SgParseError(Exception):
    """Raised when text cannot be parsed into a valid scene graph."""

    def __init__(self, category: ParseErrorCategory, location: str, detail: str):
        super().__init__(f"{category.value} at {location}: {detail}")
        self.category = category
        self.location = location
        self.detail = detail


class VariantError(ValueError):
    """Raised when an operation receives a graph of the wrong variant."""


@dataclass(frozen=True)
class AttributeMap:
    """Fixed two-field attribute map; hazard is None only in reduced graphs."""

    state: str
    hazard: str | None = None


@dataclass(frozen=True)
class Node:
    object_name: str
    attributes: AttributeMap


@dataclass(frozen=True)
class Relationship:
    subject: str
    predicate: str
    object: str


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[Node, ...]
    relationships: tuple[Relationship, ...]
    variant: GraphVariant = GraphVariant.FULL

    def node_names(self) -> tuple[str, ...]:
        return tuple(n.object_name for n in self.nodes)


@dataclass
class SceneGraphDiff:
    """Structural difference between two same-variant graphs.

    ``reflexive_edges`` is advisory (edges whose subject equals their
    object, in either graph); it does not affect emptiness.
    """

    added_nodes: list[str] = field(default_factory=list)
    removed_nodes: list[str] = field(default_factory=list)
    changed_attributes: list[tuple[str, str, str | None, str | None]] = field(default_factory=list)
    added_edges: list[tuple[str, str, str]] = field(default_factory=list)
    removed_edges: list[tuple[str, str, str]] = field(default_factory=list)
    node_order_changed: bool = False
    edge_order_changed: bool = False
    reflexive_edges: list[tuple[str, str, str]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.added_nodes
            or self.removed_nodes
            or self.changed_attributes
            or self.added_edges
            or self.removed_edges
            or self.node_order_changed
            or self.edge_order_changed
        )


def extract_json_object(raw: str) -> str:
    """Return the outermost balanced ``{...}`` region of ``raw``.

    Model output often wraps JSON in prose or fenced code blocks; the fence
    markers need no special handling because extraction starts at the first
    ``{``. String literals and escapes are respected while balancing.
    """
    start = raw.find("{")
    if start < 0:
        raise SgParseError(ParseErrorCategory.NOT_JSON, "$", "no JSON object found")
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(raw)):
        ch = raw[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return raw[start : i + 1]
    raise SgParseError(ParseErrorCategory.NOT_JSON, "$", "unbalanced JSON object")


def load_json_payload(raw: str) -> dict:
    """Extract and decode the outermost JSON object of arbitrary model text."""
    region = extract_json_object(raw)
    try:
        value = json.loads(region)
    except json.JSONDecodeError as exc:
        raise SgParseError(ParseErrorCategory.NOT_JSON, "$", f"invalid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise SgParseError(ParseErrorCategory.NOT_JSON, "$", "top-level value is not an object")
    return value


def _require_keys(obj: dict, required: tuple[str, ...], location: str) -> None:
    for key in required:
        if key not in obj:
            raise SgParseError(ParseErrorCategory.MISSING_FIELD, location, f"missing field '{key}'")
    extra = set(obj) - set(required)
    if extra:
        name = sorted(extra)[0]
        raise SgParseError(
            ParseErrorCategory.SCHEMA_SHAPE, location, f"unexpected field '{name}'"
        )


def validate_scene_graph_value(value: object, expected_variant: GraphVariant) -> SceneGraph:
    """Validate an already-decoded JSON value against the wire schema and graph laws.

    Validation order is fixed (first failure wins): document shape, then
    per-node shape, per-edge shape, then graph laws (node uniqueness and
    identifiers, then edge endpoints and duplicates).
    """
    if not isinstance(value, dict):
        raise SgParseError(ParseErrorCategory.SCHEMA_SHAPE, "$", "scene graph is not an object")
    _require_keys(value, ("nodes", "relationships"), "$")
    raw_nodes = value["nodes"]
    raw_edges = value["relationships"]
    if not isinstance(raw_nodes, list):
        raise SgParseError(ParseErrorCategory.SCHEMA_SHAPE, "$.nodes", "'nodes' is not a list")
    if not isinstance(raw_edges, list):
        raise SgParseError(
            ParseErrorCategory.SCHEMA_SHAPE, "$.relationships", "'relationships' is not a list"
        )

    attr_keys = ("State", "Hazard") if expected_variant is GraphVariant.FULL else ("State",)
    nodes: list[Node] = []
    for i, entry in enumerate(raw_nodes):
        loc = f"$.nodes[{i}]"
        if not isinstance(entry, dict):
            raise SgParseError(ParseErrorCategory.SCHEMA_SHAPE, loc, "node is not an object")
        _require_keys(entry, ("object_name", "attributes"), loc)
        name = entry["object_name"]
        if not isinstance(name, str):
            raise SgParseError(ParseErrorCategory.SCHEMA_SHAPE, loc, "'object_name' is not a string")
        attrs = entry["attributes"]
        if not isinstance(attrs, dict):
            raise SgParseError(
                ParseErrorCategory.SCHEMA_SHAPE, f"{loc}.attributes", "'attributes' is not an object"
            )
        _require_keys(attrs, attr_keys, f"{loc}.attributes")
        for key in attr_keys:
            if not isinstance(attrs[key], str):
                raise SgParseError(
                    ParseErrorCategory.SCHEMA_SHAPE,
                    f"{loc}.attributes.{key}",
                    f"'{key}' is not a string",
                )
        hazard = attrs["Hazard"] if expected_variant is GraphVariant.FULL else None
        nodes.append(Node(name, AttributeMap(state=attrs["State"], hazard=hazard)))

    edges: list[Relationship] = []
    for i, entry in enumerate(raw_edges):
        loc = f"$.relationships[{i}]"
        if not isinstance(entry, dict):
            raise SgParseError(ParseErrorCategory.SCHEMA_SHAPE, loc, "relationship is not an object")
        _require_keys(entry, ("subject", "predicate", "object"), loc)
        for key in ("subject", "predicate", "object"):
            if not isinstance(entry[key], str):
                raise SgParseError(
                    ParseErrorCategory.SCHEMA_SHAPE, f"{loc}.{key}", f"'{key}' is not a string"
                )
        edges.append(Relationship(entry["subject"], entry["predicate"], entry["object"]))

    # Graph laws: node identifiers first, then edge endpoints.
    seen_names: set[str] = set()
    for i, node in enumerate(nodes):
        loc = f"$.nodes[{i}]"
        if not node.object_name:
            raise SgParseError(ParseErrorCategory.EMPTY_IDENTIFIER, loc, "empty object_name")
        if node.object_name in seen_names:
            raise SgParseError(
                ParseErrorCategory.DUPLICATE_NODE, loc, f"duplicate node '{node.object_name}'"
            )
        seen_names.add(node.object_name)

    seen_edges: set[tuple[str, str, str]] = set()
    for i, edge in enumerate(edges):
        loc = f"$.relationships[{i}]"
        if not edge.predicate:
            raise SgParseError(ParseErrorCategory.EMPTY_IDENTIFIER, loc, "empty predicate")
        for endpoint in (edge.subject, edge.object):
            if endpoint not in seen_names:
                raise SgParseError(
                    ParseErrorCategory.DANGLING_EDGE,
                    loc,
                    f"'{endpoint}' does not name a node",
                )
        triple = (edge.subject, edge.predicate, edge.object)
        if triple in seen_edges:
            raise SgParseError(
                ParseErrorCategory.DUPLICATE_EDGE, loc, f"duplicate relationship {triple}"
            )
        seen_edges.add(triple)

    return SceneGraph(tuple(nodes), tuple(edges), expected_variant)


def parse_scene_graph(raw: str, expected_variant: GraphVariant = GraphVariant.FULL) -> SceneGraph:
    """Parse arbitrary model text into a validated scene graph.

    Raises SgParseError carrying the category of the first violated law.
    """
    return validate_scene_graph_value(load_json_payload(raw), expected_variant)


def scene_graph_to_value(g: SceneGraph) -> dict:
    """Build the wire-schema dict with keys in canonical order."""
    nodes = []
    for node in g.nodes:
        attrs: dict[str, str] = {"State": node.attributes.state}
        if g.variant is GraphVariant.FULL:
            attrs["Hazard"] = node.attributes.hazard or ""
        nodes.append({"object_name": node.object_name, "attributes": attrs})
    edges = [
        {"subject": e.subject, "predicate": e.predicate, "object": e.object}
        for e in g.relationships
    ]
    return {"nodes": nodes, "relationships": edges}


def serialize_scene_graph(g: SceneGraph) -> str:
    """Deterministic canonical text form; parse(serialize(g)) reproduces g."""
    return json.dumps(scene_graph_to_value(g), indent=2, ensure_ascii=False) + "\n"


def strip_hazard_attributes(g: SceneGraph) -> SceneGraph:
    """Drop every node's Hazard field, preserving all other content and order."""
    if g.variant is not GraphVariant.FULL:
        raise VariantError("graph is already in the reduced variant")
    nodes = tuple(
        Node(n.object_name, AttributeMap(state=n.attributes.state, hazard=None)) for n in g.nodes
    )
    return SceneGraph(nodes, g.relationships, GraphVariant.REDUCED)


def diff_scene_graphs(a: SceneGraph, b: SceneGraph) -> SceneGraphDiff:
    """Structural diff; empty iff the canonical serializations are equal."""
    if a.variant is not b.variant:
        raise VariantError(f"variant mismatch: {a.variant.value} vs {b.variant.value}")
    diff = SceneGraphDiff()
    a_nodes = {n.object_name: n.attributes for n in a.nodes}
    b_nodes = {n.object_name: n.attributes for n in b.nodes}
    diff.added_nodes = [name for name in b_nodes if name not in a_nodes]
    diff.removed_nodes = [name for name in a_nodes if name not in b_nodes]
    for name, attrs in a_nodes.items():
        other = b_nodes.get(name)
        if other is None:
            continue
        if attrs.state != other.state:
            diff.changed_attributes.append((name, "State", attrs.state, other.state))
        if attrs.hazard != other.hazard:
            diff.changed_attributes.append((name, "Hazard", attrs.hazard, other.hazard))
    a_edges = {(e.subject, e.predicate, e.object) for e in a.relationships}
    b_edges = {(e.subject, e.predicate, e.object) for e in b.relationships}
    diff.added_edges = sorted(b_edges - a_edges)
    diff.removed_edges = sorted(a_edges - b_edges)
    if not diff.added_nodes and not diff.removed_nodes:
        diff.node_order_changed = a.node_names() != b.node_names()
    if not diff.added_edges and not diff.removed_edges:
        diff.edge_order_changed = a.relationships != b.relationships
    diff.reflexive_edges = sorted(
        {
            (e.subject, e.predicate, e.object)
            for g in (a, b)
            for e in g.relationships
            if e.subject == e.object
        }
    )
    return diff
