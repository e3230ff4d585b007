"""Scene-graph-grounded laboratory hazard dataset builder and VLM evaluation toolkit."""

__version__ = "0.1.0"

from .annotations import (
    GroundTruth,
    HazardAssessment,
    HazardLabel,
    ScenarioRecord,
    parse_hazard_assessment,
    validate_ground_truth,
)
from .scene_graph import (
    GraphVariant,
    SceneGraph,
    SgParseError,
    diff_scene_graphs,
    parse_scene_graph,
    serialize_scene_graph,
    strip_hazard_attributes,
)
from .store import DatasetStore, DatasetTriple, Verdict

__all__ = [
    "DatasetStore",
    "DatasetTriple",
    "GraphVariant",
    "GroundTruth",
    "HazardAssessment",
    "HazardLabel",
    "ScenarioRecord",
    "SceneGraph",
    "SgParseError",
    "Verdict",
    "diff_scene_graphs",
    "parse_hazard_assessment",
    "parse_scene_graph",
    "serialize_scene_graph",
    "strip_hazard_attributes",
    "validate_ground_truth",
]
