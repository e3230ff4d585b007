"""Hazard-detection settings over the final dataset.

Seven settings: textual scene graph with/without the Hazard attribute,
vision only, vision plus either graph variant, scene-graph-guided visual
reasoning (one combined exchange returning graph and assessment), and
SG-guided with targeted hazard attention (a second verification exchange
against a configured hazard taxonomy).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .annotations import (
    AssessmentParseError,
    GroundTruth,
    HazardAssessment,
    HazardLabel,
    ScenarioRecord,
    assessment_from_value,
    parse_hazard_assessment,
)
from .gateway import EndpointRole, ModelEndpoint, ModelRequest
from .metrics import ScoredRecord
from .pipeline import PipelineContext, StageError, StageItemError, _require_text, _run_stage
from .scene_graph import (
    GraphVariant,
    ParseErrorCategory,
    SceneGraph,
    SgParseError,
    load_json_payload,
    scene_graph_to_value,
    serialize_scene_graph,
    strip_hazard_attributes,
    validate_scene_graph_value,
)
from .store import DatasetStore
from .templates_engine import render_prompt


class SettingKind(enum.Enum):
    TSG_PLUS_H = "tsg_plus_h"
    TSG_MINUS_H = "tsg_minus_h"
    V = "v"
    V_TSG_PLUS_H = "v_tsg_plus_h"
    V_TSG_MINUS_H = "v_tsg_minus_h"
    SG_GUIDED = "sg_guided"
    SG_GUIDED_THA = "sg_guided_tha"


TEXT_ONLY_KINDS = frozenset({SettingKind.TSG_PLUS_H, SettingKind.TSG_MINUS_H})
VISION_KINDS = frozenset(
    {
        SettingKind.V,
        SettingKind.V_TSG_PLUS_H,
        SettingKind.V_TSG_MINUS_H,
        SettingKind.SG_GUIDED,
        SettingKind.SG_GUIDED_THA,
    }
)
STRIPPED_KINDS = frozenset({SettingKind.TSG_MINUS_H, SettingKind.V_TSG_MINUS_H})

_TEMPLATE_BY_KIND = {
    SettingKind.TSG_PLUS_H: "detect_scene_graph_only",
    SettingKind.TSG_MINUS_H: "detect_scene_graph_only",
    SettingKind.V: "detect_vision_only",
    SettingKind.V_TSG_PLUS_H: "detect_vision_scene_graph",
    SettingKind.V_TSG_MINUS_H: "detect_vision_scene_graph",
    SettingKind.SG_GUIDED: "detect_sg_guided",
    SettingKind.SG_GUIDED_THA: "detect_sg_guided",
}


class EmptyDatasetError(StageError):
    """The final dataset has no ALIGNED triples to evaluate."""


@dataclass(frozen=True)
class DetectionSetting:
    kind: SettingKind
    endpoint: ModelEndpoint
    hazard_taxonomy: tuple[str, ...] = ()

    def __post_init__(self):
        if self.endpoint.role is not EndpointRole.DETECTOR:
            raise ValueError("detection settings require a detector endpoint")
        if self.kind is SettingKind.SG_GUIDED_THA and not self.hazard_taxonomy:
            raise ValueError("sg_guided_tha requires a non-empty hazard taxonomy")


def parse_combined_sg_guided(text: str) -> tuple[SceneGraph, HazardAssessment]:
    """Parse the single combined SG-guided response: graph plus assessment.

    A response carrying only the graph is a parse failure (the run never
    reached the classification stage).
    """
    value = load_json_payload(text)
    for key in ("scene_graph", "hazard_assessment"):
        if key not in value:
            raise SgParseError(ParseErrorCategory.MISSING_FIELD, "$", f"missing field '{key}'")
    extra = set(value) - {"scene_graph", "hazard_assessment"}
    if extra:
        raise SgParseError(
            ParseErrorCategory.SCHEMA_SHAPE, "$", f"unexpected field '{sorted(extra)[0]}'"
        )
    graph = validate_scene_graph_value(value["scene_graph"], GraphVariant.FULL)
    try:
        assessment = assessment_from_value(value["hazard_assessment"], "$.hazard_assessment")
    except AssessmentParseError as exc:
        raise SgParseError(exc.category, exc.location, exc.detail) from exc
    return graph, assessment


def parse_induced_graph(text: str) -> SceneGraph:
    """Stage-one parse for THA: only the induced graph is consumed downstream."""
    value = load_json_payload(text)
    if "scene_graph" not in value:
        raise SgParseError(ParseErrorCategory.MISSING_FIELD, "$", "missing field 'scene_graph'")
    return validate_scene_graph_value(value["scene_graph"], GraphVariant.FULL)


def parse_verified_hazards(text: str) -> tuple[str, ...]:
    value = load_json_payload(text)
    if "verified_hazards" not in value:
        raise SgParseError(
            ParseErrorCategory.MISSING_FIELD, "$", "missing field 'verified_hazards'"
        )
    extra = set(value) - {"verified_hazards"}
    if extra:
        raise SgParseError(
            ParseErrorCategory.SCHEMA_SHAPE, "$", f"unexpected field '{sorted(extra)[0]}'"
        )
    names = value["verified_hazards"]
    if not isinstance(names, list) or any(not isinstance(h, str) for h in names):
        raise SgParseError(
            ParseErrorCategory.SCHEMA_SHAPE, "$.verified_hazards", "not a list of strings"
        )
    return tuple(names)


def assessment_from_verified(verified: Sequence[str]) -> HazardAssessment:
    """Final THA assessment is forced by the verified set: hazardous iff non-empty."""
    names = tuple(verified)
    label = HazardLabel.HAZARDOUS if names else HazardLabel.NON_HAZARDOUS
    return HazardAssessment(label=label, hazards=names, count=len(names), consistency_flag=True)


def setting_bindings(
    kind: SettingKind, scenario: ScenarioRecord, graph: SceneGraph
) -> dict[str, str]:
    """Template bindings for one triple; TSG_MINUS_H kinds bind the stripped graph."""
    bindings = {"subject": scenario.subject}
    template = _TEMPLATE_BY_KIND[kind]
    if template in ("detect_scene_graph_only", "detect_vision_scene_graph"):
        bound = strip_hazard_attributes(graph) if kind in STRIPPED_KINDS else graph
        bindings["scene_graph"] = serialize_scene_graph(bound)
    return bindings


def run_detection_setting(
    ctx: PipelineContext, setting: DetectionSetting, run_id: str, dry_run: bool = False
):
    """Run one setting over every triple of the final dataset."""
    final = ctx.store.select_final_dataset()
    if not final:
        raise EmptyDatasetError("empty dataset: no ALIGNED triples to evaluate")
    scenarios = {s.id: s for s in ctx.store.load_scenarios()}
    template_id = _TEMPLATE_BY_KIND[setting.kind]
    work: dict[str, dict] = {}
    for triple in final:
        scenario = scenarios[triple.scenario_id]
        graph = ctx.store.get_scene_graph(triple.scenario_id)
        prompt = render_prompt(template_id, setting_bindings(setting.kind, scenario, graph))
        images: tuple[str, ...] = ()
        if setting.kind in VISION_KINDS:
            images = (ctx.store.image_relpath(triple.scenario_id, triple.replicate_index),)
        else:
            assert not images  # text-only settings never attach the image
        work[triple.key] = {
            "scenario_id": triple.scenario_id,
            "replicate_index": triple.replicate_index,
            "subject": scenario.subject,
            "prompt": prompt,
            "images": images,
        }
    if dry_run:
        return {key: entry["prompt"] for key, entry in work.items()}

    manifest_id = f"{run_id}-{setting.kind.value}"

    def execute(key: str) -> dict:
        entry = work[key]
        record: dict = {
            "scenario_id": entry["scenario_id"],
            "replicate_index": entry["replicate_index"],
            "setting": setting.kind.value,
            "status": "parsed",
            "assessment": None,
            "consistency_flag": None,
            "failure_category": None,
            "failure_detail": None,
            "induced_scene_graph": None,
            "verified_hazards": None,
            "raw_output": None,
            "verification_raw_output": None,
            "latency": 0.0,
            "attempt_count": 0,
        }

        def fail(category: str, detail: str) -> dict:
            record["status"] = "failed"
            record["failure_category"] = category
            record["failure_detail"] = detail
            return record

        response = ctx.gateway.complete(
            ModelRequest(
                endpoint=setting.endpoint,
                prompt=entry["prompt"],
                images=entry["images"],
                request_id=f"{run_id}/{setting.kind.value}/{key}",
            )
        )
        record["latency"] = response.latency
        record["attempt_count"] = response.attempt_count
        if not response.ok:
            return fail(ParseErrorCategory.NO_RESPONSE.value, response.terminal_error)
        record["raw_output"] = response.text

        if setting.kind is SettingKind.SG_GUIDED:
            try:
                graph, assessment = parse_combined_sg_guided(response.text)
            except SgParseError as exc:
                return fail(exc.category.value, exc.detail)
            record["induced_scene_graph"] = scene_graph_to_value(graph)
        elif setting.kind is SettingKind.SG_GUIDED_THA:
            try:
                graph = parse_induced_graph(response.text)
            except SgParseError as exc:
                return fail(exc.category.value, exc.detail)
            record["induced_scene_graph"] = scene_graph_to_value(graph)
            verification_prompt = render_prompt(
                "tha_verification",
                {
                    "subject": entry["subject"],
                    "scene_graph": serialize_scene_graph(graph),
                    "hazard_taxonomy": json.dumps(list(setting.hazard_taxonomy)),
                },
            )
            verification = ctx.gateway.complete(
                ModelRequest(
                    endpoint=setting.endpoint,
                    prompt=verification_prompt,
                    images=entry["images"],
                    request_id=f"{run_id}/{setting.kind.value}/{key}/verify",
                )
            )
            record["latency"] += verification.latency
            record["attempt_count"] += verification.attempt_count
            if not verification.ok:
                return fail(ParseErrorCategory.NO_RESPONSE.value, verification.terminal_error)
            record["verification_raw_output"] = verification.text
            try:
                verified = parse_verified_hazards(verification.text)
            except SgParseError as exc:
                return fail(exc.category.value, exc.detail)
            record["verified_hazards"] = list(verified)
            assessment = assessment_from_verified(verified)
        else:
            try:
                assessment = parse_hazard_assessment(response.text)
            except AssessmentParseError as exc:
                return fail(exc.category.value, exc.detail)

        record["assessment"] = assessment.to_value()
        record["consistency_flag"] = assessment.consistency_flag
        return record

    def commit(key: str, record: dict) -> dict:
        ctx.store.put_prediction(run_id, setting.kind.value, key, record)
        return {"outcome": record["status"]}

    return _run_stage(
        ctx,
        manifest_id,
        f"evaluate/{setting.kind.value}",
        setting.endpoint,
        sorted(work),
        execute,
        commit,
    )


def scored_records(
    store: DatasetStore,
    run_id: str,
    setting_value: str,
    scenarios: Mapping[str, ScenarioRecord] | None = None,
) -> list[ScoredRecord]:
    """Join prediction records with ground truths for the metrics engine."""
    if scenarios is None:
        scenarios = {s.id: s for s in store.load_scenarios()}
    records = []
    for key, value in store.load_predictions(run_id, setting_value).items():
        scenario_id = value["scenario_id"]
        gt: GroundTruth = store.get_ground_truth(scenario_id)
        parsed = value["status"] == "parsed"
        assessment = value.get("assessment") or {}
        records.append(
            ScoredRecord(
                subject=scenarios[scenario_id].subject,
                parsed=parsed,
                predicted_hazardous=assessment.get("classification") == "hazardous",
                predicted_count=assessment.get("hazards_count", 0),
                true_hazardous=gt.label is HazardLabel.HAZARDOUS,
                true_count=gt.count,
            )
        )
    return records
