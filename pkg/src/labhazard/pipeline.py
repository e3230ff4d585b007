"""Dataset-construction stages: ground-truth extraction, scene-graph generation,
graph-conditioned image generation, and alignment judging.

Stages are sequential barriers; items within a stage run concurrently up to
gateway budgets, and every store write funnels through the coordinating
thread. Each stage keeps a run manifest, so an interrupted run resumes by
re-executing only its pending items.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .annotations import (
    AssessmentParseError,
    GroundTruth,
    GroundTruthError,
    HazardLabel,
    ScenarioRecord,
    parse_hazard_assessment,
    validate_ground_truth,
)
from .gateway import EndpointRole, ModelEndpoint, ModelRequest, ProviderGateway
from .scene_graph import GraphVariant, SgParseError, parse_scene_graph, serialize_scene_graph
from .store import DatasetStore, RunManifest, Verdict
from .templates_engine import render_prompt, template_hashes

STAGE_EXTRACT_GT = "extract-gt"
STAGE_GEN_SG = "gen-sg"
STAGE_GEN_IMAGES = "gen-images"
STAGE_JUDGE = "judge"

_VERDICT_TOKEN = re.compile(r"\b(NOT_ALIGNED|ALIGNED)\b", re.IGNORECASE)


class StageItemError(Exception):
    """Per-item failure; the item is marked failed and the run continues."""

    def __init__(self, category: str, detail: str):
        super().__init__(f"{category}: {detail}")
        self.category = category
        self.detail = detail


class StageError(RuntimeError):
    """Stage-level failure (bad preconditions, wrong manifest)."""


@dataclass
class PipelineContext:
    """Everything a stage needs: store, gateway, endpoints, clock, parallelism."""

    store: DatasetStore
    gateway: ProviderGateway
    endpoints: Mapping[EndpointRole, ModelEndpoint]
    clock: Callable[[], float] = time.time
    workers: int = 4

    def endpoint(self, role: EndpointRole) -> ModelEndpoint:
        if role not in self.endpoints:
            raise StageError(f"no endpoint configured for role {role.value}")
        return self.endpoints[role]


@dataclass(frozen=True)
class JudgeVerdictRecord:
    scenario_id: str
    replicate_index: int
    verdict: Verdict
    raw_output: str
    structural_note: str | None = None
    hazard_note: str | None = None
    attempt_count: int = 1
    latency: float = 0.0

    def to_value(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "replicate_index": self.replicate_index,
            "verdict": self.verdict.value,
            "raw_output": self.raw_output,
            "criteria_notes": {"structural": self.structural_note, "hazard": self.hazard_note},
            "attempt_count": self.attempt_count,
            "latency": self.latency,
        }


@dataclass
class JudgeAgreementReport:
    judge_id: str
    n_items: int
    agreement_fraction: float
    confusion: dict[str, int] = field(default_factory=dict)
    skipped_non_unanimous: int = 0

    def to_value(self) -> dict:
        return {
            "judge_id": self.judge_id,
            "n_items": self.n_items,
            "agreement_fraction": self.agreement_fraction,
            "confusion": self.confusion,
            "skipped_non_unanimous": self.skipped_non_unanimous,
        }


def _run_stage(
    ctx: PipelineContext,
    run_id: str,
    stage: str,
    endpoint: ModelEndpoint,
    items: Sequence[str],
    execute: Callable[[str], dict],
    commit: Callable[[str, dict], dict],
) -> RunManifest:
    """Generic resumable stage loop.

    ``execute`` runs in worker threads and must not touch the store;
    ``commit`` runs only in this thread and performs all writes. A failed
    item records its category and the run continues; anything fatal
    (BaseException) propagates, leaving unprocessed items pending.
    """
    manifest = ctx.store.load_manifest(run_id)
    if manifest is None:
        manifest = RunManifest(
            run_id=run_id,
            stage=stage,
            endpoint=endpoint.snapshot(),
            template_hashes=template_hashes(),
            started_at=ctx.clock(),
        )
    elif manifest.stage != stage:
        raise StageError(f"manifest {run_id} belongs to stage {manifest.stage!r}, not {stage!r}")
    for item in items:
        manifest.items.setdefault(item, {"status": "pending"})
    ctx.store.save_manifest(manifest)

    pending = [item for item in items if manifest.items[item]["status"] == "pending"]

    def _settle(item: str, outcome: dict | BaseException) -> None:
        if isinstance(outcome, StageItemError):
            manifest.items[item] = {
                "status": "failed",
                "category": outcome.category,
                "error": outcome.detail,
            }
        elif isinstance(outcome, BaseException):
            raise outcome
        else:
            provenance = commit(item, outcome)
            manifest.items[item] = {"status": "done", **(provenance or {})}
        ctx.store.save_manifest(manifest)

    if ctx.workers <= 1:
        for item in pending:
            try:
                payload = execute(item)
            except StageItemError as exc:
                _settle(item, exc)
            else:
                _settle(item, payload)
    else:
        with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
            futures = {pool.submit(execute, item): item for item in pending}
            remaining = set(futures)
            while remaining:
                done, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                for future in done:
                    item = futures[future]
                    try:
                        payload = future.result()
                    except StageItemError as exc:
                        _settle(item, exc)
                    else:
                        _settle(item, payload)

    manifest.finished_at = ctx.clock()
    ctx.store.save_manifest(manifest)
    return manifest


def _require_text(response) -> str:
    if not response.ok:
        raise StageItemError("NoResponse", response.terminal_error)
    return response.text


def _eligible_scenarios(ctx: PipelineContext) -> list[ScenarioRecord]:
    excluded = ctx.store.excluded_scenarios()
    return [s for s in ctx.store.load_scenarios() if s.id not in excluded]


def gt_extraction_bindings(scenario: ScenarioRecord) -> dict[str, str]:
    # The template's own examples write the subject in lowercase.
    return {
        "subject": scenario.subject.lower(),
        "scenario_description": scenario.description,
        "lab_safety_related_issues": scenario.related_issues,
        "lab_safety_topic": scenario.topic,
    }


def run_gt_extraction(ctx: PipelineContext, dry_run: bool = False):
    """Extract one validated ground truth per scenario."""
    scenarios = {s.id: s for s in _eligible_scenarios(ctx)}
    endpoint = ctx.endpoint(EndpointRole.GT_EXTRACTOR)
    prompts = {
        sid: render_prompt("ground_truth_classification", gt_extraction_bindings(s))
        for sid, s in scenarios.items()
    }
    if dry_run:
        return prompts

    def execute(sid: str) -> dict:
        response = ctx.gateway.complete(
            ModelRequest(endpoint=endpoint, prompt=prompts[sid], request_id=f"gt/{sid}")
        )
        text = _require_text(response)
        try:
            assessment = parse_hazard_assessment(text)
        except AssessmentParseError as exc:
            raise StageItemError(exc.category.value, exc.detail) from exc
        try:
            gt = validate_ground_truth(assessment.label, assessment.hazards, assessment.count)
        except GroundTruthError as exc:
            raise StageItemError(f"GroundTruthLaw/{exc.reason}", str(exc)) from exc
        return {"gt": gt, "attempts": response.attempt_count}

    def commit(sid: str, payload: dict) -> dict:
        ctx.store.put_ground_truth(sid, payload["gt"])
        return {"attempts": payload["attempts"]}

    return _run_stage(
        ctx, STAGE_EXTRACT_GT, STAGE_EXTRACT_GT, endpoint, sorted(scenarios), execute, commit
    )


def run_sg_generation(ctx: PipelineContext, dry_run: bool = False):
    """Generate one full-variant scene graph per scenario (depends only on the description)."""
    scenarios = {s.id: s for s in _eligible_scenarios(ctx)}
    endpoint = ctx.endpoint(EndpointRole.SG_GENERATOR)
    prompts = {
        sid: render_prompt("scene_graph_generation", {"scenario_description": s.description})
        for sid, s in scenarios.items()
    }
    if dry_run:
        return prompts

    def execute(sid: str) -> dict:
        response = ctx.gateway.complete(
            ModelRequest(endpoint=endpoint, prompt=prompts[sid], request_id=f"sg/{sid}")
        )
        text = _require_text(response)
        try:
            graph = parse_scene_graph(text, GraphVariant.FULL)
        except SgParseError as exc:
            raise StageItemError(exc.category.value, exc.detail) from exc
        return {"graph": graph, "attempts": response.attempt_count}

    def commit(sid: str, payload: dict) -> dict:
        ctx.store.put_scene_graph(sid, payload["graph"])
        return {"attempts": payload["attempts"]}

    return _run_stage(
        ctx, STAGE_GEN_SG, STAGE_GEN_SG, endpoint, sorted(scenarios), execute, commit
    )


def image_template_for(gt: GroundTruth) -> str:
    return (
        "image_generation_hazardous"
        if gt.label is HazardLabel.HAZARDOUS
        else "image_generation_non_hazardous"
    )


def run_image_generation(ctx: PipelineContext, replicates: int = 5, dry_run: bool = False):
    """Render ``replicates`` images per scenario with the class-matched template."""
    if replicates < 1:
        raise StageError("replicates must be >= 1")
    endpoint = ctx.endpoint(EndpointRole.IMAGE_GENERATOR)
    ready: dict[str, dict] = {}
    for scenario in _eligible_scenarios(ctx):
        if not (
            ctx.store.exists(f"ground_truth/{scenario.id}.json")
            and ctx.store.exists(f"scene_graphs/{scenario.id}.json")
        ):
            continue
        gt = ctx.store.get_ground_truth(scenario.id)
        graph = ctx.store.get_scene_graph(scenario.id)
        template_id = image_template_for(gt)
        ready[scenario.id] = {
            "template_id": template_id,
            "prompt": render_prompt(
                template_id,
                {"subject": scenario.subject, "scene_graph": serialize_scene_graph(graph)},
            ),
            "graph_ref": ctx.store.scene_graph_ref(scenario.id),
        }
    if not ready:
        raise StageError("no scenario has both a ground truth and a scene graph")
    if dry_run:
        return {sid: entry["prompt"] for sid, entry in ready.items()}
    items = [f"{sid}/{rep}" for sid in sorted(ready) for rep in range(replicates)]

    def execute(item: str) -> dict:
        sid, _, rep = item.rpartition("/")
        response = ctx.gateway.generate_image(
            ModelRequest(
                endpoint=endpoint, prompt=ready[sid]["prompt"], request_id=f"img/{sid}/{rep}"
            )
        )
        if not response.ok:
            raise StageItemError("NoResponse", response.terminal_error)
        return {"data": response.image, "attempts": response.attempt_count}

    def commit(item: str, payload: dict) -> dict:
        sid, _, rep = item.rpartition("/")
        ctx.store.put_image(sid, int(rep), payload["data"])
        return {
            "attempts": payload["attempts"],
            "template_id": ready[sid]["template_id"],
            "scene_graph_ref": ready[sid]["graph_ref"],
        }

    return _run_stage(
        ctx, STAGE_GEN_IMAGES, STAGE_GEN_IMAGES, endpoint, items, execute, commit
    )


def extract_judge_verdict(text: str) -> Verdict:
    """First occurrence of either verdict token decides; nothing else does."""
    match = _VERDICT_TOKEN.search(text)
    if match is None:
        return Verdict.JUDGE_PARSE_ERROR
    return Verdict(match.group(1).upper())


def run_alignment_judging(ctx: PipelineContext, dry_run: bool = False):
    """Ask the judge endpoint for an ALIGNED / NOT_ALIGNED verdict per triple."""
    endpoint = ctx.endpoint(EndpointRole.JUDGE)
    scenarios = {s.id: s for s in _eligible_scenarios(ctx)}
    work: dict[str, dict] = {}
    for triple in ctx.store.list_triples():
        if triple.scenario_id not in scenarios:
            continue
        graph = ctx.store.get_scene_graph(triple.scenario_id)
        gt = ctx.store.get_ground_truth(triple.scenario_id)
        prompt = render_prompt(
            "judge_alignment",
            {
                "scene_graph": serialize_scene_graph(graph),
                "ground_truth": json.dumps(gt.to_value(), indent=2) + "\n",
            },
        )
        work[triple.key] = {
            "prompt": prompt,
            "image": ctx.store.image_relpath(triple.scenario_id, triple.replicate_index),
            "scenario_id": triple.scenario_id,
            "replicate_index": triple.replicate_index,
        }
    if not work:
        raise StageError("no complete triples to judge")
    if dry_run:
        return {key: entry["prompt"] for key, entry in work.items()}

    def execute(key: str) -> dict:
        entry = work[key]
        response = ctx.gateway.complete(
            ModelRequest(
                endpoint=endpoint,
                prompt=entry["prompt"],
                images=(entry["image"],),
                request_id=f"judge/{key}",
            )
        )
        text = _require_text(response)
        verdict = extract_judge_verdict(text)
        lowered = text.lower()
        record = JudgeVerdictRecord(
            scenario_id=entry["scenario_id"],
            replicate_index=entry["replicate_index"],
            verdict=verdict,
            raw_output=text,
            structural_note=text if "structur" in lowered else None,
            hazard_note=text if "hazard" in lowered else None,
            attempt_count=response.attempt_count,
            latency=response.latency,
        )
        return {"record": record}

    def commit(key: str, payload: dict) -> dict:
        record: JudgeVerdictRecord = payload["record"]
        ctx.store.put_judgment(record.scenario_id, record.replicate_index, record.to_value())
        return {"verdict": record.verdict.value}

    return _run_stage(
        ctx, STAGE_JUDGE, STAGE_JUDGE, endpoint, sorted(work), execute, commit
    )


def score_judge_agreement(
    judge_id: str,
    judge_verdicts: Mapping[str, Verdict],
    human_labels: Mapping[str, Sequence[bool]],
) -> JudgeAgreementReport:
    """Fraction of shared items where the judge matches the unanimous human label.

    Items with a judge parse error or non-unanimous human labels are skipped.
    """
    confusion: dict[str, int] = {}
    matches = 0
    n_items = 0
    skipped = 0
    for key, verdict in judge_verdicts.items():
        labels = human_labels.get(key)
        if labels is None or verdict not in (Verdict.ALIGNED, Verdict.NOT_ALIGNED):
            continue
        if len(set(labels)) != 1:
            skipped += 1
            continue
        human_aligned = bool(labels[0])
        judge_aligned = verdict is Verdict.ALIGNED
        n_items += 1
        matches += judge_aligned == human_aligned
        bucket = f"{verdict.value}/human_{'aligned' if human_aligned else 'not_aligned'}"
        confusion[bucket] = confusion.get(bucket, 0) + 1
    if n_items == 0:
        raise ValueError("judge and human labels share no usable items")
    return JudgeAgreementReport(
        judge_id=judge_id,
        n_items=n_items,
        agreement_fraction=matches / n_items,
        confusion=dict(sorted(confusion.items())),
        skipped_non_unanimous=skipped,
    )
