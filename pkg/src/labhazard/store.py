"""Content-addressed, resumable, write-once persistence for pipeline artifacts.

Layout under the store root::

    scenarios.jsonl
    ground_truth/<id>.json
    scene_graphs/<id>.json
    images/<id>_<replicate>.png
    judgments/<id>_<replicate>.json
    annotations/<annotator>/<id>_<replicate>.json
    predictions/<run_id>/<setting>/<id>_<replicate>.json
    reports/<run_id>.json
    manifests/<run_id>.json

Artifacts are write-once: re-putting identical content is a no-op, putting
different content under an existing key is a conflict. Annotations are the
one mutable surface (append-only history, latest wins). All writes are
atomic (write to a staging file, then rename); the staging directory is
swept when the store is opened, so an interrupted run leaves no debris.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import GroundTruth, ScenarioRecord
from .scene_graph import GraphVariant, SceneGraph, parse_scene_graph, serialize_scene_graph


class StoreConflictError(RuntimeError):
    """A logical key already holds different bytes (write-once violation)."""


class MissingArtifactError(KeyError):
    """A requested artifact does not exist in the store."""


class Verdict(enum.Enum):
    ALIGNED = "ALIGNED"
    NOT_ALIGNED = "NOT_ALIGNED"
    JUDGE_PARSE_ERROR = "JUDGE_PARSE_ERROR"
    PENDING = "PENDING"


@dataclass(frozen=True)
class HumanVerdict:
    annotator_id: str
    aligned: bool
    timestamp: float
    reason: str | None = None


@dataclass(frozen=True)
class DatasetTriple:
    """One aligned-or-pending <image, scene graph, ground truth> record."""

    scenario_id: str
    replicate_index: int
    image_ref: str
    scene_graph_ref: str
    ground_truth_ref: str
    judge_verdict: Verdict = Verdict.PENDING
    human_verdicts: tuple[HumanVerdict, ...] = ()

    @property
    def key(self) -> str:
        return f"{self.scenario_id}_{self.replicate_index}"


@dataclass
class RunManifest:
    """Per-stage bookkeeping that makes interrupted runs resumable."""

    run_id: str
    stage: str
    endpoint: dict = field(default_factory=dict)
    template_hashes: dict = field(default_factory=dict)
    items: dict[str, dict] = field(default_factory=dict)
    started_at: float = 0.0
    finished_at: float | None = None

    def pending_items(self) -> list[str]:
        return [key for key, entry in self.items.items() if entry.get("status") == "pending"]

    def counts(self) -> dict[str, int]:
        counts = {"done": 0, "failed": 0, "pending": 0}
        for entry in self.items.values():
            counts[entry.get("status", "pending")] += 1
        return counts

    def to_value(self) -> dict:
        return {
            "run_id": self.run_id,
            "stage": self.stage,
            "endpoint": self.endpoint,
            "template_hashes": self.template_hashes,
            "items": self.items,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_value(cls, value: dict) -> "RunManifest":
        return cls(
            run_id=value["run_id"],
            stage=value["stage"],
            endpoint=value.get("endpoint", {}),
            template_hashes=value.get("template_hashes", {}),
            items=value.get("items", {}),
            started_at=value.get("started_at", 0.0),
            finished_at=value.get("finished_at"),
        )


def content_address(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _dump_json(value: dict) -> bytes:
    return (json.dumps(value, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


class DatasetStore:
    SUBDIRS = (
        "ground_truth",
        "scene_graphs",
        "images",
        "judgments",
        "annotations",
        "predictions",
        "reports",
        "manifests",
    )

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        staging = self.root / ".staging"
        if staging.exists():
            for leftover in staging.iterdir():
                leftover.unlink()
        staging.mkdir(exist_ok=True)

    # -- low-level write-once bytes ------------------------------------

    def _path(self, relpath: str) -> Path:
        return self.root / relpath

    def put_bytes(self, relpath: str, data: bytes) -> str:
        """Write-once atomic put; returns the content address."""
        path = self._path(relpath)
        if path.exists():
            existing = path.read_bytes()
            if existing == data:
                return content_address(data)
            raise StoreConflictError(f"{relpath} already holds different content")
        path.parent.mkdir(parents=True, exist_ok=True)
        staged = self.root / ".staging" / relpath.replace("/", "__")
        staged.write_bytes(data)
        os.replace(staged, path)
        return content_address(data)

    def get_bytes(self, relpath: str) -> bytes:
        path = self._path(relpath)
        if not path.exists():
            raise MissingArtifactError(relpath)
        return path.read_bytes()

    def _write_mutable(self, relpath: str, data: bytes) -> None:
        path = self._path(relpath)
        path.parent.mkdir(parents=True, exist_ok=True)
        staged = self.root / ".staging" / relpath.replace("/", "__")
        staged.write_bytes(data)
        os.replace(staged, path)

    def exists(self, relpath: str) -> bool:
        return self._path(relpath).exists()

    # -- scenarios ------------------------------------------------------

    def write_scenarios(self, scenarios: list[ScenarioRecord]) -> str:
        ids = [s.id for s in scenarios]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario ids must be unique across the corpus")
        payload = "".join(s.to_json_line() + "\n" for s in scenarios).encode("utf-8")
        return self.put_bytes("scenarios.jsonl", payload)

    def load_scenarios(self) -> list[ScenarioRecord]:
        raw = self.get_bytes("scenarios.jsonl").decode("utf-8")
        records = [ScenarioRecord.from_json_line(line) for line in raw.splitlines() if line.strip()]
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError("scenario ids must be unique across the corpus")
        return records

    def excluded_scenarios(self) -> set[str]:
        """Operator-maintained exclusion list (ids that need non-visual context)."""
        if not self.exists("excluded_scenarios.json"):
            return set()
        return set(json.loads(self.get_bytes("excluded_scenarios.json")))

    # -- ground truth -----------------------------------------------------

    def put_ground_truth(self, scenario_id: str, gt: GroundTruth) -> str:
        return self.put_bytes(f"ground_truth/{scenario_id}.json", _dump_json(gt.to_value()))

    def get_ground_truth(self, scenario_id: str) -> GroundTruth:
        value = json.loads(self.get_bytes(f"ground_truth/{scenario_id}.json"))
        return GroundTruth.from_value(value)

    def ground_truth_ref(self, scenario_id: str) -> str:
        return content_address(self.get_bytes(f"ground_truth/{scenario_id}.json"))

    # -- scene graphs ----------------------------------------------------

    def put_scene_graph(self, scenario_id: str, graph: SceneGraph) -> str:
        data = serialize_scene_graph(graph).encode("utf-8")
        return self.put_bytes(f"scene_graphs/{scenario_id}.json", data)

    def get_scene_graph(
        self, scenario_id: str, variant: GraphVariant = GraphVariant.FULL
    ) -> SceneGraph:
        raw = self.get_bytes(f"scene_graphs/{scenario_id}.json").decode("utf-8")
        return parse_scene_graph(raw, variant)

    def scene_graph_ref(self, scenario_id: str) -> str:
        return content_address(self.get_bytes(f"scene_graphs/{scenario_id}.json"))

    # -- images -----------------------------------------------------------

    def image_relpath(self, scenario_id: str, replicate: int) -> str:
        return f"images/{scenario_id}_{replicate}.png"

    def put_image(self, scenario_id: str, replicate: int, data: bytes) -> str:
        return self.put_bytes(self.image_relpath(scenario_id, replicate), data)

    def get_image(self, scenario_id: str, replicate: int) -> bytes:
        return self.get_bytes(self.image_relpath(scenario_id, replicate))

    # -- judgments ----------------------------------------------------------

    def put_judgment(self, scenario_id: str, replicate: int, record: dict) -> str:
        return self.put_bytes(f"judgments/{scenario_id}_{replicate}.json", _dump_json(record))

    def get_judgment(self, scenario_id: str, replicate: int) -> dict:
        return json.loads(self.get_bytes(f"judgments/{scenario_id}_{replicate}.json"))

    # -- annotations (mutable surface: append-only history) -----------------

    def annotation_relpath(self, annotator_id: str, key: str) -> str:
        return f"annotations/{annotator_id}/{key}.json"

    def append_annotation(
        self,
        annotator_id: str,
        key: str,
        aligned: bool,
        timestamp: float,
        reason: str | None = None,
    ) -> int:
        """Record a verdict; identical repeat submissions are no-ops.

        Returns the resulting history length.
        """
        relpath = self.annotation_relpath(annotator_id, key)
        history: list[dict] = []
        if self.exists(relpath):
            history = json.loads(self.get_bytes(relpath))["history"]
        entry = {
            "annotator_id": annotator_id,
            "key": key,
            "aligned": aligned,
            "reason": reason,
            "timestamp": timestamp,
        }
        if history:
            last = history[-1]
            if last["aligned"] == aligned and last.get("reason") == reason:
                return len(history)
        history.append(entry)
        self._write_mutable(relpath, _dump_json({"history": history}))
        return len(history)

    def annotation_history(self, annotator_id: str, key: str) -> list[dict]:
        relpath = self.annotation_relpath(annotator_id, key)
        if not self.exists(relpath):
            return []
        return json.loads(self.get_bytes(relpath))["history"]

    def latest_annotations(self, annotator_id: str) -> dict[str, dict]:
        base = self.root / "annotations" / annotator_id
        if not base.exists():
            return {}
        latest: dict[str, dict] = {}
        for path in sorted(base.glob("*.json")):
            history = json.loads(path.read_bytes())["history"]
            if history:
                latest[path.stem] = history[-1]
        return latest

    def annotator_ids(self) -> list[str]:
        base = self.root / "annotations"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    # -- predictions ----------------------------------------------------------

    def prediction_relpath(self, run_id: str, setting: str, key: str) -> str:
        return f"predictions/{run_id}/{setting}/{key}.json"

    def put_prediction(self, run_id: str, setting: str, key: str, record: dict) -> str:
        return self.put_bytes(self.prediction_relpath(run_id, setting, key), _dump_json(record))

    def load_predictions(self, run_id: str, setting: str) -> dict[str, dict]:
        base = self.root / "predictions" / run_id / setting
        if not base.exists():
            return {}
        return {p.stem: json.loads(p.read_bytes()) for p in sorted(base.glob("*.json"))}

    def settings_for_run(self, run_id: str) -> list[str]:
        base = self.root / "predictions" / run_id
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    # -- reports and manifests ---------------------------------------------

    def put_report(self, run_id: str, value: dict) -> str:
        self._write_mutable(f"reports/{run_id}.json", _dump_json(value))
        return f"reports/{run_id}.json"

    def get_report(self, run_id: str) -> dict:
        return json.loads(self.get_bytes(f"reports/{run_id}.json"))

    def save_manifest(self, manifest: RunManifest) -> None:
        self._write_mutable(f"manifests/{manifest.run_id}.json", _dump_json(manifest.to_value()))

    def load_manifest(self, run_id: str) -> RunManifest | None:
        relpath = f"manifests/{run_id}.json"
        if not self.exists(relpath):
            return None
        return RunManifest.from_value(json.loads(self.get_bytes(relpath)))

    # -- triples and the final dataset ----------------------------------------

    def _human_verdicts(self, key: str) -> tuple[HumanVerdict, ...]:
        verdicts = []
        for annotator_id in self.annotator_ids():
            latest = self.latest_annotations(annotator_id).get(key)
            if latest is not None:
                verdicts.append(
                    HumanVerdict(
                        annotator_id=annotator_id,
                        aligned=latest["aligned"],
                        timestamp=latest["timestamp"],
                        reason=latest.get("reason"),
                    )
                )
        return tuple(verdicts)

    def list_triples(self) -> list[DatasetTriple]:
        """Every (scenario, replicate) with an image, graph, and ground truth."""
        images_dir = self.root / "images"
        if not images_dir.exists():
            return []
        triples = []
        for path in images_dir.glob("*.png"):
            stem, _, replicate_text = path.stem.rpartition("_")
            if not stem or not replicate_text.isdigit():
                continue
            replicate = int(replicate_text)
            if not (
                self.exists(f"scene_graphs/{stem}.json")
                and self.exists(f"ground_truth/{stem}.json")
            ):
                continue
            key = f"{stem}_{replicate}"
            verdict = Verdict.PENDING
            if self.exists(f"judgments/{key}.json"):
                verdict = Verdict(self.get_judgment(stem, replicate)["verdict"])
            triples.append(
                DatasetTriple(
                    scenario_id=stem,
                    replicate_index=replicate,
                    image_ref=content_address(path.read_bytes()),
                    scene_graph_ref=self.scene_graph_ref(stem),
                    ground_truth_ref=self.ground_truth_ref(stem),
                    judge_verdict=verdict,
                    human_verdicts=self._human_verdicts(key),
                )
            )
        triples.sort(key=lambda t: (t.scenario_id, t.replicate_index))
        return triples

    def select_final_dataset(self) -> list[DatasetTriple]:
        """Exactly the ALIGNED triples, stable-ordered by (scenario, replicate)."""
        return [t for t in self.list_triples() if t.judge_verdict is Verdict.ALIGNED]

    def filter_summary(self) -> dict:
        """Counts in/out of alignment filtering (the retained-of-generated shape)."""
        triples = self.list_triples()
        by_verdict = {v.value: 0 for v in Verdict}
        for triple in triples:
            by_verdict[triple.judge_verdict.value] += 1
        return {
            "generated": len(triples),
            "retained": by_verdict[Verdict.ALIGNED.value],
            "by_verdict": by_verdict,
            "unique_scenarios_retained": len(
                {t.scenario_id for t in triples if t.judge_verdict is Verdict.ALIGNED}
            ),
        }

    def dataset_statistics(self) -> dict:
        """Per-subject hazardous/non-hazardous counts and shares for the final dataset."""
        from .annotations import SUBJECTS, HazardLabel

        scenarios = {s.id: s for s in self.load_scenarios()} if self.exists("scenarios.jsonl") else {}
        final = self.select_final_dataset()
        table = {
            subject: {"hazardous": 0, "non_hazardous": 0, "total": 0} for subject in SUBJECTS
        }
        hazardous_total = 0
        for triple in final:
            scenario = scenarios.get(triple.scenario_id)
            if scenario is None:
                continue
            gt = self.get_ground_truth(triple.scenario_id)
            row = table[scenario.subject]
            row["total"] += 1
            if gt.label is HazardLabel.HAZARDOUS:
                row["hazardous"] += 1
                hazardous_total += 1
            else:
                row["non_hazardous"] += 1
        total = sum(row["total"] for row in table.values())
        shares = {
            "hazardous_percent": 100.0 * hazardous_total / total if total else 0.0,
            "non_hazardous_percent": 100.0 * (total - hazardous_total) / total if total else 0.0,
        }
        return {"total": total, "by_subject": table, "shares": shares}
