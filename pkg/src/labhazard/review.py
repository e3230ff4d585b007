"""Local HTTP review service: serves triples to human annotators, stores verdicts.

Read-only over pipeline artifacts; annotation records are the only mutable
surface. Endpoints:

    GET  /api/queue?annotator=<id>   next unannotated triple bundle
    GET  /api/triples/<key>          one triple bundle
    GET  /api/images/<key>           image bytes
    POST /api/annotations            store an alignment verdict
    GET  /api/stats                  progress plus pairwise Cohen's kappa

The optional UI directory is served at ``/`` (index.html) and ``/ui/``.
"""

from __future__ import annotations

import json
import re
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable
from urllib.parse import parse_qs, urlparse

from .metrics import cohens_kappa
from .scene_graph import scene_graph_to_value
from .store import DatasetStore

_KEY_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class ValidationFailure(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class ReviewService:
    """Store-backed behavior behind the HTTP handler; directly testable."""

    def __init__(self, store: DatasetStore, clock: Callable[[], float] = time.time):
        self.store = store
        self.clock = clock

    def _ordered_triples(self):
        return self.store.list_triples()

    def triple_bundle(self, key: str) -> dict | None:
        for triple in self._ordered_triples():
            if triple.key != key:
                continue
            scenario = next(
                (s for s in self.store.load_scenarios() if s.id == triple.scenario_id), None
            )
            graph = self.store.get_scene_graph(triple.scenario_id)
            gt = self.store.get_ground_truth(triple.scenario_id)
            return {
                "key": triple.key,
                "scenario_id": triple.scenario_id,
                "replicate_index": triple.replicate_index,
                "subject": scenario.subject if scenario else None,
                "description": scenario.description if scenario else None,
                "topic": scenario.topic if scenario else None,
                "image_url": f"/api/images/{triple.key}",
                "scene_graph": scene_graph_to_value(graph),
                "ground_truth": gt.to_value(),
                "judge_verdict": triple.judge_verdict.value,
                "human_verdicts": [
                    {
                        "annotator_id": v.annotator_id,
                        "aligned": v.aligned,
                        "timestamp": v.timestamp,
                    }
                    for v in triple.human_verdicts
                ],
            }
        return None

    def queue(self, annotator_id: str) -> dict:
        """Next triple this annotator has not labeled, in stable queue order."""
        if not annotator_id:
            raise ValidationFailure("annotator", "annotator id must be non-empty")
        triples = self._ordered_triples()
        labeled = set(self.store.latest_annotations(annotator_id))
        done = sum(1 for t in triples if t.key in labeled)
        progress = {"done": done, "total": len(triples)}
        for triple in triples:
            if triple.key not in labeled:
                bundle = self.triple_bundle(triple.key)
                bundle["progress"] = progress
                return bundle
        return {"done": True, "progress": progress}

    def submit(self, payload: dict) -> dict:
        if not isinstance(payload, dict):
            raise ValidationFailure("$", "body must be a JSON object")
        annotator = payload.get("annotator_id")
        if not isinstance(annotator, str) or not _KEY_RE.match(annotator or ""):
            raise ValidationFailure("annotator_id", "must be a non-empty identifier")
        key = payload.get("key")
        if not isinstance(key, str) or not key:
            raise ValidationFailure("key", "must be a non-empty triple key")
        aligned = payload.get("aligned")
        if not isinstance(aligned, bool):
            raise ValidationFailure("aligned", "must be a boolean")
        reason = payload.get("reason")
        if reason is not None and not isinstance(reason, str):
            raise ValidationFailure("reason", "must be a string when present")
        if self.triple_bundle(key) is None:
            raise KeyError(key)
        history_length = self.store.append_annotation(
            annotator, key, aligned, timestamp=self.clock(), reason=reason
        )
        return {"stored": True, "key": key, "history_length": history_length}

    def stats(self) -> dict:
        """Progress per annotator and live pairwise kappa over shared items."""
        triples = self._ordered_triples()
        annotators = self.store.annotator_ids()
        latest = {a: self.store.latest_annotations(a) for a in annotators}
        pairs = []
        for i, a in enumerate(annotators):
            for b in annotators[i + 1 :]:
                shared = sorted(set(latest[a]) & set(latest[b]))
                kappa = None
                if shared:
                    kappa = cohens_kappa(
                        [latest[a][k]["aligned"] for k in shared],
                        [latest[b][k]["aligned"] for k in shared],
                    )
                pairs.append(
                    {"annotators": [a, b], "shared_items": len(shared), "kappa": kappa}
                )
        return {
            "total": len(triples),
            "annotators": {a: {"completed": len(latest[a])} for a in annotators},
            "pairs": pairs,
        }


class _ReviewHandler(BaseHTTPRequestHandler):
    service: ReviewService = None  # set by make_server
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, value: dict) -> None:
        body = json.dumps(value).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_file(self, path: Path, content_type: str) -> None:
        data = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        parsed = urlparse(self.path)
        path = parsed.path
        try:
            if path == "/api/stats":
                self._send_json(200, self.service.stats())
            elif path == "/api/queue":
                params = parse_qs(parsed.query)
                annotator = (params.get("annotator") or [""])[0]
                self._send_json(200, self.service.queue(annotator))
            elif path.startswith("/api/triples/"):
                bundle = self.service.triple_bundle(path.rsplit("/", 1)[1])
                if bundle is None:
                    self._send_json(404, {"error": "unknown triple key"})
                else:
                    self._send_json(200, bundle)
            elif path.startswith("/api/images/"):
                key = path.rsplit("/", 1)[1]
                scenario_id, _, replicate = key.rpartition("_")
                if not scenario_id or not replicate.isdigit():
                    self._send_json(404, {"error": "unknown image key"})
                    return
                try:
                    data = self.service.store.get_image(scenario_id, int(replicate))
                except KeyError:
                    self._send_json(404, {"error": "unknown image key"})
                    return
                self.send_response(200)
                self.send_header("Content-Type", "image/png")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
            elif self.ui_dir is not None:
                self._serve_ui(path)
            else:
                self._send_json(404, {"error": "not found"})
        except ValidationFailure as exc:
            self._send_json(400, {"error": exc.message, "field": exc.field})

    def _serve_ui(self, path: str) -> None:
        content_types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css"}
        if path == "/":
            candidate = self.ui_dir / "public" / "index.html"
        elif path.startswith("/ui/"):
            name = Path(path[len("/ui/") :]).name  # flat layout; no traversal
            candidate = self.ui_dir / "dist" / name
            if not candidate.exists():
                candidate = self.ui_dir / "public" / name
        else:
            self._send_json(404, {"error": "not found"})
            return
        if not candidate.exists():
            self._send_json(404, {"error": "not found"})
            return
        self._send_file(candidate, content_types.get(candidate.suffix, "application/octet-stream"))

    def do_POST(self):
        parsed = urlparse(self.path)
        if parsed.path != "/api/annotations":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(400, {"error": "body is not valid JSON", "field": "$"})
            return
        try:
            self._send_json(200, self.service.submit(payload))
        except ValidationFailure as exc:
            self._send_json(400, {"error": exc.message, "field": exc.field})
        except KeyError:
            self._send_json(404, {"error": "unknown triple key"})


def make_server(
    store: DatasetStore,
    port: int = 0,
    ui_dir: str | Path | None = None,
    clock: Callable[[], float] = time.time,
) -> ThreadingHTTPServer:
    """Build (but do not start) the review HTTP server; port 0 picks a free port."""
    service = ReviewService(store, clock=clock)
    handler = type(
        "BoundReviewHandler",
        (_ReviewHandler,),
        {"service": service, "ui_dir": Path(ui_dir) if ui_dir else None},
    )
    return ThreadingHTTPServer(("127.0.0.1", port), handler)
