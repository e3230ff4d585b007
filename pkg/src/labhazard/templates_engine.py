"""Prompt template resources: loading, placeholder substitution, hash pinning.

Templates are evidence, not code: the files under ``templates/`` are shipped
byte-exact and pinned by sha256 in ``templates/manifest.json``. Rendering is
a single-pass splice that touches nothing but the placeholder spans.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")

TEMPLATE_IDS = (
    "scene_graph_generation",
    "ground_truth_classification",
    "image_generation_hazardous",
    "image_generation_non_hazardous",
    "detect_vision_only",
    "detect_scene_graph_only",
    "detect_vision_scene_graph",
    "detect_sg_guided",
    "judge_alignment",
    "tha_verification",
)


class TemplateError(ValueError):
    """Raised for unknown templates, missing bindings, or unknown bindings."""


@dataclass(frozen=True)
class TemplateInfo:
    template_id: str
    file: str
    sha256: str
    placeholders: tuple[str, ...]
    origin: str  # "reference-verbatim" or "artifact-authored"


def _templates_root() -> Path:
    return Path(str(resources.files("labhazard").joinpath("templates")))


def template_path(template_id: str, root: Path | None = None) -> Path:
    if template_id not in TEMPLATE_IDS:
        raise TemplateError(f"unknown template id {template_id!r}")
    return (root or _templates_root()) / f"{template_id}.txt"


def load_template(template_id: str, root: Path | None = None) -> str:
    return template_path(template_id, root).read_text(encoding="utf-8")


def scan_placeholders(text: str) -> tuple[str, ...]:
    """All distinct placeholder names in template order of first occurrence."""
    seen: list[str] = []
    for match in PLACEHOLDER_RE.finditer(text):
        name = match.group(1)
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def render_prompt(
    template_id: str, bindings: Mapping[str, str], root: Path | None = None
) -> str:
    """Substitute every placeholder of the template, byte-exactly.

    Bindings must cover exactly the template's placeholder set; substituted
    values are never re-scanned for placeholders.
    """
    text = load_template(template_id, root)
    required = set(scan_placeholders(text))
    missing = required - set(bindings)
    if missing:
        raise TemplateError(f"{template_id}: missing binding(s) {sorted(missing)}")
    unknown = set(bindings) - required
    if unknown:
        raise TemplateError(f"{template_id}: unknown binding(s) {sorted(unknown)}")
    parts: list[str] = []
    pos = 0
    for match in PLACEHOLDER_RE.finditer(text):
        parts.append(text[pos : match.start()])
        parts.append(str(bindings[match.group(1)]))
        pos = match.end()
    parts.append(text[pos:])
    return "".join(parts)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_manifest(root: Path | None = None) -> dict[str, TemplateInfo]:
    root = root or _templates_root()
    raw = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    manifest: dict[str, TemplateInfo] = {}
    for template_id, entry in raw["templates"].items():
        manifest[template_id] = TemplateInfo(
            template_id=template_id,
            file=entry["file"],
            sha256=entry["sha256"],
            placeholders=tuple(entry["placeholders"]),
            origin=entry["origin"],
        )
    return manifest


def template_hashes(root: Path | None = None) -> dict[str, str]:
    return {tid: info.sha256 for tid, info in load_manifest(root).items()}


def verify_templates(root: Path | None = None) -> list[str]:
    """Compare shipped template files against the pinned manifest.

    Returns a list of human-readable problems; empty means everything
    matches (files present, hashes equal, placeholder sets equal).
    """
    root = root or _templates_root()
    problems: list[str] = []
    try:
        manifest = load_manifest(root)
    except FileNotFoundError:
        return ["manifest.json is missing"]
    for template_id in TEMPLATE_IDS:
        if template_id not in manifest:
            problems.append(f"{template_id}: not pinned in manifest")
    for template_id, info in manifest.items():
        path = root / info.file
        if not path.exists():
            problems.append(f"{template_id}: file {info.file} is missing")
            continue
        actual = _sha256_file(path)
        if actual != info.sha256:
            problems.append(
                f"{template_id}: hash mismatch (pinned {info.sha256[:12]}, actual {actual[:12]})"
            )
            continue
        found = scan_placeholders(path.read_text(encoding="utf-8"))
        if tuple(found) != info.placeholders:
            problems.append(
                f"{template_id}: placeholders {list(found)} differ from pinned {list(info.placeholders)}"
            )
    return problems


def pin_manifest(root: Path | None = None) -> dict:
    """Recompute the manifest for the template files on disk (maintainer use)."""
    root = root or _templates_root()
    authored = {"judge_alignment", "tha_verification"}
    entries = {}
    for template_id in TEMPLATE_IDS:
        path = root / f"{template_id}.txt"
        entries[template_id] = {
            "file": path.name,
            "sha256": _sha256_file(path),
            "placeholders": list(scan_placeholders(path.read_text(encoding="utf-8"))),
            "origin": "artifact-authored" if template_id in authored else "reference-verbatim",
        }
    manifest = {"templates": entries}
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
