"""Template resources: hash pinning, placeholder discipline, byte-exact rendering."""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from labhazard.annotations import ScenarioRecord
from labhazard.pipeline import gt_extraction_bindings
from labhazard.scene_graph import parse_scene_graph, serialize_scene_graph
from labhazard.templates_engine import (
    TEMPLATE_IDS,
    TemplateError,
    load_template,
    render_prompt,
    scan_placeholders,
    template_path,
    verify_templates,
)


def test_verify_templates_clean_checkout():
    assert verify_templates() == []


def _copy_templates(tmp_path: Path) -> Path:
    src = template_path(TEMPLATE_IDS[0]).parent
    dst = tmp_path / "templates"
    shutil.copytree(src, dst)
    return dst


def test_verify_templates_detects_tampering(tmp_path):
    root = _copy_templates(tmp_path)
    target = root / "detect_vision_only.txt"
    target.write_text(target.read_text(encoding="utf-8") + "sneaky edit\n", encoding="utf-8")
    problems = verify_templates(root)
    assert any("detect_vision_only" in p and "hash mismatch" in p for p in problems)


def test_verify_templates_detects_missing_file(tmp_path):
    root = _copy_templates(tmp_path)
    (root / "judge_alignment.txt").unlink()
    assert any("missing" in p for p in verify_templates(root))


def test_every_shipped_template_loads_and_scans():
    expected = {
        "scene_graph_generation": ("scenario_description",),
        "ground_truth_classification": (
            "subject",
            "scenario_description",
            "lab_safety_related_issues",
            "lab_safety_topic",
        ),
        "image_generation_hazardous": ("subject", "scene_graph"),
        "image_generation_non_hazardous": ("subject", "scene_graph"),
        "detect_vision_only": ("subject",),
        "detect_scene_graph_only": ("subject", "scene_graph"),
        "detect_vision_scene_graph": ("subject", "scene_graph"),
        "detect_sg_guided": ("subject",),
        "judge_alignment": ("scene_graph", "ground_truth"),
        "tha_verification": ("subject", "hazard_taxonomy", "scene_graph"),
    }
    for template_id in TEMPLATE_IDS:
        assert scan_placeholders(load_template(template_id)) == expected[template_id]


def test_gt_template_renders_all_four_fields_in_slots():
    record = ScenarioRecord(
        id="s1",
        subject="Chemistry",
        description="An open solvent bottle sits next to a flame.",
        related_issues="Fire risk.",
        topic="solvents",
    )
    rendered = render_prompt("ground_truth_classification", gt_extraction_bindings(record))
    assert "subject: chemistry" in rendered
    assert "Scenario_description: An open solvent bottle sits next to a flame." in rendered
    assert "lab_safety_related_issues: Fire risk." in rendered
    assert "Lab_safety_topic: solvents" in rendered
    assert "{" not in rendered.replace("{...}", "").replace("{\n", "").replace('{"', "")


def test_zero_placeholder_template_renders_verbatim(tmp_path):
    root = _copy_templates(tmp_path)
    body = "No slots at all.\nJust text.\n"
    (root / "detect_vision_only.txt").write_text(body, encoding="utf-8")
    assert render_prompt("detect_vision_only", {}, root=root) == body


def test_missing_binding_is_an_error():
    with pytest.raises(TemplateError) as exc:
        render_prompt("detect_scene_graph_only", {"subject": "Physics"})
    assert "scene_graph" in str(exc.value)


def test_unknown_binding_is_an_error():
    with pytest.raises(TemplateError) as exc:
        render_prompt("detect_vision_only", {"subject": "Physics", "oops": "x"})
    assert "oops" in str(exc.value)


def test_unknown_template_id_is_an_error():
    with pytest.raises(TemplateError):
        render_prompt("nonexistent_template", {})


def test_substitution_changes_no_other_bytes(worked_example_graph_text):
    graph_text = serialize_scene_graph(parse_scene_graph(worked_example_graph_text))
    template = load_template("detect_scene_graph_only")
    rendered = render_prompt(
        "detect_scene_graph_only", {"subject": "Chemistry", "scene_graph": graph_text}
    )
    oracle = template.replace("{subject}", "Chemistry").replace("{scene_graph}", graph_text)
    assert rendered == oracle
    assert graph_text in rendered


def test_substituted_values_are_not_rescanned(tmp_path):
    root = _copy_templates(tmp_path)
    (root / "detect_vision_only.txt").write_text("A {subject} B", encoding="utf-8")
    rendered = render_prompt("detect_vision_only", {"subject": "{scene_graph}"}, root=root)
    assert rendered == "A {scene_graph} B"


def test_hazardous_image_prompt_embeds_graph_verbatim(worked_example_graph_text):
    graph_text = serialize_scene_graph(parse_scene_graph(worked_example_graph_text))
    rendered = render_prompt(
        "image_generation_hazardous", {"subject": "Chemistry", "scene_graph": graph_text}
    )
    assert "Use the provided scene graph as the authoritative reference" in rendered
    assert graph_text in rendered
    assert "clearly depicting the safety hazard" in rendered


def test_non_hazardous_image_prompt_wording():
    rendered = render_prompt(
        "image_generation_non_hazardous", {"subject": "Biology", "scene_graph": "{}"}
    )
    assert "clean, organized, and professional" in rendered


def test_sg_guided_template_has_both_stages_and_combined_schema():
    text = load_template("detect_sg_guided")
    assert "STAGE 1: SCENE GRAPH GENERATION" in text
    assert "STAGE 2: HAZARD CLASSIFICATION" in text
    assert '"scene_graph"' in text and '"hazard_assessment"' in text
    assert text.index("STAGE 1") < text.index("STAGE 2")


def test_one_shot_example_in_generation_template_is_the_worked_graph(worked_example_graph_text):
    g = parse_scene_graph(worked_example_graph_text)
    assert len(g.nodes) == 6 and len(g.relationships) == 6
    # the demonstration scenario itself is present, quoted
    template = load_template("scene_graph_generation")
    assert '"A chemical laboratory stores a bottle of diethyl ether' in template


def test_manifest_is_committed_and_origins_marked():
    from labhazard.templates_engine import load_manifest

    manifest = load_manifest()
    assert set(manifest) == set(TEMPLATE_IDS)
    assert manifest["judge_alignment"].origin == "artifact-authored"
    assert manifest["tha_verification"].origin == "artifact-authored"
    assert manifest["detect_vision_only"].origin == "reference-verbatim"
    assert json.loads(
        template_path("detect_vision_only").parent.joinpath("manifest.json").read_text()
    )
