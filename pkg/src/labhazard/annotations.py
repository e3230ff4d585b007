"""Scenario records and ground-truth hazard annotations with their consistency laws."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .scene_graph import ParseErrorCategory, SgParseError, load_json_payload

SUBJECTS = ("Biology", "Chemistry", "Cryogenic Liquids", "Physics", "General")

ASSESSMENT_FIELDS = ("classification", "hazards_count", "existing_hazards")


class HazardLabel(enum.Enum):
    HAZARDOUS = "hazardous"
    NON_HAZARDOUS = "non-hazardous"


class GroundTruthError(ValueError):
    """Raised when annotation fields violate a ground-truth consistency law."""

    def __init__(self, reason: str, detail: str):
        super().__init__(f"{reason}: {detail}")
        self.reason = reason


class AssessmentParseError(Exception):
    """Raised when model output is not a schema-valid hazard assessment."""

    def __init__(self, category: ParseErrorCategory, location: str, detail: str):
        super().__init__(f"{category.value} at {location}: {detail}")
        self.category = category
        self.location = location
        self.detail = detail


@dataclass(frozen=True)
class ScenarioRecord:
    """One textual laboratory scenario from the source corpus."""

    id: str
    subject: str
    description: str
    related_issues: str = ""
    topic: str = ""

    def __post_init__(self):
        if not self.id:
            raise ValueError("scenario id must be non-empty")
        if self.subject not in SUBJECTS:
            raise ValueError(f"unknown subject {self.subject!r}; expected one of {SUBJECTS}")
        if not self.description:
            raise ValueError(f"scenario {self.id}: description must be non-empty")

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "subject": self.subject,
                "description": self.description,
                "related_issues": self.related_issues,
                "topic": self.topic,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "ScenarioRecord":
        data = json.loads(line)
        return cls(
            id=data["id"],
            subject=data["subject"],
            description=data["description"],
            related_issues=data.get("related_issues", ""),
            topic=data.get("topic", ""),
        )


@dataclass(frozen=True)
class GroundTruth:
    """Validated hazard annotation: label, hazard set, and count."""

    label: HazardLabel
    hazards: tuple[str, ...]
    count: int
    human_override: str | None = None

    def to_value(self) -> dict:
        value = {
            "classification": self.label.value,
            "hazards_count": self.count,
            "existing_hazards": list(self.hazards),
        }
        if self.human_override is not None:
            value["human_override"] = self.human_override
        return value

    @classmethod
    def from_value(cls, value: dict) -> "GroundTruth":
        return validate_ground_truth(
            label=value["classification"],
            hazards=value["existing_hazards"],
            count=value["hazards_count"],
            human_override=value.get("human_override"),
        )


@dataclass(frozen=True)
class HazardAssessment:
    """A model's hazard call: schema-valid by construction, consistency recorded only."""

    label: HazardLabel
    hazards: tuple[str, ...]
    count: int
    consistency_flag: bool = field(default=False)

    def to_value(self) -> dict:
        return {
            "classification": self.label.value,
            "hazards_count": self.count,
            "existing_hazards": list(self.hazards),
        }


def validate_ground_truth(
    label: str | HazardLabel,
    hazards: list[str] | tuple[str, ...],
    count: int,
    human_override: str | None = None,
) -> GroundTruth:
    """Check the three consistency laws and build a GroundTruth.

    Laws: count equals the hazard-set size; a hazardous label requires a
    non-empty set; hazard names are non-empty, deduplicated exact strings.
    """
    if isinstance(label, str):
        try:
            label = HazardLabel(label)
        except ValueError as exc:
            raise GroundTruthError("unknown-label", f"label {label!r}") from exc
    names = tuple(hazards)
    for name in names:
        if not isinstance(name, str) or not name:
            raise GroundTruthError("empty-hazard-name", f"hazard name {name!r}")
    if len(set(names)) != len(names):
        raise GroundTruthError("duplicate-hazard-name", f"hazards {list(names)}")
    if count != len(names):
        raise GroundTruthError(
            "count-mismatch", f"count {count} but {len(names)} hazards listed"
        )
    if label is HazardLabel.HAZARDOUS and not names:
        raise GroundTruthError("hazardous-with-empty-set", "hazardous label requires >= 1 hazard")
    return GroundTruth(label=label, hazards=names, count=count, human_override=human_override)


def parse_hazard_assessment(raw: str) -> HazardAssessment:
    """Parse arbitrary model text into a structurally valid hazard assessment.

    Schema-valid but internally inconsistent outputs succeed with
    consistency_flag False; only structural violations raise.
    """
    try:
        value = load_json_payload(raw)
    except SgParseError as exc:
        raise AssessmentParseError(exc.category, exc.location, exc.detail) from exc
    return assessment_from_value(value)


def assessment_from_value(value: object, location: str = "$") -> HazardAssessment:
    """Validate a decoded JSON value against the assessment output schema."""
    if not isinstance(value, dict):
        raise AssessmentParseError(
            ParseErrorCategory.SCHEMA_SHAPE, location, "assessment is not an object"
        )
    for key in ASSESSMENT_FIELDS:
        if key not in value:
            raise AssessmentParseError(
                ParseErrorCategory.MISSING_FIELD, location, f"missing field '{key}'"
            )
    extra = set(value) - set(ASSESSMENT_FIELDS)
    if extra:
        raise AssessmentParseError(
            ParseErrorCategory.SCHEMA_SHAPE, location, f"unexpected field '{sorted(extra)[0]}'"
        )
    raw_label = value["classification"]
    if not isinstance(raw_label, str):
        raise AssessmentParseError(
            ParseErrorCategory.SCHEMA_SHAPE, f"{location}.classification", "not a string"
        )
    try:
        label = HazardLabel(raw_label)
    except ValueError:
        raise AssessmentParseError(
            ParseErrorCategory.WRONG_ENUM_VALUE,
            f"{location}.classification",
            f"{raw_label!r} is not a recognized label",
        ) from None
    count = value["hazards_count"]
    if isinstance(count, bool) or not isinstance(count, int) or count < 0:
        raise AssessmentParseError(
            ParseErrorCategory.SCHEMA_SHAPE,
            f"{location}.hazards_count",
            "not a non-negative integer",
        )
    names = value["existing_hazards"]
    if not isinstance(names, list) or any(not isinstance(h, str) for h in names):
        raise AssessmentParseError(
            ParseErrorCategory.SCHEMA_SHAPE,
            f"{location}.existing_hazards",
            "not a list of strings",
        )
    return HazardAssessment(
        label=label,
        hazards=tuple(names),
        count=count,
        consistency_flag=(count == len(names)),
    )
