"""Evaluation metrics: P/R/F1, hazard-count MAE, parsing-error rate, Cohen's kappa.

All 0/0 ratios resolve to 0 by convention, so precision, recall, and F1 are
total functions well-defined even for degenerate prediction sets. Metrics are
computed over parsed records only; the parsing-error rate is computed over
all records. Rounding happens at render time, never in stored values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .annotations import SUBJECTS


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with hazardous as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def add(self, predicted_positive: bool, truly_positive: bool) -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + (predicted_positive and truly_positive),
            fp=self.fp + (predicted_positive and not truly_positive),
            fn=self.fn + (not predicted_positive and truly_positive),
            tn=self.tn + (not predicted_positive and not truly_positive),
        )


class BinaryMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float


class MaeResult(NamedTuple):
    value: float
    is_empty: bool


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def binary_metrics(counts: ConfusionCounts) -> BinaryMetrics:
    """Precision, recall, and F1 from confusion counts (0/0 -> 0)."""
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    return BinaryMetrics(precision, recall, f1_from_precision_recall(precision, recall))


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0/0 -> 0)."""
    return _ratio(2.0 * precision * recall, precision + recall)


def count_mae(pairs: Iterable[tuple[int, int]]) -> MaeResult:
    """Mean absolute error over (predicted count, true count) pairs."""
    diffs = [abs(predicted - true) for predicted, true in pairs]
    if not diffs:
        return MaeResult(0.0, True)
    return MaeResult(sum(diffs) / len(diffs), False)


def parsing_error_rate(total: int, failures: int) -> float:
    """Percentage of records that failed structured-output validation."""
    if total <= 0:
        raise ValueError("parsing error rate requires a positive record total")
    if failures < 0 or failures > total:
        raise ValueError(f"failures {failures} out of range for total {total}")
    return 100.0 * failures / total


def cohens_kappa(labels_a: Sequence[bool], labels_b: Sequence[bool]) -> float:
    """Chance-corrected agreement between two binary label vectors.

    Returns NaN when expected agreement is 1 but observed agreement is not
    (unreachable for genuinely binary marginals, kept for totality).
    """
    if len(labels_a) != len(labels_b):
        raise ValueError("label vectors must have equal length")
    n = len(labels_a)
    if n == 0:
        raise ValueError("kappa is undefined on an empty item set")
    agree = sum(1 for a, b in zip(labels_a, labels_b) if bool(a) == bool(b))
    p_o = agree / n
    pa = sum(map(bool, labels_a)) / n
    pb = sum(map(bool, labels_b)) / n
    p_e = pa * pb + (1.0 - pa) * (1.0 - pb)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else math.nan
    return (p_o - p_e) / (1.0 - p_e)


@dataclass
class MetricsBlock:
    """Metrics for one slice: the full run or a single laboratory subject."""

    total: int = 0
    parsed: int = 0
    failures: int = 0
    pe_percent: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    mae: float = 0.0
    mae_is_empty: bool = True
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)

    def to_value(self) -> dict:
        return {
            "total": self.total,
            "parsed": self.parsed,
            "failures": self.failures,
            "pe_percent": self.pe_percent,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mae": self.mae,
            "mae_is_empty": self.mae_is_empty,
            "confusion": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
        }


@dataclass
class EvalReport:
    """Table-shaped report for one (run, setting): overall plus per-subject blocks."""

    run_id: str
    setting: str
    overall: MetricsBlock
    by_subject: dict[str, MetricsBlock]
    empty_run: bool = False

    def to_value(self) -> dict:
        return {
            "run_id": self.run_id,
            "setting": self.setting,
            "empty_run": self.empty_run,
            "overall": self.overall.to_value(),
            "by_subject": {name: block.to_value() for name, block in self.by_subject.items()},
        }


@dataclass(frozen=True)
class ScoredRecord:
    """The scoring-relevant view of one prediction record."""

    subject: str
    parsed: bool
    predicted_hazardous: bool = False
    predicted_count: int = 0
    true_hazardous: bool = False
    true_count: int = 0


def _block_from_records(records: Sequence[ScoredRecord]) -> MetricsBlock:
    block = MetricsBlock(total=len(records))
    pairs: list[tuple[int, int]] = []
    for record in records:
        if not record.parsed:
            block.failures += 1
            continue
        block.parsed += 1
        block.counts = block.counts.add(record.predicted_hazardous, record.true_hazardous)
        pairs.append((record.predicted_count, record.true_count))
    if block.total:
        block.pe_percent = parsing_error_rate(block.total, block.failures)
    block.precision, block.recall, block.f1 = binary_metrics(block.counts)
    block.mae, block.mae_is_empty = count_mae(pairs)
    return block


def build_eval_report(
    run_id: str, setting: str, records: Sequence[ScoredRecord]
) -> EvalReport:
    """Aggregate scored records into overall and per-subject metric blocks."""
    overall = _block_from_records(records)
    by_subject = {
        subject: _block_from_records([r for r in records if r.subject == subject])
        for subject in SUBJECTS
    }
    assert sum(b.parsed for b in by_subject.values()) == overall.parsed
    assert sum(b.failures for b in by_subject.values()) == overall.failures
    return EvalReport(
        run_id=run_id,
        setting=setting,
        overall=overall,
        by_subject=by_subject,
        empty_run=not records,
    )


_COLUMNS = ("PE", "P", "R", "F1", "MAE")


def _format_block(block: MetricsBlock) -> list[str]:
    return [
        f"{block.pe_percent:.1f}",
        f"{block.precision:.2f}",
        f"{block.recall:.2f}",
        f"{block.f1:.2f}",
        f"{block.mae:.2f}",
    ]


def render_report_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table: one row per report, subject-grouped metric columns."""
    groups = ("Overall",) + SUBJECTS
    header_top = ["setting".ljust(14)]
    header_bot = ["".ljust(14)]
    for group in groups:
        width = 6 * len(_COLUMNS) - 1
        header_top.append(group.center(width))
        header_bot.append(" ".join(c.rjust(5) for c in _COLUMNS))
    lines = ["  ".join(header_top), "  ".join(header_bot)]
    for report in reports:
        cells = [report.setting.ljust(14)]
        for group in groups:
            block = report.overall if group == "Overall" else report.by_subject[group]
            cells.append(" ".join(v.rjust(5) for v in _format_block(block)))
        lines.append("  ".join(cells))
    return "\n".join(lines)
