"""Metrics engine against hand computations and brute-force oracles."""

from __future__ import annotations

import math
import random

import pytest

from labhazard.metrics import (
    ConfusionCounts,
    ScoredRecord,
    binary_metrics,
    build_eval_report,
    cohens_kappa,
    count_mae,
    f1_from_precision_recall,
    parsing_error_rate,
    render_report_table,
)


def test_f1_reproduces_reported_rows():
    # two rows quoted from the results table
    assert abs(f1_from_precision_recall(0.98, 0.52) - 0.68) <= 0.01
    assert abs(f1_from_precision_recall(0.99, 0.44) - 0.61) <= 0.01


def test_all_correct_predictions_give_ones():
    assert binary_metrics(ConfusionCounts(tp=5, tn=5)) == (1.0, 1.0, 1.0)


def test_hand_computed_confusion():
    p, r, f1 = binary_metrics(ConfusionCounts(tp=3, fp=1, fn=2, tn=0))
    assert p == 0.75 and r == 0.6
    assert abs(f1 - 2 * 0.75 * 0.6 / 1.35) < 1e-12


def test_zero_zero_convention():
    assert binary_metrics(ConfusionCounts()) == (0.0, 0.0, 0.0)
    assert f1_from_precision_recall(0.0, 0.0) == 0.0


def test_f1_zero_iff_p_or_r_zero():
    rng = random.Random(3)
    for _ in range(200):
        p, r = rng.random(), rng.random()
        f1 = f1_from_precision_recall(p, r)
        assert 0.0 <= f1 <= 1.0
        assert (f1 == 0.0) == (p == 0.0 or r == 0.0)
        assert f1 <= min(2 * p, 2 * r)


def test_count_mae_cases():
    assert count_mae([(0, 0), (1, 1), (2, 2)]) == (0.0, False)
    assert count_mae(zip([1, 1, 0], [0, 1, 2])) == (1.0, False)
    value, empty = count_mae([])
    assert value == 0.0 and empty is True


def test_parsing_error_rate_cases():
    assert parsing_error_rate(10, 0) == 0.0
    assert parsing_error_rate(10, 3) == 30.0
    assert f"{parsing_error_rate(1207, 1172):.1f}" == "97.1"
    with pytest.raises(ValueError):
        parsing_error_rate(0, 0)
    with pytest.raises(ValueError):
        parsing_error_rate(5, 6)


def test_kappa_fixtures():
    assert cohens_kappa([True] * 6 + [False] * 4, [True] * 6 + [False] * 4) == 1.0
    balanced_flip = ([True, False] * 5, [False, True] * 5)
    assert abs(cohens_kappa(*balanced_flip) - (-1.0)) < 1e-12
    # contingency a=20 (both true), b=5 (a true/b false), c=10, d=15 over n=50
    labels_a = [True] * 25 + [False] * 25
    labels_b = [True] * 20 + [False] * 5 + [True] * 10 + [False] * 15
    assert abs(cohens_kappa(labels_a, labels_b) - 0.4) < 1e-12


def test_kappa_identity_on_nondegenerate_vectors():
    rng = random.Random(8)
    for _ in range(50):
        x = [rng.random() < 0.5 for _ in range(rng.randint(2, 30))]
        if len(set(x)) < 2:
            continue
        assert cohens_kappa(x, x) == 1.0


def test_kappa_degenerate_and_error_cases():
    assert cohens_kappa([True, True], [True, True]) == 1.0
    with pytest.raises(ValueError):
        cohens_kappa([], [])
    with pytest.raises(ValueError):
        cohens_kappa([True], [True, False])
    assert -1.0 <= cohens_kappa([True, False, True], [False, False, True]) <= 1.0


def _oracle_block(records):
    """Spreadsheet-style recomputation, independent of the engine's code path."""
    total = len(records)
    parsed = [r for r in records if r.parsed]
    failures = total - len(parsed)
    tp = sum(1 for r in parsed if r.predicted_hazardous and r.true_hazardous)
    fp = sum(1 for r in parsed if r.predicted_hazardous and not r.true_hazardous)
    fn = sum(1 for r in parsed if not r.predicted_hazardous and r.true_hazardous)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    mae = (
        sum(abs(r.predicted_count - r.true_count) for r in parsed) / len(parsed)
        if parsed
        else 0.0
    )
    pe = 100.0 * failures / total if total else 0.0
    return pe, precision, recall, f1, mae, len(parsed), failures


def _random_records(rng, n):
    subjects = ("Biology", "Chemistry", "Cryogenic Liquids", "Physics", "General")
    return [
        ScoredRecord(
            subject=rng.choice(subjects),
            parsed=rng.random() > 0.2,
            predicted_hazardous=rng.random() < 0.5,
            predicted_count=rng.randint(0, 4),
            true_hazardous=rng.random() < 0.4,
            true_count=rng.randint(0, 4),
        )
        for _ in range(n)
    ]


def test_report_matches_independent_oracle_on_synthetic_fixture():
    rng = random.Random(12345)
    records = _random_records(rng, 20)
    report = build_eval_report("run", "v", records)
    pe, p, r, f1, mae, parsed, failures = _oracle_block(records)
    block = report.overall
    assert (block.pe_percent, block.parsed, block.failures) == (pe, parsed, failures)
    assert math.isclose(block.precision, p) and math.isclose(block.recall, r)
    assert math.isclose(block.f1, f1) and math.isclose(block.mae, mae)
    for subject, sub_block in report.by_subject.items():
        sub_records = [x for x in records if x.subject == subject]
        if not sub_records:
            assert sub_block.total == 0
            continue
        spe, sp, sr, sf1, smae, sparsed, sfail = _oracle_block(sub_records)
        assert math.isclose(sub_block.f1, sf1) and math.isclose(sub_block.mae, smae)
        assert sub_block.parsed == sparsed and sub_block.failures == sfail


def test_slicing_conservation_over_random_runs():
    rng = random.Random(777)
    for _ in range(25):
        records = _random_records(rng, rng.randint(0, 40))
        report = build_eval_report("run", "v", records)
        assert sum(b.parsed for b in report.by_subject.values()) == report.overall.parsed
        assert sum(b.failures for b in report.by_subject.values()) == report.overall.failures
        assert sum(b.total for b in report.by_subject.values()) == report.overall.total


def test_pe_and_metric_denominators_are_distinct():
    records = [
        ScoredRecord("Biology", parsed=False),
        ScoredRecord("Biology", parsed=True, predicted_hazardous=True, true_hazardous=True),
    ]
    report = build_eval_report("run", "v", records)
    assert report.overall.pe_percent == 50.0
    assert report.overall.recall == 1.0  # computed over the single parsed record


def test_empty_run_is_flagged_all_zero():
    report = build_eval_report("run", "v", [])
    assert report.empty_run is True
    assert report.overall.total == 0 and report.overall.f1 == 0.0
    assert report.overall.mae_is_empty is True


def test_render_rounding_and_layout():
    records = [
        ScoredRecord("Biology", parsed=True, predicted_hazardous=True, true_hazardous=True),
        ScoredRecord("Biology", parsed=False),
        ScoredRecord("Physics", parsed=True, predicted_count=2, true_count=0),
    ]
    report = build_eval_report("run", "v", records)
    table = render_report_table([report])
    lines = table.splitlines()
    assert "Overall" in lines[0] and "Cryogenic Liquids" in lines[0]
    for column in ("PE", "P", "R", "F1", "MAE"):
        assert column in lines[1]
    # one-decimal PE (33.3), two-decimal metrics
    assert "33.3" in lines[2]
    assert "1.00" in lines[2]
