"""Metrics, the paired Wilcoxon test and Bonferroni correction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beatssl.core.errors import ConfigurationError, InsufficientPairsError, ShapeError, ValidationError
from beatssl.metrics import (
    MetricReport,
    auroc,
    dice,
    macro_f1,
    per_class_f1,
    probe_report,
    segment_report,
    segmentation_scores,
)
from beatssl.records import P_WAVE, QRS_COMPLEX, T_WAVE
from beatssl.stats import PairedScoreSet, bonferroni, wilcoxon_enumeration, wilcoxon_signed_rank


def _pairs(a, b):
    return PairedScoreSet("a", "b", np.asarray(a, dtype=float), np.asarray(b, dtype=float))


# Test classification metrics
def test_auroc_known_value():
    assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


@given(st.lists(st.tuples(st.integers(-50, 50), st.booleans()), min_size=4, max_size=30))
def test_auroc_invariant_to_monotone_rescaling(pairs):
    scores = np.array([p[0] for p in pairs]) / 10.0
    labels = np.array([int(p[1]) for p in pairs])
    if np.unique(labels).size < 2:
        return
    assert auroc(np.exp(scores) * 3.0 + 1.0, labels) == pytest.approx(auroc(scores, labels))
    assert auroc(-scores, labels) == pytest.approx(1.0 - auroc(scores, labels))


def test_auroc_single_class_warns():
    with pytest.warns(UserWarning):
        assert auroc([0.2, 0.7, 0.9], [1, 1, 1]) == 0.5


def test_auroc_shape_errors():
    with pytest.raises(ShapeError):
        auroc([0.1, 0.2], [0, 1, 1])
    with pytest.raises(ShapeError):
        auroc([], [])


def test_f1_perfect_and_wrong():
    labels = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    assert macro_f1(labels.astype(float), labels) == 1.0
    np.testing.assert_allclose(per_class_f1(1.0 - labels, labels), [0.0, 0.0])


def test_probe_report_notes_degenerate_classes():
    scores = np.array([[0.9, 0.1], [0.2, 0.3], [0.8, 0.4]])
    labels = np.array([[1, 0], [0, 0], [1, 0]])
    with pytest.warns(UserWarning):
        report = probe_report(scores, labels, ["AFIB", "NORM"], seed=0, config_hash="abc")
    assert report.per_class["auroc"] == {"AFIB": 1.0, "NORM": 0.5}
    assert report.macro["auroc"] == pytest.approx(0.75)
    assert len(report.warnings) == 1 and "NORM" in report.warnings[0]
    # 2 macro rows + 2 metrics x 2 classes
    assert len(report.rows(run=0, fold=1)) == 6


def test_metric_report_range_check():
    with pytest.raises(ValidationError):
        MetricReport(task="probe", per_class={}, macro={"auroc": 1.2}, seed=0, config_hash="x")


# Test segmentation metrics
def test_dice_examples():
    true = np.array([0, 2, 2, 2, 0, 0])
    assert dice(np.zeros(6, dtype=int), true, QRS_COMPLEX) == 0.0
    assert dice(true, true, QRS_COMPLEX) == 1.0
    assert dice(true, true, P_WAVE) == 1.0
    assert dice(np.array([0, 2, 2, 0, 0, 0]), true, QRS_COMPLEX) == pytest.approx(0.8)
    with pytest.raises(ShapeError):
        dice(true[:3], true, QRS_COMPLEX)


def test_segmentation_window_ignores_edges():
    true = np.zeros(5000, dtype=int)
    true[1000:1040] = P_WAVE
    true[1100:1150] = QRS_COMPLEX
    true[1300:1400] = T_WAVE
    pred = true.copy()
    pred[:500] = QRS_COMPLEX
    pred[4500:] = T_WAVE
    scores = segmentation_scores(pred, true)
    assert all(v == 1.0 for metric in scores.values() for v in metric.values())
    assert segmentation_scores(pred, true, window=(0, 5000))["dice"]["QRS"] < 1.0


def test_segmentation_f1_equals_dice():
    rng = np.random.default_rng(0)
    true = rng.integers(0, 4, size=(3, 5000))
    pred = np.where(rng.random((3, 5000)) < 0.7, true, rng.integers(0, 4, size=(3, 5000)))
    scores = segmentation_scores(pred, true)
    for wave in ("P", "QRS", "T"):
        assert scores["f1"][wave] == pytest.approx(scores["dice"][wave])
    report = segment_report(pred, true, seed=1, config_hash="h")
    assert report.macro["dice"] == pytest.approx(np.mean(list(scores["dice"].values())))


def test_segmentation_window_must_fit():
    with pytest.raises(ValidationError):
        segmentation_scores(np.zeros(1000), np.zeros(1000))


# Test Wilcoxon signed-rank
def test_wilcoxon_all_positive_five_pairs():
    """Test that five positive differences give the minimal two-sided p of 2/32."""
    result = wilcoxon_signed_rank(_pairs([0.9, 0.8, 0.85, 0.7, 0.95], [0.5, 0.6, 0.55, 0.65, 0.45]))
    assert result.method == "exact"
    assert result.statistic == 15.0
    assert result.pvalue == pytest.approx(0.0625)


def test_wilcoxon_swap_symmetry():
    pairs = _pairs([0.91, 0.72, 0.83, 0.64, 0.55, 0.76, 0.87], [0.82, 0.75, 0.71, 0.66, 0.51, 0.69, 0.8])
    forward = wilcoxon_signed_rank(pairs)
    backward = wilcoxon_signed_rank(pairs.swapped())
    assert forward.pvalue == pytest.approx(backward.pvalue)
    assert forward.statistic + backward.statistic == pytest.approx(7 * 8 / 2)


def test_wilcoxon_identical_scores():
    scores = [0.7, 0.8, 0.6, 0.9, 0.75]
    with pytest.warns(UserWarning):
        result = wilcoxon_signed_rank(_pairs(scores, scores))
    assert result.pvalue == 1.0 and result.degenerate


def test_wilcoxon_needs_five_nonzero_differences():
    with pytest.raises(InsufficientPairsError):
        wilcoxon_signed_rank(_pairs([0.1, 0.2, 0.3, 0.4, 0.5], [0.1, 0.2, 0.0, 0.1, 0.2]))
    with pytest.raises(ValidationError):
        _pairs([0.1, 0.2, 0.3], [0.0, 0.1, 0.2])
    with pytest.raises(ValidationError):
        _pairs([0.1] * 5, [0.0] * 6)


def test_wilcoxon_normal_approximation_for_large_n():
    rng = np.random.default_rng(4)
    a = rng.normal(0.8, 0.05, size=40)
    result = wilcoxon_signed_rank(_pairs(a, a - 0.1 + rng.normal(0, 0.01, size=40)))
    assert result.method == "normal"
    assert result.pvalue < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5).filter(lambda v: v != 0), min_size=5, max_size=10))
def test_exact_pvalue_matches_enumeration(differences):
    """Test the counted null distribution against brute force, ties included."""
    a = np.asarray(differences, dtype=float)
    b = np.zeros_like(a)
    result = wilcoxon_signed_rank(_pairs(a, b))
    assert result.pvalue == pytest.approx(wilcoxon_enumeration(a, b), abs=1e-12)
    assert 0.0 < result.pvalue <= 1.0


# Test Bonferroni
def test_bonferroni_examples():
    assert bonferroni([0.01, 0.02, 0.5]) == pytest.approx([0.03, 0.06, 1.0])
    assert bonferroni([0.01], m=91) == pytest.approx([0.91])
    with pytest.raises(ConfigurationError):
        bonferroni([0.01, 0.02], m=1)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
def test_bonferroni_is_monotone_and_bounded(p_values):
    corrected = bonferroni(p_values)
    order = np.argsort(p_values, kind="stable")
    assert all(c <= 1.0 for c in corrected)
    assert all(c >= p for c, p in zip(corrected, p_values))
    assert all(corrected[i] <= corrected[j] for i, j in zip(order, order[1:]))
