"""R-peak detection, beat windows, frame mapping, ROI pooling and pseudo-labels."""

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from beatssl.beats import (
    beat_windows,
    crop_beat,
    detect_r_peaks,
    map_rpeak_to_frames,
    n_frames_for,
    roi_pool,
)
from beatssl.core.errors import ConfigurationError, NoBeatsError, ValidationError
from beatssl.labelers import (
    PseudoLabeler,
    RRContext,
    RuleBasedLabeler,
    SyntheticOracleLabeler,
    build_labeler,
    pseudo_label_beats,
    rr_contexts,
)
from beatssl.records import LEAD_II
from beatssl.synthetic import synth_generate


def _gaussian_beat(sigma_s, n=352, fs=500.0, amplitude=1.0):
    t = (np.arange(n) - n // 2) / fs
    return amplitude * np.exp(-0.5 * (t / sigma_s) ** 2)


# Test detection
def test_detection_matches_generator(synthetic_records):
    """Test that detected peaks lie within 20 ms of the generator's R-peaks."""
    for record in synthetic_records[:6]:
        truth = record.r_peaks
        found = detect_r_peaks(record.signal[LEAD_II], record.sampling_rate)
        tolerance = 0.02 * record.sampling_rate
        hits = sum(np.min(np.abs(found - r)) <= tolerance for r in truth)
        assert hits >= 0.95 * len(truth)


def test_single_beat_gives_one_peak():
    (record,) = synth_generate(1, seed=4, max_beats=1)
    found = detect_r_peaks(record.signal[LEAD_II], record.sampling_rate)
    assert len(found) == 1
    assert abs(int(found[0]) - int(record.r_peaks[0])) <= 10


def test_flat_and_short_signals():
    with pytest.raises(NoBeatsError):
        detect_r_peaks(np.zeros(5000), 500.0)
    with pytest.raises(ValidationError):
        detect_r_peaks(np.ones(500), 500.0)


# Test cropping
def test_crop_inside_signal():
    ecg = np.arange(12 * 5000, dtype=np.float64).reshape(12, 5000)
    crop, info = crop_beat(ecg, 2500, 352)
    assert (info.start, info.end) == (2324, 2676)
    assert not info.padded
    np.testing.assert_array_equal(crop, ecg[:, 2324:2676])


def test_crop_near_start_is_zero_padded():
    ecg = np.ones((12, 5000))
    crop, info = crop_beat(ecg, 10, 352)
    assert info.pad_left == 166 and info.pad_right == 0
    assert not crop[:, :166].any()
    assert crop[:, 166:].all()


def test_crop_reembeds_exactly():
    ecg = np.random.default_rng(0).standard_normal((12, 1000))
    crop, info = crop_beat(ecg, 990, 100)
    rebuilt = np.zeros((12, 1100))
    rebuilt[:, info.start:info.end] = crop
    np.testing.assert_array_equal(rebuilt[:, info.start:1000], ecg[:, info.start:])


def test_crop_errors():
    ecg = np.zeros((12, 1000))
    with pytest.raises(ConfigurationError):
        crop_beat(ecg, 500, 351)
    with pytest.raises(ConfigurationError):
        crop_beat(ecg, 500, 2000)
    with pytest.raises(ValidationError):
        crop_beat(ecg, 1000, 352)


# Test frame mapping
def test_frame_mapping_example():
    assert map_rpeak_to_frames(1000, 352, 8, 625) == (103, 147)
    assert map_rpeak_to_frames(3, 352, 8, 625)[0] == 0
    assert n_frames_for(5000, 16) == 313


@given(r=st.integers(0, 4000), n=st.sampled_from([64, 128, 352]), stride=st.sampled_from([1, 2, 4, 8, 16]))
def test_frame_mapping_shift_law(r, n, stride):
    """Test that moving the R-peak by one stride moves the window by one frame."""
    n_frames = 10_000
    if r - n // 2 < 0:
        return
    a = map_rpeak_to_frames(r, n, stride, n_frames)
    b = map_rpeak_to_frames(r + stride, n, stride, n_frames)
    assert b == (a[0] + 1, a[1] + 1)


@given(r=st.integers(0, 4999), stride=st.sampled_from([1, 2, 4, 8, 16]))
def test_frame_window_never_empty(r, stride):
    n_frames = n_frames_for(5000, stride)
    start, end = map_rpeak_to_frames(r, 352, stride, n_frames)
    assert 0 <= start < end <= n_frames


def test_frame_mapping_rejects_bad_stride():
    with pytest.raises(ConfigurationError):
        map_rpeak_to_frames(100, 352, 0, 10)


def test_beat_windows_drop_heavily_padded_beats():
    assert len(beat_windows("r", [0, 10, 100, 2500, 4990], 352, 5000, 16)) == 5
    windows = beat_windows("r", [10, 100, 2500, 4990], 352, 5000, 16, max_padding_fraction=0.4)
    assert [w.r_peak for w in windows] == [100, 2500]
    assert windows[0].padding_fraction == pytest.approx(1 - 276 / 352)
    assert windows[1].padding_fraction == 0.0
    assert windows[1].frame_span == map_rpeak_to_frames(2500, 352, 16, 313)


# Test ROI pooling
def test_roi_pool_mean_matches_direct_mean():
    fmap = np.random.default_rng(1).standard_normal((10, 4))
    np.testing.assert_allclose(roi_pool(fmap, (2, 5)), fmap[2:5].mean(axis=0), atol=1e-9)
    np.testing.assert_array_equal(roi_pool(fmap, (7, 8)), fmap[7])
    np.testing.assert_allclose(roi_pool(np.full((6, 3), 2.5), (0, 6)), [2.5, 2.5, 2.5])


def test_roi_pool_on_tensors():
    fmap = torch.arange(20, dtype=torch.float32).reshape(5, 4)
    assert torch.equal(roi_pool(fmap, (1, 3), "max"), fmap[2])
    assert torch.allclose(roi_pool(fmap, (1, 3)), fmap[1:3].mean(0))


def test_roi_pool_errors():
    fmap = np.zeros((5, 2))
    with pytest.raises(ValidationError):
        roi_pool(fmap, (3, 3))
    with pytest.raises(ValidationError):
        roi_pool(fmap, (2, 6))
    with pytest.raises(ConfigurationError):
        roi_pool(fmap, (0, 2), "median")


# Test pseudo-labelers
def test_rule_labeler_thresholds():
    """Test narrow, wide, flat and premature beats."""
    labeler = RuleBasedLabeler(500.0)
    assert isinstance(labeler, PseudoLabeler)
    assert labeler.classify(_gaussian_beat(0.01)) == "N"
    assert labeler.classify(_gaussian_beat(0.03)) == "V"
    assert labeler.classify(_gaussian_beat(0.01, amplitude=0.01)) == "Q"
    premature = RRContext(rr_prev=0.5, rr_next=1.2, rr_mean=0.9)
    assert labeler.classify(_gaussian_beat(0.01), premature) == "S"


def test_rr_contexts():
    contexts = rr_contexts(np.array([0, 500, 1000, 1250]), 500.0)
    assert contexts[0].rr_prev == pytest.approx(1.0)
    assert contexts[3].rr_prev == pytest.approx(0.5)
    assert contexts[3].prematurity == pytest.approx(0.5 / (2.5 / 3))
    assert rr_contexts(np.array([100]), 500.0) == [None]


def test_oracle_labeler_reproduces_ground_truth():
    records = synth_generate(3, seed=5, class_mix={"ventricular_ectopy": 1.0})
    labeler = build_labeler("oracle", records, n=352)
    assert len(labeler) == sum(len(r.r_peaks) for r in records)
    for record in records:
        labels = pseudo_label_beats(record, labeler, 352, record.r_peaks)
        assert labels == list(record.beat_annotations.classes)
    with pytest.raises(ValidationError):
        labeler.classify(np.zeros(352))


def test_rule_labels_are_deterministic(synthetic_records):
    record = synthetic_records[0]
    labeler = build_labeler("rule")
    first = pseudo_label_beats(record, labeler, 352)
    assert first == pseudo_label_beats(record, labeler, 352)
    assert len(first) == len(record.r_peaks)


def test_labeler_resolution_errors(temp_dir):
    with pytest.raises(ConfigurationError):
        build_labeler("oracle")
    with pytest.raises(ConfigurationError):
        build_labeler(str(temp_dir / "missing.pt"))
    assert isinstance(SyntheticOracleLabeler({}), PseudoLabeler)
