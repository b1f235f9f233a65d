"""Records, the synthetic generator, feature extraction and the on-disk format."""

import numpy as np
import pytest

from beatssl.core.errors import (
    ConfigurationError,
    DatasetIOError,
    InsufficientBeatsError,
    IntegrityError,
    ShapeError,
    ValidationError,
)
from beatssl.dataset import (
    MANIFEST_NAME,
    aload_dataset,
    average_fiducials,
    fiducials_to_mask,
    load_dataset,
    parse_manifest,
    save_dataset,
)
from beatssl.features import (
    BEAT_FEATURE_NAMES,
    RECORD_FEATURE_NAMES,
    FeatureScaler,
    extract_beat_features,
    extract_features,
)
from beatssl.records import (
    BACKGROUND,
    P_WAVE,
    QRS_COMPLEX,
    T_WAVE,
    BeatAnnotation,
    ECGRecord,
    SegmentationMask,
    lead_index,
)
from beatssl.synthetic import LEAD_VECTORS, RHYTHM_CLASSES, synth_generate, synth_record


def _impulse_record(rr_s=1.0, duration_s=10.0, fs=500.0):
    """Regular spike train: constant RR, so HR and RR std are exact."""
    signal = np.zeros((12, int(duration_s * fs)))
    peaks = np.arange(int(0.5 * fs), signal.shape[1], int(rr_s * fs))
    signal[:, peaks] = 1.0
    return ECGRecord(signal=signal, sampling_rate=fs, record_id="impulses",
                     beat_annotations=BeatAnnotation(peaks, ("N",) * len(peaks)))


# Test records
def test_record_validation():
    """Test that records reject bad shapes, folds and annotations."""
    with pytest.raises(ShapeError):
        ECGRecord(signal=np.zeros(100), sampling_rate=500, record_id="a")
    with pytest.raises(ValidationError):
        ECGRecord(signal=np.zeros((12, 1000)), sampling_rate=500, record_id="a", fold=11)
    with pytest.raises(IntegrityError):
        ECGRecord(signal=np.zeros((12, 1000)), sampling_rate=500, record_id="a",
                  beat_annotations=BeatAnnotation([100, 150], ("N", "N")))
    with pytest.raises(IntegrityError):
        ECGRecord(signal=np.zeros((12, 1000)), sampling_rate=500, record_id="a",
                  beat_annotations=BeatAnnotation([100, 500], ("N", "X")))


def test_mask_requires_background_between_waves():
    labels = np.zeros(20, dtype=np.uint8)
    labels[2:5] = P_WAVE
    labels[5:8] = QRS_COMPLEX
    with pytest.raises(IntegrityError):
        SegmentationMask(labels).validate(20)
    labels[5] = BACKGROUND
    assert SegmentationMask(labels).validate(20).runs() == [(2, 5, P_WAVE), (6, 8, QRS_COMPLEX)]


def test_scaled_and_lead_lookup(synthetic_records):
    record = synthetic_records[0]
    doubled = record.scaled(2.0)
    np.testing.assert_allclose(doubled.signal, 2.0 * record.signal)
    assert doubled.record_id == record.record_id
    assert lead_index("II") == 1
    np.testing.assert_array_equal(record.lead("V1"), record.signal[6])
    with pytest.raises(ValidationError):
        lead_index("V7")


# Test synthetic generator
def test_single_regular_record():
    """Test a 10 s regular record: 5000 samples and RR in the generator range."""
    (record,) = synth_generate(1, seed=7)
    assert record.signal.shape == (12, 5000)
    assert 9 <= len(record.r_peaks) <= 14
    rr = np.diff(record.r_peaks) / record.sampling_rate
    assert 0.75 <= rr.mean() <= 1.05
    assert record.rhythm_labels == frozenset({"regular"})
    assert set(record.beat_annotations.classes) == {"N"}


def test_generator_is_deterministic():
    a = synth_generate(3, seed=11, class_mix={"regular": 0.5, "ventricular_ectopy": 0.5})
    b = synth_generate(3, seed=11, class_mix={"regular": 0.5, "ventricular_ectopy": 0.5})
    for x, y in zip(a, b):
        assert np.array_equal(x.signal, y.signal)
        assert x.rhythm_labels == y.rhythm_labels
    c = synth_generate(3, seed=12)
    assert not np.array_equal(a[0].signal, c[0].signal)


def test_generator_rejects_bad_requests():
    with pytest.raises(ConfigurationError):
        synth_generate(0)
    with pytest.raises(ConfigurationError):
        synth_generate(2, class_mix={"sinus": 1.0})
    with pytest.raises(ConfigurationError):
        synth_generate(2, class_mix={"regular": 0.7})


def test_generator_folds_and_masks():
    records = synth_generate(12, seed=1, class_mix={name: 1 / len(RHYTHM_CLASSES) for name in RHYTHM_CLASSES})
    assert [r.fold for r in records] == [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 1, 2]
    for record in records:
        assert record.wave_masks is not None
        record.wave_masks.validate(record.n_samples)
        labels = set(np.unique(record.wave_masks.labels))
        assert {QRS_COMPLEX, T_WAVE} <= labels


def test_ventricular_ectopy_has_wide_beats():
    records = synth_generate(6, seed=2, class_mix={"ventricular_ectopy": 1.0})
    classes = [c for r in records for c in r.beat_annotations.classes]
    assert "V" in classes
    assert set(classes) <= {"N", "V", "F"}


def test_max_beats_caps_beat_count():
    (record,) = synth_generate(1, seed=4, max_beats=1)
    assert len(record.r_peaks) == 1


def test_leads_are_a_projection_of_the_dipole():
    record = synth_record(np.random.default_rng(4), "r", "regular", noise_sigma=0.0, baseline_wander=0.0)
    dipole = np.linalg.pinv(LEAD_VECTORS) @ record.signal
    np.testing.assert_allclose(LEAD_VECTORS @ dipole, record.signal, atol=1e-9)
    # limb leads obey Einthoven: III = II - I
    np.testing.assert_allclose(record.signal[2], record.signal[1] - record.signal[0], atol=1e-9)


# Test features
def test_constant_rr_features():
    """Test that a constant 1 s RR gives 60 bpm and zero RR spread."""
    vector = extract_features(_impulse_record())
    values = vector.as_dict()
    assert vector.feature_names == RECORD_FEATURE_NAMES
    assert len(vector.values) == 16
    assert values["mean_hr_bpm"] == pytest.approx(60.0)
    assert values["rr_std_s"] == pytest.approx(0.0)


def test_scaling_scales_rms_only(synthetic_records):
    """Test that doubling amplitude doubles RMS and leaves rate features alone."""
    record = synthetic_records[0]
    base = extract_features(record).values
    doubled = extract_features(record.scaled(2.0)).values
    np.testing.assert_allclose(doubled[3:15], 2.0 * base[3:15], rtol=1e-12)
    np.testing.assert_allclose(doubled[:2], base[:2], rtol=1e-12)


def test_features_need_two_beats():
    record = _impulse_record()
    with pytest.raises(InsufficientBeatsError):
        extract_features(record, r_peaks=record.r_peaks[:1])
    with pytest.raises(ShapeError):
        extract_features(ECGRecord(signal=np.zeros((3, 5000)), sampling_rate=500, record_id="x"),
                         r_peaks=np.array([100, 900]))


def test_beat_features_shape(synthetic_records):
    record = synthetic_records[1]
    features = extract_beat_features(record, record.r_peaks, 352)
    assert features.shape == (len(record.r_peaks), len(BEAT_FEATURE_NAMES))
    assert np.all(np.isfinite(features))
    np.testing.assert_allclose(features[1:, 0], np.diff(record.r_peaks) / record.sampling_rate)


def test_feature_scaler_centres_constant_columns():
    matrix = np.array([[1.0, 5.0], [3.0, 5.0]])
    scaled = FeatureScaler().fit_transform(matrix)
    np.testing.assert_allclose(scaled, [[-1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValidationError):
        FeatureScaler().transform(matrix)


# Test dataset format
def test_save_and_load_round_trip(dataset_dir, synthetic_records):
    """Test that a saved dataset loads back in manifest order with annotations."""
    loaded = load_dataset(dataset_dir)
    assert [r.record_id for r in loaded] == [r.record_id for r in synthetic_records]
    for original, copy in zip(synthetic_records, loaded):
        np.testing.assert_allclose(copy.signal, original.signal.astype(np.float32), rtol=0, atol=0)
        assert copy.fold == original.fold
        assert copy.rhythm_labels == original.rhythm_labels
        np.testing.assert_array_equal(copy.r_peaks, original.r_peaks)
        np.testing.assert_array_equal(copy.wave_masks.labels, original.wave_masks.labels)


async def test_split_filters_by_fold(dataset_dir):
    """Test that a fold split returns exactly that fold's records."""
    fold9 = await aload_dataset(dataset_dir, split={9})
    assert [r.fold for r in fold9] == [9, 9]
    train = {r.record_id for r in await aload_dataset(dataset_dir, split=range(1, 9))}
    test = {r.record_id for r in await aload_dataset(dataset_dir, split={9, 10})}
    assert len(train) == 16 and len(test) == 4
    assert not train & test


def test_corrupted_signal_file(dataset_dir):
    """Test that a signal file with the wrong size is an integrity error."""
    path = dataset_dir / "rec000.f32"
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(IntegrityError):
        load_dataset(dataset_dir)


def test_missing_manifest_and_signal(temp_dir, dataset_dir):
    with pytest.raises(DatasetIOError):
        load_dataset(temp_dir / "nowhere")
    (dataset_dir / "rec003.f32").unlink()
    with pytest.raises(DatasetIOError):
        load_dataset(dataset_dir)


def test_manifest_rejects_duplicates_and_bad_lines():
    line = "a\t1\t12\t5000\t500.0\ta.f32"
    with pytest.raises(IntegrityError, match="twice"):
        parse_manifest(f"{line}\n{line}\n")
    with pytest.raises(IntegrityError):
        parse_manifest("a\t1\t12\n")
    entries = parse_manifest(f"# comment\n{line}\nb\t-\t12\t5000\t500.0\tb.f32\t[\"regular\"]\n")
    assert entries[1].fold is None
    assert entries[1].labels == ("regular",)


def test_manifest_file_name(dataset_dir):
    assert (dataset_dir / MANIFEST_NAME).exists()
    with pytest.raises(IntegrityError):
        save_dataset([_impulse_record(), _impulse_record()], dataset_dir / "dupes")


def test_average_fiducials_rounds_ties_down():
    assert average_fiducials([[10, 20], [11, 21]]).tolist() == [10, 20]
    assert average_fiducials([[10, 20], [12, 23], [12, 23]]).tolist() == [11, 22]


def test_fiducials_to_mask():
    mask = fiducials_to_mask([(10, 19, P_WAVE), (20, 29, QRS_COMPLEX), (40, 60, T_WAVE)], 100)
    assert mask.labels[15] == P_WAVE
    assert mask.labels[20] == BACKGROUND
    assert mask.labels[25] == QRS_COMPLEX
    assert mask.labels[60] == T_WAVE
    assert mask.labels[61] == BACKGROUND


def test_fiducials_inside_another_wave_are_named():
    with pytest.raises(IntegrityError, match=r"P wave \[150, 200\] lies inside QRS wave \[100, 300\]"):
        fiducials_to_mask([(100, 300, QRS_COMPLEX), (150, 200, P_WAVE)], 1000)
    # a wave overrunning its predecessor is clipped, not rejected
    mask = fiducials_to_mask([(100, 300, QRS_COMPLEX), (250, 400, T_WAVE)], 1000)
    assert mask.labels[250] == BACKGROUND
    assert mask.labels[260] == T_WAVE
