"""
Hand-crafted ECG features behind the soft contrastive targets.

Record level: mean heart rate, RR standard deviation, QRS width, twelve
per-lead RMS amplitudes and the mean lead-II R amplitude (16 values).
Beat level: the same mix computed around each R-peak.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .beats import detect_r_peaks
from .core.errors import InsufficientBeatsError, NoBeatsError, ShapeError, ValidationError
from .records import LEAD_II, LEAD_NAMES, N_LEADS, ECGRecord, FeatureVector

RECORD_FEATURE_NAMES: Tuple[str, ...] = (
    ("mean_hr_bpm", "rr_std_s", "qrs_width_s")
    + tuple(f"rms_{lead}" for lead in LEAD_NAMES)
    + ("r_amp_II_mv",)
)
BEAT_FEATURE_NAMES: Tuple[str, ...] = (
    ("rr_prev_s", "rr_next_s", "qrs_width_s", "r_amp_II_mv")
    + tuple(f"beat_rms_{lead}" for lead in LEAD_NAMES)
)

QRS_SEARCH_S = 0.1
QRS_THRESHOLD = 0.2


def record_r_peaks(record: ECGRecord) -> np.ndarray:
    """Annotated R-peaks if present, otherwise detected on lead II"""
    if record.r_peaks is not None and len(record.r_peaks):
        return record.r_peaks
    return detect_r_peaks(record.signal[LEAD_II], record.sampling_rate)


def _spatial_velocity(signal: np.ndarray, sampling_rate: float) -> np.ndarray:
    derivative = np.gradient(signal, axis=1) * sampling_rate
    return np.sqrt(np.sum(derivative ** 2, axis=0))


def qrs_widths(signal: np.ndarray, r_peaks: np.ndarray, sampling_rate: float) -> np.ndarray:
    """
    Per-beat QRS width [s] from the spatial velocity envelope.

    Around each R-peak the envelope is searched within +/- QRS_SEARCH_S; the
    QRS spans the first to last sample above QRS_THRESHOLD of the local maximum.
    """
    velocity = _spatial_velocity(signal, sampling_rate)
    half = int(round(QRS_SEARCH_S * sampling_rate))
    n = velocity.size
    widths = np.empty(len(r_peaks))
    for i, r in enumerate(r_peaks):
        lo, hi = max(0, int(r) - half), min(n, int(r) + half + 1)
        local = velocity[lo:hi]
        peak = float(local.max())
        if peak <= 0:
            widths[i] = 0.0
            continue
        idx = np.flatnonzero(local >= QRS_THRESHOLD * peak)
        widths[i] = (idx.max() - idx.min() + 1) / sampling_rate
    return widths


def extract_features(record: ECGRecord, r_peaks: Optional[np.ndarray] = None) -> FeatureVector:
    """
    Compute the 16 record-level features.

    Args:
        record: A 12-lead record
        r_peaks: Optional precomputed R-peaks; annotations or detection otherwise

    Raises:
        ShapeError: If the record does not have 12 leads
        InsufficientBeatsError: If fewer than 2 R-peaks are available
    """
    if record.n_leads != N_LEADS:
        raise ShapeError(f"Feature extraction needs {N_LEADS} leads, got {record.n_leads}")
    if r_peaks is None:
        try:
            r_peaks = record_r_peaks(record)
        except NoBeatsError as e:
            raise InsufficientBeatsError(f"Record {record.record_id}: {e}") from e
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if len(r_peaks) < 2:
        raise InsufficientBeatsError(
            f"Record {record.record_id} has {len(r_peaks)} R-peak(s); at least 2 are needed"
        )

    fs = record.sampling_rate
    rr = np.diff(r_peaks) / fs
    mean_hr = 60.0 / float(np.mean(rr))
    rr_std = float(np.std(rr))
    qrs_width = float(np.mean(qrs_widths(record.signal, r_peaks, fs)))
    rms = np.sqrt(np.mean(record.signal ** 2, axis=1))
    r_amp = float(np.mean(record.signal[LEAD_II, r_peaks]))

    values = np.concatenate(([mean_hr, rr_std, qrs_width], rms, [r_amp]))
    return FeatureVector(values=values, feature_names=RECORD_FEATURE_NAMES)


def extract_beat_features(record: ECGRecord, r_peaks: np.ndarray, n: int) -> np.ndarray:
    """
    Per-beat feature matrix (M x 16) over windows of n samples centred on each R-peak.

    Beats without a neighbour on one side reuse the other RR interval; a lone
    beat gets RR features of 0.
    """
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if len(r_peaks) == 0:
        raise InsufficientBeatsError(f"Record {record.record_id} has no beats")
    if record.n_leads != N_LEADS:
        raise ShapeError(f"Beat features need {N_LEADS} leads, got {record.n_leads}")
    fs = record.sampling_rate
    rr = np.diff(r_peaks) / fs
    if len(rr):
        rr_prev = np.concatenate(([rr[0]], rr))
        rr_next = np.concatenate((rr, [rr[-1]]))
    else:
        rr_prev = rr_next = np.zeros(1)

    widths = qrs_widths(record.signal, r_peaks, fs)
    amps = record.signal[LEAD_II, r_peaks]
    half = n // 2
    rms = np.empty((len(r_peaks), record.n_leads))
    for i, r in enumerate(r_peaks):
        lo, hi = max(0, int(r) - half), min(record.n_samples, int(r) + half)
        rms[i] = np.sqrt(np.mean(record.signal[:, lo:hi] ** 2, axis=1))
    return np.column_stack([rr_prev, rr_next, widths, amps, rms])


@dataclass
class FeatureScaler:
    """Per-feature z-scoring fitted on the pretraining split."""

    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    def fit(self, matrix: np.ndarray) -> "FeatureScaler":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ValidationError("Feature matrix must be 2-D with at least one row")
        self.mean = matrix.mean(axis=0)
        self.std = matrix.std(axis=0)
        return self

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise ValidationError("FeatureScaler.transform called before fit")
        centred = np.asarray(matrix, dtype=np.float64) - self.mean
        # Constant features are centred only
        scale = np.where(self.std > 0, self.std, 1.0)
        return centred / scale

    def fit_transform(self, matrix: np.ndarray) -> np.ndarray:
        return self.fit(matrix).transform(matrix)
