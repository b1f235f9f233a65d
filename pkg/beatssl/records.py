"""
Signal records and their annotations.

An ECGRecord is the unit every other module consumes: a leads x samples
voltage matrix in millivolts with its sampling rate, fold assignment and
optional beat, wave and rhythm annotations.
"""

from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from .core.errors import IntegrityError, ValidationError
from .core.validation import validate_record_id, validate_sampling_rate, validate_signal

LEAD_NAMES: Tuple[str, ...] = (
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
)
N_LEADS = len(LEAD_NAMES)
LEAD_II = LEAD_NAMES.index("II")

# AAMI heartbeat superclasses
BEAT_CLASSES: Tuple[str, ...] = ("N", "S", "V", "F", "Q")

BACKGROUND, P_WAVE, QRS_COMPLEX, T_WAVE = 0, 1, 2, 3
WAVE_NAMES: Tuple[str, ...] = ("background", "P", "QRS", "T")

REFRACTORY_S = 0.2


def lead_index(name: str) -> int:
    """Row of a lead in the standard 12-lead order"""
    try:
        return LEAD_NAMES.index(name)
    except ValueError:
        raise ValidationError(f"Unknown lead {name!r}; expected one of {LEAD_NAMES}") from None


@dataclass(frozen=True, eq=False)
class BeatAnnotation:
    """R-peak positions with one AAMI class per peak."""

    r_peaks: np.ndarray
    classes: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "r_peaks", np.asarray(self.r_peaks, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "classes", tuple(self.classes))

    def __len__(self) -> int:
        return len(self.r_peaks)

    def validate(self, sampling_rate: float, n_samples: int) -> "BeatAnnotation":
        """
        Check ordering, range, refractory spacing and class labels.

        Raises:
            IntegrityError: If any invariant is violated
        """
        peaks = self.r_peaks
        if len(self.classes) != len(peaks):
            raise IntegrityError(f"{len(peaks)} R-peaks but {len(self.classes)} classes")
        if len(peaks) and (peaks[0] < 0 or peaks[-1] >= n_samples):
            raise IntegrityError(f"R-peaks must lie in [0, {n_samples})")
        gaps = np.diff(peaks)
        if np.any(gaps <= 0):
            raise IntegrityError("R-peaks must be strictly increasing")
        min_gap = REFRACTORY_S * sampling_rate
        if np.any(gaps < min_gap - 1e-9):
            raise IntegrityError(f"R-peaks closer than {REFRACTORY_S} s")
        unknown = sorted(set(self.classes) - set(BEAT_CLASSES))
        if unknown:
            raise IntegrityError(f"Unknown beat classes {unknown}; expected {BEAT_CLASSES}")
        return self


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Per-sample wave labels: 0 background, 1 P, 2 QRS, 3 T."""

    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.uint8).reshape(-1))

    def __len__(self) -> int:
        return len(self.labels)

    def runs(self) -> List[Tuple[int, int, int]]:
        """Maximal runs of equal non-background labels as (start, end, label)"""
        labels = self.labels
        if labels.size == 0:
            return []
        change = np.flatnonzero(np.diff(labels.astype(np.int16))) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [labels.size]))
        return [(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends) if labels[s] != BACKGROUND]

    def validate(self, n_samples: int) -> "SegmentationMask":
        """
        Raises:
            IntegrityError: On wrong length, unknown labels, or two wave classes
                touching without background in between
        """
        if len(self.labels) != n_samples:
            raise IntegrityError(f"Mask has {len(self.labels)} samples, signal has {n_samples}")
        if self.labels.size and self.labels.max() > T_WAVE:
            raise IntegrityError("Mask labels must lie in {0, 1, 2, 3}")
        nonzero = self.labels != BACKGROUND
        touching = nonzero[1:] & nonzero[:-1] & (self.labels[1:] != self.labels[:-1])
        if np.any(touching):
            raise IntegrityError("Different waves must be separated by background")
        return self


@dataclass(eq=False)
class ECGRecord:
    """A multilead ECG with sampling rate, fold and optional annotations."""

    signal: np.ndarray
    sampling_rate: float
    record_id: str
    fold: Optional[int] = None
    beat_annotations: Optional[BeatAnnotation] = None
    wave_masks: Optional[SegmentationMask] = None
    rhythm_labels: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        self.signal = validate_signal(self.signal)
        self.sampling_rate = validate_sampling_rate(self.sampling_rate)
        self.record_id = validate_record_id(self.record_id)
        self.rhythm_labels = frozenset(self.rhythm_labels)
        if self.fold is not None:
            self.fold = int(self.fold)
            if not 1 <= self.fold <= 10:
                raise ValidationError(f"Fold must lie in 1..10, got {self.fold}")
        if self.beat_annotations is not None:
            self.beat_annotations.validate(self.sampling_rate, self.n_samples)
        if self.wave_masks is not None:
            self.wave_masks.validate(self.n_samples)

    @property
    def n_leads(self) -> int:
        return self.signal.shape[0]

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate

    def lead(self, name: str) -> np.ndarray:
        return self.signal[lead_index(name)]

    @property
    def r_peaks(self) -> Optional[np.ndarray]:
        return None if self.beat_annotations is None else self.beat_annotations.r_peaks

    def with_signal(self, signal: np.ndarray) -> "ECGRecord":
        """Copy with a replaced signal of the same shape"""
        signal = validate_signal(signal, n_leads=self.n_leads)
        if signal.shape != self.signal.shape:
            raise ValidationError(f"Replacement signal shape {signal.shape} != {self.signal.shape}")
        return replace(self, signal=signal)

    def scaled(self, factor: float) -> "ECGRecord":
        """Copy with every sample multiplied by factor"""
        return self.with_signal(self.signal * float(factor))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fixed-length real feature vector with ordered names."""

    values: np.ndarray
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(values) != len(self.feature_names):
            raise ValidationError(f"{len(values)} values but {len(self.feature_names)} names")
        if len(values) < 2:
            raise ValidationError("Feature vectors need at least 2 entries")
        if not np.all(np.isfinite(values)):
            raise ValidationError("Feature values must be finite")

    def as_dict(self) -> dict:
        return dict(zip(self.feature_names, self.values.tolist()))
