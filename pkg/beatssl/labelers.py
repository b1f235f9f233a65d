"""
Pseudo-labelers: anything that maps a lead-II beat crop to an AAMI class.

The beat-level hard targets only need a deterministic classify(); which model
sits behind it is a deployment choice (rule thresholds, a generator oracle for
synthetic data, or an external TorchScript checkpoint).
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import torch

from .beats import crop_beat
from .core.errors import ConfigurationError, ValidationError
from .features import record_r_peaks
from .records import BEAT_CLASSES, LEAD_II, ECGRecord

logger = logging.getLogger(__name__)

# Rule-based thresholds
WIDE_QRS_S = 0.12
BORDERLINE_QRS_S = 0.10
PREMATURE_RATIO = 0.85
MIN_AMPLITUDE_MV = 0.1


@dataclass(frozen=True)
class RRContext:
    """RR intervals around a beat, in seconds."""
    rr_prev: float
    rr_next: float
    rr_mean: float

    @property
    def prematurity(self) -> float:
        return self.rr_prev / self.rr_mean if self.rr_mean > 0 else 1.0


@runtime_checkable
class PseudoLabeler(Protocol):
    def classify(self, beat: np.ndarray, rr_context: Optional[RRContext] = None) -> str:
        ...


def _beat_key(beat: np.ndarray) -> str:
    data = np.ascontiguousarray(np.asarray(beat, dtype=np.float32).reshape(-1))
    return hashlib.sha1(data.tobytes()).hexdigest()


class RuleBasedLabeler:
    """
    QRS width and RR prematurity thresholds.

    Wide QRS (> 120 ms) is V, borderline (100-120 ms) is F, a narrow premature
    beat is S, a near-flat crop is Q, everything else N.
    """

    def __init__(self, sampling_rate: float = 500.0):
        self.sampling_rate = float(sampling_rate)

    def qrs_width(self, beat: np.ndarray) -> float:
        beat = np.asarray(beat, dtype=np.float64).reshape(-1)
        centre = beat.size // 2
        half = int(round(0.1 * self.sampling_rate))
        slope = np.abs(np.gradient(beat))[max(0, centre - half):centre + half + 1]
        if slope.size == 0 or slope.max() <= 0:
            return 0.0
        idx = np.flatnonzero(slope >= 0.2 * slope.max())
        return (idx.max() - idx.min() + 1) / self.sampling_rate

    def classify(self, beat: np.ndarray, rr_context: Optional[RRContext] = None) -> str:
        beat = np.asarray(beat, dtype=np.float64).reshape(-1)
        if np.ptp(beat) < MIN_AMPLITUDE_MV:
            return "Q"
        width = self.qrs_width(beat)
        if width > WIDE_QRS_S:
            return "V"
        if width > BORDERLINE_QRS_S:
            return "F"
        if rr_context is not None and rr_context.prematurity < PREMATURE_RATIO:
            return "S"
        return "N"


class SyntheticOracleLabeler:
    """Returns the generator's ground-truth class for every beat crop it has seen."""

    def __init__(self, table: Dict[str, str]):
        self._table = dict(table)

    @classmethod
    def from_records(cls, records: Sequence[ECGRecord], n: int) -> "SyntheticOracleLabeler":
        table = {}
        for record in records:
            if record.beat_annotations is None:
                continue
            lead = record.signal[LEAD_II:LEAD_II + 1]
            for r, label in zip(record.beat_annotations.r_peaks, record.beat_annotations.classes):
                crop, _ = crop_beat(lead, int(r), n)
                table[_beat_key(crop[0])] = label
        logger.debug("Oracle labeler indexed %d beats", len(table))
        return cls(table)

    def __len__(self) -> int:
        return len(self._table)

    def classify(self, beat: np.ndarray, rr_context: Optional[RRContext] = None) -> str:
        try:
            return self._table[_beat_key(beat)]
        except KeyError:
            raise ValidationError("Beat was not produced by the indexed records") from None


class TorchScriptLabeler:
    """
    External beat classifier saved with torch.jit.save.

    The module takes a (1, 1, n) float32 tensor and returns (1, 5) logits in
    N, S, V, F, Q order.
    """

    def __init__(self, path: Path):
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Labeler checkpoint not found: {path}")
        self.path = path
        self.module = torch.jit.load(str(path), map_location="cpu")
        self.module.eval()

    @torch.no_grad()
    def classify(self, beat: np.ndarray, rr_context: Optional[RRContext] = None) -> str:
        x = torch.as_tensor(np.asarray(beat, dtype=np.float32).reshape(1, 1, -1))
        logits = self.module(x).reshape(-1)
        if logits.numel() != len(BEAT_CLASSES):
            raise ValidationError(f"Labeler returned {logits.numel()} logits, expected {len(BEAT_CLASSES)}")
        return BEAT_CLASSES[int(torch.argmax(logits))]


def build_labeler(spec: str, records: Optional[Sequence[ECGRecord]] = None, n: int = 352,
                  sampling_rate: float = 500.0) -> PseudoLabeler:
    """
    Resolve a labeler from its config value: "rule", "oracle" or a checkpoint path.
    """
    if spec == "rule":
        return RuleBasedLabeler(sampling_rate)
    if spec == "oracle":
        if not records:
            raise ConfigurationError("The oracle labeler needs annotated records to index")
        return SyntheticOracleLabeler.from_records(records, n)
    return TorchScriptLabeler(Path(spec))


def rr_contexts(r_peaks: np.ndarray, sampling_rate: float) -> List[Optional[RRContext]]:
    """RR context per beat; None for a lone beat"""
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if len(r_peaks) < 2:
        return [None] * len(r_peaks)
    rr = np.diff(r_peaks) / sampling_rate
    rr_mean = float(rr.mean())
    prev = np.concatenate(([rr[0]], rr))
    nxt = np.concatenate((rr, [rr[-1]]))
    return [RRContext(float(p), float(q), rr_mean) for p, q in zip(prev, nxt)]


def pseudo_label_beats(record: ECGRecord, labeler: PseudoLabeler, n: int,
                       r_peaks: Optional[np.ndarray] = None) -> List[str]:
    """
    One class per R-peak from lead-II crops of width n.

    Raises:
        NoBeatsError: If the record has no annotated or detectable beats
    """
    if r_peaks is None:
        r_peaks = record_r_peaks(record)
    lead = record.signal[LEAD_II:LEAD_II + 1]
    labels = []
    for r, context in zip(r_peaks, rr_contexts(r_peaks, record.sampling_rate)):
        crop, _ = crop_beat(lead, int(r), n)
        label = labeler.classify(crop[0], context)
        if label not in BEAT_CLASSES:
            raise ValidationError(f"Labeler returned unknown class {label!r}")
        labels.append(label)
    return labels
