"""
Parametric synthetic 12-lead ECG generator.

Each record is driven by a 3-axis cardiac dipole built from Gaussian bumps
(P, Q, R, S, T) placed on an RR schedule. Leads are fixed linear projections of
the dipole onto physiological lead directions, so R-peaks, beat classes, wave
masks and rhythm labels are known exactly.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .core.errors import ConfigurationError
from .core.logging_config import get_logger
from .core.validation import validate_distribution, validate_sampling_rate
from .records import (
    BACKGROUND,
    P_WAVE,
    QRS_COMPLEX,
    T_WAVE,
    BeatAnnotation,
    ECGRecord,
    SegmentationMask,
)

logger = get_logger(__name__)

RHYTHM_CLASSES: Tuple[str, ...] = (
    "regular", "tachycardia", "irregular", "ventricular_ectopy", "atrial_ectopy",
)

# Lead directions in a body frame (X left, Y inferior, Z anterior), rows in the
# standard order I, II, III, aVR, aVL, aVF, V1..V6.
LEAD_VECTORS = np.array([
    [1.0, 0.0, 0.0],
    [0.5, 0.866, 0.0],
    [-0.5, 0.866, 0.0],
    [-0.866, -0.5, 0.0],
    [0.866, -0.5, 0.0],
    [0.0, 1.0, 0.0],
    [-0.144, -0.108, 0.983],
    [-0.066, -0.025, 0.997],
    [0.164, 0.088, 0.983],
    [0.454, 0.203, 0.867],
    [0.688, 0.243, 0.686],
    [0.912, 0.262, 0.317],
])


def _unit(*xyz: float) -> np.ndarray:
    v = np.asarray(xyz, dtype=np.float64)
    return v / np.linalg.norm(v)


# Dipole directions of the template waves
P_DIRECTION = _unit(0.5, 0.8, 0.1)
R_DIRECTION = _unit(0.55, 0.75, -0.35)
S_DIRECTION = _unit(-0.3, -0.2, -0.9)
T_DIRECTION = _unit(0.6, 0.7, -0.2)
V_DIRECTION = _unit(-0.5, 0.85, 0.6)

# Mask extents are +/- MASK_SIGMAS standard deviations around a bump centre
MASK_SIGMAS = 2.0
PREMATURE_PROBABILITY = 0.2
FUSION_PROBABILITY = 0.1


@dataclass(frozen=True)
class BeatSpec:
    """One planned beat: R time [s], AAMI class, preceding RR [s]."""
    time: float
    beat_class: str
    rr_prev: float


@dataclass(frozen=True)
class Morphology:
    """Per-record jitter of wave directions and amplitudes."""
    rotation: np.ndarray
    amplitude: float
    qrs_sigma: float
    p_amplitude: float
    t_amplitude: float


def _plan_beats(rng: np.random.Generator, rhythm: str, duration_s: float,
                max_beats: Optional[int]) -> List[BeatSpec]:
    if rhythm == "tachycardia":
        base = rng.uniform(0.45, 0.6)
    else:
        base = rng.uniform(0.8, 1.0)

    beats: List[BeatSpec] = []
    t = rng.uniform(0.1, base)
    rr_prev = base
    pending_pause = None
    while t < duration_s and (max_beats is None or len(beats) < max_beats):
        cls = "N"
        if rhythm == "ventricular_ectopy" and beats and beats[-1].beat_class == "N" and pending_pause is None:
            if rng.random() < PREMATURE_PROBABILITY:
                cls = "F" if rng.random() < FUSION_PROBABILITY else "V"
        elif rhythm == "atrial_ectopy" and beats and beats[-1].beat_class == "N" and pending_pause is None:
            if rng.random() < PREMATURE_PROBABILITY:
                cls = "S"

        if cls in ("V", "S") and beats:
            # Move this beat earlier and schedule a compensatory pause
            prematurity = 0.65 if cls == "V" else 0.7
            t = beats[-1].time + prematurity * base
            rr_prev = prematurity * base
            pending_pause = (2.0 - prematurity) * base if cls == "V" else 1.1 * base
        elif cls == "F" and beats:
            t = beats[-1].time + 0.92 * base
            rr_prev = 0.92 * base
        if t >= duration_s:
            break
        beats.append(BeatSpec(time=float(t), beat_class=cls, rr_prev=float(rr_prev)))

        if pending_pause is not None and cls in ("V", "S"):
            rr = pending_pause
            pending_pause = None
        elif rhythm == "irregular":
            rr = rng.uniform(0.4, 1.1)
        else:
            rr = base * (1.0 + 0.01 * rng.standard_normal())
        t += rr
        rr_prev = rr
    return beats


def _draw_morphology(rng: np.random.Generator) -> Morphology:
    rotvec = rng.normal(scale=np.deg2rad(6.0), size=3)
    return Morphology(
        rotation=Rotation.from_rotvec(rotvec).as_matrix(),
        amplitude=rng.uniform(0.85, 1.15),
        qrs_sigma=rng.uniform(0.009, 0.012),
        p_amplitude=rng.uniform(0.12, 0.2),
        t_amplitude=rng.uniform(0.3, 0.45),
    )


class _Canvas:
    """Accumulates dipole bumps and paints non-overlapping mask runs."""

    def __init__(self, n_samples: int, sampling_rate: float):
        self.fs = sampling_rate
        self.n = n_samples
        self.dipole = np.zeros((3, n_samples))
        self.mask = np.zeros(n_samples, dtype=np.uint8)
        self.runs: List[Tuple[int, int, int]] = []

    def bump(self, centre_s: float, sigma_s: float, amplitude: float, direction: np.ndarray) -> None:
        centre = centre_s * self.fs
        half = int(np.ceil(5 * sigma_s * self.fs))
        lo = max(0, int(np.floor(centre)) - half)
        hi = min(self.n, int(np.ceil(centre)) + half + 1)
        if lo >= hi:
            return
        t = np.arange(lo, hi)
        shape = amplitude * np.exp(-0.5 * ((t - centre) / (sigma_s * self.fs)) ** 2)
        self.dipole[:, lo:hi] += np.outer(direction, shape)

    def run(self, start_s: float, end_s: float, label: int) -> None:
        self.runs.append((int(round(start_s * self.fs)), int(round(end_s * self.fs)), label))

    def paint(self) -> np.ndarray:
        last_end = -1
        for start, end, label in sorted(self.runs):
            # Keep at least one background sample between neighbouring waves
            start = max(start, last_end + 1, 0)
            end = min(end, self.n)
            if start >= end:
                continue
            self.mask[start:end] = label
            last_end = end
        return self.mask


def _render_beat(canvas: _Canvas, beat: BeatSpec, m: Morphology, rhythm: str) -> None:
    rot = m.rotation
    r = beat.time
    rr = beat.rr_prev
    t_centre = 0.12 + 0.14 * rr
    t_sigma = 0.025 + 0.02 * rr
    pr = 0.12 + 0.05 * rr

    if beat.beat_class == "V":
        sigma = m.qrs_sigma * 2.5
        canvas.bump(r, sigma, 1.6 * m.amplitude, rot @ V_DIRECTION)
        canvas.run(r - 0.08, r + 0.08, QRS_COMPLEX)
        t_c = r + t_centre + 0.05
        canvas.bump(t_c, t_sigma * 1.2, -0.5 * m.amplitude, rot @ V_DIRECTION)
        canvas.run(t_c - MASK_SIGMAS * t_sigma * 1.2, t_c + MASK_SIGMAS * t_sigma * 1.2, T_WAVE)
        return

    has_p = rhythm != "irregular"
    if has_p:
        if beat.beat_class == "S":
            p_c, p_amp, p_dir = r - 0.11, -0.6 * m.p_amplitude, rot @ P_DIRECTION
        else:
            p_c, p_amp, p_dir = r - pr, m.p_amplitude, rot @ P_DIRECTION
        canvas.bump(p_c, 0.02, p_amp * m.amplitude, p_dir)
        canvas.run(p_c - MASK_SIGMAS * 0.02, p_c + MASK_SIGMAS * 0.02, P_WAVE)

    widen = 1.6 if beat.beat_class == "F" else 1.0
    sigma = m.qrs_sigma * widen
    canvas.bump(r - 0.025 * widen, 0.008, -0.12 * m.amplitude, rot @ R_DIRECTION)
    canvas.bump(r, sigma, 1.3 * m.amplitude, rot @ R_DIRECTION)
    canvas.bump(r + 0.028 * widen, 0.009, 0.35 * m.amplitude, rot @ S_DIRECTION)
    canvas.run(r - 0.045 * widen, r + 0.05 * widen, QRS_COMPLEX)

    t_c = r + t_centre
    canvas.bump(t_c, t_sigma, m.t_amplitude * m.amplitude, rot @ T_DIRECTION)
    canvas.run(t_c - MASK_SIGMAS * t_sigma, t_c + MASK_SIGMAS * t_sigma, T_WAVE)


def synth_record(rng: np.random.Generator, record_id: str, rhythm: str,
                 duration_s: float = 10.0, sampling_rate: float = 500.0,
                 fold: Optional[int] = None, noise_sigma: float = 0.01,
                 baseline_wander: float = 0.03,
                 max_beats: Optional[int] = None) -> ECGRecord:
    """Generate one record of the given rhythm class from an explicit rng"""
    if rhythm not in RHYTHM_CLASSES:
        raise ConfigurationError(f"Unknown rhythm class {rhythm!r}; expected one of {RHYTHM_CLASSES}")
    n_samples = int(round(duration_s * sampling_rate))
    morphology = _draw_morphology(rng)
    beats = _plan_beats(rng, rhythm, duration_s, max_beats)

    canvas = _Canvas(n_samples, sampling_rate)
    for beat in beats:
        _render_beat(canvas, beat, morphology, rhythm)
    mask = canvas.paint()

    signal = LEAD_VECTORS @ canvas.dipole
    t = np.arange(n_samples) / sampling_rate
    if baseline_wander > 0:
        freq = rng.uniform(0.15, 0.3)
        phases = rng.uniform(0, 2 * np.pi, size=(signal.shape[0], 1))
        signal += baseline_wander * np.sin(2 * np.pi * freq * t[None, :] + phases)
    if noise_sigma > 0:
        signal += rng.normal(scale=noise_sigma, size=signal.shape)

    r_peaks = np.array([int(round(b.time * sampling_rate)) for b in beats], dtype=np.int64)
    keep = r_peaks < n_samples
    annotation = BeatAnnotation(
        r_peaks=r_peaks[keep],
        classes=tuple(b.beat_class for b, k in zip(beats, keep) if k),
    )
    return ECGRecord(
        signal=signal,
        sampling_rate=sampling_rate,
        record_id=record_id,
        fold=fold,
        beat_annotations=annotation,
        wave_masks=SegmentationMask(mask),
        rhythm_labels=frozenset({rhythm}),
    )


def synth_generate(n_records: int, duration_s: float = 10.0, sampling_rate: float = 500.0,
                   class_mix: Optional[Mapping[str, float]] = None, seed: int = 0, *,
                   noise_sigma: float = 0.01, baseline_wander: float = 0.03,
                   max_beats: Optional[int] = None, id_prefix: str = "syn") -> List[ECGRecord]:
    """
    Generate synthetic 12-lead records with full ground truth.

    Records are assigned folds 1..10 round-robin. Identical arguments give
    bitwise-identical records.

    Args:
        n_records: Number of records (>= 1)
        duration_s: Record length in seconds
        sampling_rate: Samples per second (>= 100)
        class_mix: Rhythm class -> probability; defaults to all "regular"
        seed: Master seed
        max_beats: Optional cap on beats per record

    Raises:
        ConfigurationError: On an empty request or an invalid class mix
    """
    if int(n_records) < 1:
        raise ConfigurationError("n_records must be at least 1")
    sampling_rate = validate_sampling_rate(sampling_rate)
    if duration_s <= 0:
        raise ConfigurationError("duration_s must be positive")
    mix: Dict[str, float] = validate_distribution(class_mix or {"regular": 1.0}, allowed=RHYTHM_CLASSES)
    names = list(mix)
    probs = np.array([mix[n] for n in names])
    probs = probs / probs.sum()

    children = np.random.SeedSequence(seed).spawn(int(n_records))
    records = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        rhythm = names[int(rng.choice(len(names), p=probs))]
        records.append(synth_record(
            rng, f"{id_prefix}{i:05d}", rhythm,
            duration_s=duration_s, sampling_rate=sampling_rate,
            fold=i % 10 + 1, noise_sigma=noise_sigma,
            baseline_wander=baseline_wander, max_beats=max_beats,
        ))
    logger.debug("Generated %d synthetic records (seed %d, mix %s)", len(records), seed, mix)
    return records
