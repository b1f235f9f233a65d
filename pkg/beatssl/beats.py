"""
Heartbeat plumbing: R-peak detection, beat cropping, projection of beats onto
encoder frames and ROI pooling of the shared feature map.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from scipy.signal import butter, filtfilt, find_peaks

from .core.errors import ConfigurationError, NoBeatsError, ShapeError, ValidationError
from .records import REFRACTORY_S

# QRS energy band and integration window
DETECTION_BAND_HZ = (5.0, 15.0)
INTEGRATION_WINDOW_S = 0.15
DETECTION_THRESHOLD = 0.3
REFINE_WINDOW_S = 0.08


def detect_r_peaks(lead_ii: np.ndarray, sampling_rate: float) -> np.ndarray:
    """
    Detect R-peaks on a single lead.

    The lead is band-passed to the QRS band, differentiated, squared and
    integrated over a centred moving window. Candidate peaks of that envelope
    (at least REFRACTORY_S apart, above DETECTION_THRESHOLD of its maximum) are
    refined to the largest absolute band-passed sample nearby.

    Raises:
        ValidationError: If the signal is shorter than 2 s
        NoBeatsError: If the signal is flat or no candidate survives
    """
    x = np.asarray(lead_ii, dtype=np.float64).reshape(-1)
    fs = float(sampling_rate)
    if x.size < 2 * fs:
        raise ValidationError(f"R-peak detection needs at least 2 s of signal, got {x.size / fs:.2f} s")
    if not np.all(np.isfinite(x)) or np.ptp(x) == 0:
        raise NoBeatsError("Signal is flat; no beats to detect")

    nyquist = fs / 2
    high = min(DETECTION_BAND_HZ[1], 0.9 * nyquist)
    b, a = butter(3, [DETECTION_BAND_HZ[0], high], btype="bandpass", fs=fs)
    filtered = filtfilt(b, a, x)
    envelope = np.gradient(filtered) ** 2
    width = max(1, int(round(INTEGRATION_WINDOW_S * fs)))
    integrated = np.convolve(envelope, np.ones(width) / width, mode="same")
    if integrated.max() <= 0:
        raise NoBeatsError("Signal has no QRS-band energy")

    distance = int(math.ceil(REFRACTORY_S * fs))
    candidates, _ = find_peaks(integrated, height=DETECTION_THRESHOLD * integrated.max(), distance=distance)
    if candidates.size == 0:
        raise NoBeatsError("No QRS complex found")

    half = int(round(REFINE_WINDOW_S * fs))
    refined = []
    for p in candidates:
        lo, hi = max(0, p - half), min(x.size, p + half + 1)
        refined.append(lo + int(np.argmax(np.abs(filtered[lo:hi]))))

    # Refinement can pull two candidates together; keep the stronger one
    peaks: List[int] = []
    strengths: List[float] = []
    for r, p in zip(refined, candidates):
        if peaks and r - peaks[-1] < distance:
            if integrated[p] > strengths[-1]:
                peaks[-1], strengths[-1] = r, float(integrated[p])
            continue
        if peaks and r <= peaks[-1]:
            continue
        peaks.append(r)
        strengths.append(float(integrated[p]))
    return np.asarray(peaks, dtype=np.int64)


@dataclass(frozen=True)
class BeatCrop:
    """Where a crop sits in the source signal and how much of it is padding."""
    start: int
    end: int
    pad_left: int
    pad_right: int

    @property
    def padded(self) -> bool:
        return self.pad_left > 0 or self.pad_right > 0


def _check_window(n: int, n_samples: int) -> None:
    if n <= 0 or n % 2:
        raise ConfigurationError(f"Beat window must be a positive even number of samples, got {n}")
    if n > n_samples:
        raise ConfigurationError(f"Beat window {n} is longer than the signal ({n_samples} samples)")


def crop_beat(ecg: np.ndarray, r_peak: int, n: int) -> Tuple[np.ndarray, BeatCrop]:
    """
    Crop [r_peak - n/2, r_peak + n/2) from every lead, zero-padding outside the signal.

    Raises:
        ConfigurationError: If n is odd or longer than the signal
        ValidationError: If r_peak lies outside the signal
    """
    ecg = np.asarray(ecg)
    if ecg.ndim != 2:
        raise ShapeError(f"Expected a leads x samples matrix, got shape {ecg.shape}")
    n_samples = ecg.shape[1]
    _check_window(n, n_samples)
    r_peak = int(r_peak)
    if not 0 <= r_peak < n_samples:
        raise ValidationError(f"R-peak {r_peak} outside [0, {n_samples})")

    start = r_peak - n // 2
    end = start + n
    pad_left = max(0, -start)
    pad_right = max(0, end - n_samples)
    out = np.zeros((ecg.shape[0], n), dtype=ecg.dtype)
    out[:, pad_left:n - pad_right] = ecg[:, start + pad_left:end - pad_right]
    return out, BeatCrop(start=start, end=end, pad_left=pad_left, pad_right=pad_right)


def n_frames_for(n_samples: int, stride: int) -> int:
    """Encoder output length for an input of n_samples"""
    return -(-int(n_samples) // int(stride))


def map_rpeak_to_frames(r_peak: int, n: int, stride: int, n_frames: int) -> Tuple[int, int]:
    """
    Project a beat window onto encoder frames.

    f_start = floor((r_peak - n/2) / stride), f_end = ceil((r_peak + n/2) / stride),
    both clamped to the frame range; the result is never empty.
    """
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if n_frames < 1:
        raise ConfigurationError(f"n_frames must be >= 1, got {n_frames}")
    half = int(n) // 2
    r_peak = int(r_peak)
    f_start = (r_peak - half) // stride
    f_end = -(-(r_peak + half) // stride)
    f_start = min(max(f_start, 0), n_frames - 1)
    f_end = min(max(f_end, 1), n_frames)
    if f_end <= f_start:
        f_end = f_start + 1
    return f_start, f_end


@dataclass(frozen=True)
class BeatWindow:
    """One beat's sample span and the encoder frames it projects onto."""
    record_id: str
    r_peak: int
    span: Tuple[int, int]
    frame_span: Tuple[int, int]
    n: int

    @property
    def padding_fraction(self) -> float:
        return 1.0 - (self.span[1] - self.span[0]) / self.n


def beat_windows(record_id: str, r_peaks: Sequence[int], n: int, n_samples: int, stride: int,
                 max_padding_fraction: float = 0.5) -> List[BeatWindow]:
    """
    Windows for every beat whose crop is at most max_padding_fraction padding.
    """
    _check_window(n, n_samples)
    n_frames = n_frames_for(n_samples, stride)
    half = n // 2
    windows = []
    for r in r_peaks:
        r = int(r)
        span = (max(0, r - half), min(n_samples, r + half))
        window = BeatWindow(
            record_id=record_id,
            r_peak=r,
            span=span,
            frame_span=map_rpeak_to_frames(r, n, stride, n_frames),
            n=n,
        )
        if window.padding_fraction <= max_padding_fraction:
            windows.append(window)
    return windows


def roi_pool(feature_map, window: Tuple[int, int], reducer: str = "mean"):
    """
    Pool the frames of an n_frames x C feature map inside [start, end).

    Works on numpy arrays and torch tensors alike.

    Raises:
        ValidationError: If the window is empty or outside the map
    """
    start, end = int(window[0]), int(window[1])
    n_frames = feature_map.shape[0]
    if not 0 <= start < end <= n_frames:
        raise ValidationError(f"Frame window [{start}, {end}) invalid for {n_frames} frames")
    region = feature_map[start:end]
    if reducer == "mean":
        return region.mean(0)
    if reducer == "max":
        if isinstance(region, torch.Tensor):
            return region.amax(0)
        return region.max(0)
    raise ConfigurationError(f"Unknown pooling reducer {reducer!r}")
