"""
Input validation shared by the data, augmentation and evaluation modules.

Each validator checks one thing, raises with a message naming the limit that
was violated, and returns the normalised value.
"""

import re
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError, ValidationError

# Limits
MAX_RECORD_ID_LENGTH = 100
MIN_SAMPLING_RATE = 100.0
DISTRIBUTION_TOLERANCE = 1e-9
UNIT_AXIS_TOLERANCE = 1e-9
FOLD_RANGE = range(1, 11)

VALID_RECORD_ID_PATTERN = re.compile(r'^[a-zA-Z0-9_.-]+$')


def validate_record_id(record_id: str) -> str:
    """
    Validate a record identifier.

    Record ids name sidecar files on disk, so path separators and parent
    references are rejected rather than stripped.

    Raises:
        ValidationError: If the id is empty, too long or contains other characters
    """
    if not record_id or not isinstance(record_id, str):
        raise ValidationError("Record id must be a non-empty string")

    sanitized = record_id.strip()
    if len(sanitized) > MAX_RECORD_ID_LENGTH:
        raise ValidationError(f"Record id too long (max {MAX_RECORD_ID_LENGTH} chars)")
    if '..' in sanitized or not VALID_RECORD_ID_PATTERN.match(sanitized):
        raise ValidationError(
            f"Record id {record_id!r} can only contain letters, numbers, '_', '-' and '.'"
        )
    return sanitized


def validate_signal(signal, n_leads: Optional[int] = None) -> np.ndarray:
    """
    Validate a leads x samples voltage matrix.

    Args:
        signal: Array-like of shape (L, D)
        n_leads: Required number of rows, or None to accept any

    Returns:
        The signal as a float64 array

    Raises:
        ShapeError: If the array is not 2-D or has the wrong lead count
        ValidationError: If any sample is NaN or infinite
    """
    array = np.asarray(signal, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"Signal must be 2-D (leads x samples), got shape {array.shape}")
    if n_leads is not None and array.shape[0] != n_leads:
        raise ShapeError(f"Expected {n_leads} leads, got {array.shape[0]}")
    if not np.all(np.isfinite(array)):
        raise ValidationError("Signal contains NaN or infinite samples")
    return array


def validate_sampling_rate(sampling_rate: float) -> float:
    """Validate a sampling rate in Hz."""
    rate = float(sampling_rate)
    if not np.isfinite(rate) or rate < MIN_SAMPLING_RATE:
        raise ConfigurationError(f"Sampling rate must be >= {MIN_SAMPLING_RATE:g} Hz, got {rate:g}")
    return rate


def validate_fold_set(split: Iterable[int]) -> frozenset:
    """
    Validate a set of fold ids.

    Raises:
        ConfigurationError: If the set is empty or holds ids outside 1..10
    """
    folds = frozenset(int(f) for f in split)
    if not folds:
        raise ConfigurationError("Fold set must not be empty")
    invalid = sorted(f for f in folds if f not in FOLD_RANGE)
    if invalid:
        raise ConfigurationError(f"Fold ids must lie in 1..10, got {invalid}")
    return folds


def validate_distribution(weights: Mapping[str, float], allowed: Optional[Sequence[str]] = None) -> dict:
    """
    Validate a categorical distribution given as name -> weight.

    Raises:
        ConfigurationError: On unknown names, negative weights, or a total
            that differs from 1 by more than DISTRIBUTION_TOLERANCE
    """
    if not weights:
        raise ConfigurationError("Distribution must have at least one entry")
    if allowed is not None:
        unknown = sorted(set(weights) - set(allowed))
        if unknown:
            raise ConfigurationError(f"Unknown classes in distribution: {unknown}; allowed: {list(allowed)}")
    if any(w < 0 for w in weights.values()):
        raise ConfigurationError("Distribution weights must be non-negative")
    total = float(sum(weights.values()))
    if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
        raise ConfigurationError(f"Distribution weights must sum to 1 (got {total!r})")
    return {str(k): float(v) for k, v in weights.items()}


def validate_unit_axis(axis) -> np.ndarray:
    """
    Validate a rotation axis.

    Raises:
        ValidationError: If the axis is not a 3-vector of norm 1 within tolerance
    """
    vector = np.asarray(axis, dtype=np.float64)
    if vector.shape != (3,):
        raise ValidationError(f"Rotation axis must be a 3-vector, got shape {vector.shape}")
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_AXIS_TOLERANCE:
        raise ValidationError(f"Rotation axis must have unit norm (got {norm!r})")
    return vector


def validate_interval(name: str, interval: Sequence[float], lower: float, upper: float) -> tuple:
    """Validate a closed [lo, hi] interval that must lie inside [lower, upper]."""
    if len(interval) != 2:
        raise ConfigurationError(f"{name} must be a [low, high] pair")
    lo, hi = float(interval[0]), float(interval[1])
    if lo > hi:
        raise ConfigurationError(f"{name} has low > high ({lo} > {hi})")
    if lo < lower or hi > upper:
        raise ConfigurationError(f"{name} must lie within [{lower}, {upper}], got [{lo}, {hi}]")
    return lo, hi


def validate_file_path_security(file_path: Path, base_directory: Path) -> bool:
    """
    Check that a file path stays inside the expected base directory.

    Returns:
        True if the path is inside base_directory, False otherwise
    """
    try:
        resolved_file = file_path.resolve()
        resolved_base = base_directory.resolve()
        try:
            resolved_file.relative_to(resolved_base)
            return True
        except ValueError:
            return False
    except (OSError, RuntimeError):
        return False
