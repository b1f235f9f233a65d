"""
Contrastive target matrices.

Rows and columns follow the two-view layout [view-1 batch; view-2 batch], so
sample i and sample i + N are the two augmentations of the same record (or
of the same beat position). Every builder returns the raw weights as well as
the row-normalised weights the loss consumes.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core.errors import ConfigurationError, DegenerateFeatureError, ValidationError

TARGET_MODES = ("hard", "soft_1", "soft_2", "beat_hard")


@dataclass(frozen=True, eq=False)
class TargetMatrix:
    """Row-normalised contrastive weights plus the raw matrix they came from."""

    weights: np.ndarray
    raw: np.ndarray
    mode: str
    exponent: float = 1.0

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def active_rows(self) -> np.ndarray:
        """Rows that contribute to the loss (any positive weight)"""
        return self.weights.sum(axis=1) > 0


def row_normalize(weights: np.ndarray) -> np.ndarray:
    """Scale each row to sum 1; all-zero rows stay zero"""
    weights = np.asarray(weights, dtype=np.float64)
    sums = weights.sum(axis=1, keepdims=True)
    return np.divide(weights, sums, out=np.zeros_like(weights), where=sums > 0)


def row_entropy(weights: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of every normalised row; 0 for empty rows"""
    p = row_normalize(weights)
    logs = np.log(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=1)


def _finish(raw: np.ndarray, mode: str, exponent: float = 1.0) -> TargetMatrix:
    np.fill_diagonal(raw, 0.0)
    return TargetMatrix(weights=row_normalize(raw), raw=raw, mode=mode, exponent=float(exponent))


def _features(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError(f"Features must be an N x F matrix, got shape {features.shape}")
    if features.shape[1] < 2:
        raise ValidationError("Soft targets need at least 2 features per sample")
    if not np.all(np.isfinite(features)):
        raise ValidationError("Features must be finite")
    return features


def _check_exponent(exponent: float) -> float:
    exponent = float(exponent)
    if not exponent > 0:
        raise ConfigurationError(f"exponent must be positive, got {exponent}")
    return exponent


def hard_targets(n: int) -> TargetMatrix:
    """Positives only between the two views of each record"""
    if n < 1:
        raise ValidationError(f"Batch size must be >= 1, got {n}")
    raw = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    raw[idx, idx + n] = 1.0
    raw[idx + n, idx] = 1.0
    return _finish(raw, "hard")


def soft1_targets(features: np.ndarray, exponent: float = 1.0) -> TargetMatrix:
    """
    Cosine-similarity targets over the feature set concatenated with itself.

    Negative similarities are clamped to 0 before raising to the exponent.

    Raises:
        DegenerateFeatureError: If any feature row has zero norm
    """
    features = _features(features)
    exponent = _check_exponent(exponent)
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0):
        bad = np.flatnonzero(norms == 0).tolist()
        raise DegenerateFeatureError(f"Zero-norm feature rows {bad}; cosine similarity undefined")
    unit = np.vstack([features, features]) / np.concatenate([norms, norms])[:, None]
    cos = unit @ unit.T
    cos = (cos + cos.T) / 2
    raw = np.clip(cos, 0.0, 1.0) ** exponent
    return _finish(raw, "soft_1", exponent)


def neighbour_weights(features: np.ndarray, k: int, p_norm: float = 2.0) -> np.ndarray:
    """
    N x N top-k weights: the j-th nearest neighbour (self excluded) gets (k - j + 1) / k.

    Ties are broken by ascending sample index.
    """
    features = _features(features)
    n = features.shape[0]
    if not 1 <= k < n:
        raise ConfigurationError(f"k must satisfy 1 <= k < N, got k={k} with N={n}")
    if p_norm < 1:
        raise ConfigurationError(f"p_norm must be >= 1, got {p_norm}")
    dist = cdist(features, features, metric="minkowski", p=p_norm)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    block = np.zeros((n, n))
    ranks = (k - np.arange(k)) / k
    block[np.arange(n)[:, None], order] = ranks[None, :]
    return block


def soft2_targets(features: np.ndarray, k: int = 3, p_norm: float = 2.0,
                  exponent: float = 1.0) -> TargetMatrix:
    """
    Top-k neighbour targets tiled to the two-view layout.

    The twin of every sample gets raw weight 1, the matrix is symmetrised by
    elementwise max, then raised to the exponent.

    Raises:
        ConfigurationError: If k >= N
    """
    exponent = _check_exponent(exponent)
    block = neighbour_weights(features, k, p_norm)
    n = block.shape[0]
    raw = np.block([[block, block], [block, block]])
    idx = np.arange(n)
    raw[idx, idx + n] = 1.0
    raw[idx + n, idx] = 1.0
    raw = np.maximum(raw, raw.T)
    np.fill_diagonal(raw, 0.0)
    raw = raw ** exponent
    return _finish(raw, "soft_2", exponent)


def beat_hard_targets(classes: Sequence[str]) -> TargetMatrix:
    """Positives between beats sharing a pseudo-label; rows without one stay empty"""
    labels = np.asarray(list(classes))
    if labels.size < 2:
        raise ValidationError(f"Beat targets need at least 2 beats, got {labels.size}")
    raw = (labels[:, None] == labels[None, :]).astype(np.float64)
    return _finish(raw, "beat_hard")


def build_rhythm_targets(mode: str, n: int, features: Optional[np.ndarray] = None,
                         exponent: float = 1.0, k: int = 3, p_norm: float = 2.0,
                         soft2_exponent: float = 1.0) -> TargetMatrix:
    """Rhythm-level targets for a batch of n records"""
    if mode == "hard":
        return hard_targets(n)
    if features is None or len(features) != n:
        raise ValidationError(f"Mode {mode} needs one feature row per record")
    if mode == "soft_1":
        return soft1_targets(features, exponent)
    if mode == "soft_2":
        return soft2_targets(features, k, p_norm, soft2_exponent)
    raise ConfigurationError(f"Unknown rhythm target mode {mode!r}")


def build_beat_targets(mode: str, classes: Optional[Sequence[str]] = None,
                       features: Optional[np.ndarray] = None, exponent: float = 1.0,
                       k: int = 3, p_norm: float = 2.0, soft2_exponent: float = 1.0) -> TargetMatrix:
    """
    Beat-level targets over the beats of both views.

    classes and features describe one view (M beats); the matrix is 2M x 2M
    with beat i of view 1 twinned to beat i of view 2.
    """
    if mode == "hard":
        if classes is None:
            raise ValidationError("Hard beat targets need pseudo-labels")
        return beat_hard_targets(list(classes) + list(classes))
    if features is None:
        raise ValidationError(f"Beat mode {mode} needs per-beat features")
    if mode == "soft_1":
        return soft1_targets(features, exponent)
    if mode == "soft_2":
        return soft2_targets(features, k, p_norm, soft2_exponent)
    raise ConfigurationError(f"Unknown beat target mode {mode!r}")
