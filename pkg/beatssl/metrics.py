"""
Evaluation metrics and the MetricReport container.

Degenerate inputs (a label column with one class) do not raise: AUROC falls
back to 0.5, a UserWarning is emitted and the report keeps a note of it.
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import f1_score, roc_auc_score

from .core.errors import ShapeError, ValidationError
from .records import P_WAVE, QRS_COMPLEX, T_WAVE, WAVE_NAMES

WAVE_CLASSES = (P_WAVE, QRS_COMPLEX, T_WAVE)
DEFAULT_WINDOW = (500, 4500)


def _as_2d(array, name: str) -> np.ndarray:
    array = np.asarray(array)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2 or array.shape[0] == 0:
        raise ShapeError(f"{name} must be a nonempty vector or N x K matrix, got shape {array.shape}")
    return array


def _matched(a, b, a_name: str, b_name: str) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _as_2d(a, a_name), _as_2d(b, b_name)
    if a.shape != b.shape:
        raise ShapeError(f"{a_name} {a.shape} and {b_name} {b.shape} differ in shape")
    return a, b


def per_class_f1(predictions, labels, threshold: float = 0.5) -> np.ndarray:
    """F1 per label column; predictions are scores binarised at threshold"""
    scores, truth = _matched(predictions, labels, "predictions", "labels")
    predicted = (scores >= threshold).astype(int)
    truth = truth.astype(int)
    if truth.shape[1] == 1:
        return np.array([f1_score(truth[:, 0], predicted[:, 0], average="binary", zero_division=1.0)])
    return np.asarray(f1_score(truth, predicted, average=None, zero_division=1.0), dtype=np.float64)


def macro_f1(predictions, labels, threshold: float = 0.5) -> float:
    return float(np.mean(per_class_f1(predictions, labels, threshold)))


def dice(pred_mask, true_mask, cls: int) -> float:
    """2|A n B| / (|A| + |B|) for one class; 1.0 when the class is absent from both"""
    pred = np.asarray(pred_mask).reshape(-1)
    true = np.asarray(true_mask).reshape(-1)
    if pred.shape != true.shape or pred.size == 0:
        raise ShapeError(f"Masks must be nonempty and equal length, got {pred.shape} and {true.shape}")
    a = pred == cls
    b = true == cls
    total = int(a.sum() + b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.sum(a & b)) / total


def auroc(scores, labels) -> float:
    """
    Area under the ROC curve (rank statistic, ties mid-ranked).

    A single-class label vector yields 0.5 with a UserWarning.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape or scores.size == 0:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} must be nonempty and equal length")
    if np.unique(labels).size < 2:
        warnings.warn("AUROC undefined for a single-class label vector; reporting 0.5", UserWarning, stacklevel=2)
        return 0.5
    return float(roc_auc_score(labels, scores))


def macro_auroc(scores, labels) -> Tuple[float, np.ndarray, List[int]]:
    """Macro AUROC over label columns, the per-class values, and the degenerate columns"""
    scores, truth = _matched(scores, labels, "scores", "labels")
    values = np.empty(truth.shape[1])
    degenerate = []
    for c in range(truth.shape[1]):
        if np.unique(truth[:, c]).size < 2:
            degenerate.append(c)
            values[c] = 0.5
        else:
            values[c] = roc_auc_score(truth[:, c], scores[:, c])
    if degenerate:
        warnings.warn(f"AUROC undefined for single-class columns {degenerate}; reporting 0.5",
                      UserWarning, stacklevel=2)
    return float(values.mean()), values, degenerate


def segmentation_scores(pred, true, window: Tuple[int, int] = DEFAULT_WINDOW) -> Dict[str, Dict[str, float]]:
    """
    Sample-wise F1 and Dice for the P, QRS and T classes inside [start, end).

    pred and true are (D,) or (R, D) label arrays; samples outside the window
    are ignored.
    """
    pred = np.atleast_2d(np.asarray(pred))
    true = np.atleast_2d(np.asarray(true))
    if pred.shape != true.shape:
        raise ShapeError(f"Prediction {pred.shape} and truth {true.shape} differ in shape")
    start, end = int(window[0]), int(window[1])
    if not 0 <= start < end <= pred.shape[1]:
        raise ValidationError(f"Evaluation window [{start}, {end}) does not fit {pred.shape[1]} samples")
    p = pred[:, start:end].reshape(-1)
    t = true[:, start:end].reshape(-1)
    f1 = f1_score(t, p, labels=list(WAVE_CLASSES), average=None, zero_division=1.0)
    scores = {"f1": {}, "dice": {}}
    for value, cls in zip(f1, WAVE_CLASSES):
        scores["f1"][WAVE_NAMES[cls]] = float(value)
        scores["dice"][WAVE_NAMES[cls]] = dice(p, t, cls)
    return scores


@dataclass
class MetricReport:
    """Per-class and macro metric values for one evaluation run."""

    task: str
    per_class: Dict[str, Dict[str, float]]
    macro: Dict[str, float]
    seed: int
    config_hash: str
    splits: Dict[str, List[str]] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        for metric, value in self.macro.items():
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"Macro {metric} = {value} outside [0, 1]")
        for metric, values in self.per_class.items():
            for cls, value in values.items():
                if not 0.0 <= value <= 1.0:
                    raise ValidationError(f"{metric}[{cls}] = {value} outside [0, 1]")

    def rows(self, run: int, fold: int) -> List[dict]:
        """Score-table rows; macro values use class 'macro'"""
        rows = []
        for metric, value in self.macro.items():
            rows.append(self._row(run, fold, metric, "macro", value))
        for metric, values in self.per_class.items():
            for cls, value in values.items():
                rows.append(self._row(run, fold, metric, cls, value))
        return rows

    def _row(self, run: int, fold: int, metric: str, cls: str, value: float) -> dict:
        return {
            "task": self.task,
            "config_hash": self.config_hash,
            "run": run,
            "fold": fold,
            "metric": metric,
            "class": cls,
            "value": float(value),
        }


def probe_report(scores: np.ndarray, labels: np.ndarray, class_names: Sequence[str], seed: int,
                 config_hash: str, threshold: float = 0.5,
                 splits: Optional[Dict[str, List[str]]] = None) -> MetricReport:
    """Macro AUROC and macro F1 for multilabel probe outputs"""
    macro_auc, per_auc, degenerate = macro_auroc(scores, labels)
    per_f1 = per_class_f1(scores, labels, threshold)
    notes = [f"AUROC undefined for class {class_names[c]}; reported 0.5" for c in degenerate]
    return MetricReport(
        task="probe",
        per_class={
            "auroc": dict(zip(class_names, per_auc.tolist())),
            "f1": dict(zip(class_names, per_f1.tolist())),
        },
        macro={"auroc": macro_auc, "f1": float(per_f1.mean())},
        seed=seed,
        config_hash=config_hash,
        splits=splits or {},
        warnings=notes,
    )


def segment_report(pred: np.ndarray, true: np.ndarray, seed: int, config_hash: str,
                   window: Tuple[int, int] = DEFAULT_WINDOW,
                   splits: Optional[Dict[str, List[str]]] = None) -> MetricReport:
    """Per-wave F1/Dice and their macro averages (background excluded)"""
    scores = segmentation_scores(pred, true, window)
    return MetricReport(
        task="segment",
        per_class=scores,
        macro={metric: float(np.mean(list(values.values()))) for metric, values in scores.items()},
        seed=seed,
        config_hash=config_hash,
        splits=splits or {},
    )
