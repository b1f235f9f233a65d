"""
Weighted NT-Xent.

Each anchor row i spreads its target weight w[i, k] over every other sample k
and pays the soft cross-entropy against the temperature-scaled cosine
softmax. With hard two-view targets this is the usual SimCLR loss.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch
import torch.nn.functional as F

from .core.config import LossConfig
from .core.errors import DegenerateEmbeddingError, ShapeError, ValidationError
from .targets import TargetMatrix

WeightsLike = Union[TargetMatrix, np.ndarray, torch.Tensor]


def _weights_tensor(targets: WeightsLike, like: torch.Tensor) -> torch.Tensor:
    if isinstance(targets, TargetMatrix):
        targets = targets.weights
    return torch.as_tensor(np.asarray(targets) if not isinstance(targets, torch.Tensor) else targets,
                           dtype=like.dtype, device=like.device)


def _check_batch(z: torch.Tensor, w: torch.Tensor, tau: float) -> None:
    if z.ndim != 2 or z.shape[0] < 2:
        raise ShapeError(f"Projection batch must be S x d with S >= 2, got {tuple(z.shape)}")
    if w.shape != (z.shape[0], z.shape[0]):
        raise ShapeError(f"Targets {tuple(w.shape)} do not match batch size {z.shape[0]}")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")


def ntxent(z: torch.Tensor, targets: WeightsLike, tau: float = 0.1) -> torch.Tensor:
    """
    Mean weighted NT-Xent over the rows with any positive target weight.

    Raises:
        DegenerateEmbeddingError: If a projection row has zero norm
        ShapeError: If targets and batch disagree in size
    """
    z = torch.as_tensor(z)
    w = _weights_tensor(targets, z)
    _check_batch(z, w, tau)
    norms = z.norm(dim=1)
    if bool((norms == 0).any()):
        raise DegenerateEmbeddingError("Zero-norm projection row; cosine similarity undefined")

    unit = z / norms[:, None]
    eye = torch.eye(z.shape[0], dtype=torch.bool, device=z.device)
    sim = (unit @ unit.T / tau).masked_fill(eye, float("-inf"))
    shifted = sim - sim.max(dim=1, keepdim=True).values.detach()
    log_prob = shifted - torch.log(torch.exp(shifted).sum(dim=1, keepdim=True))
    log_prob = log_prob.masked_fill(eye, 0.0)

    per_row = -(w * log_prob).sum(dim=1)
    active = w.sum(dim=1) > 0
    if not bool(active.any()):
        return (z * 0).sum()
    return per_row[active].mean()


def ntxent_oracle(z, targets: WeightsLike, tau: float = 0.1) -> float:
    """Scalar-loop reference for ntxent; no vectorisation, no stabilisation"""
    if isinstance(targets, TargetMatrix):
        targets = targets.weights
    z = [[float(v) for v in row] for row in np.asarray(z.detach() if isinstance(z, torch.Tensor) else z)]
    w = [[float(v) for v in row] for row in np.asarray(targets.detach() if isinstance(targets, torch.Tensor) else targets)]
    s = len(z)
    if s < 2 or len(w) != s or any(len(row) != s for row in w):
        raise ShapeError("Targets do not match batch size")

    def norm(a):
        return math.sqrt(sum(x * x for x in a))

    def cosine(a, b):
        return sum(x * y for x, y in zip(a, b)) / (norm(a) * norm(b))

    if any(norm(row) == 0 for row in z):
        raise DegenerateEmbeddingError("Zero-norm projection row; cosine similarity undefined")

    total = 0.0
    counted = 0
    for i in range(s):
        if sum(w[i]) <= 0:
            continue
        denominator = 0.0
        for m in range(s):
            if m != i:
                denominator += math.exp(cosine(z[i], z[m]) / tau)
        row = 0.0
        for k in range(s):
            if k != i and w[i][k] != 0:
                row -= w[i][k] * math.log(math.exp(cosine(z[i], z[k]) / tau) / denominator)
        total += row
        counted += 1
    return total / counted if counted else 0.0


def classic_ntxent(z: torch.Tensor, tau: float = 0.1) -> torch.Tensor:
    """SimCLR NT-Xent for a [view-1; view-2] batch, as positive-vs-negatives cross-entropy"""
    z = torch.as_tensor(z)
    s = z.shape[0]
    if s < 2 or s % 2:
        raise ShapeError(f"Two-view batch needs an even size >= 2, got {s}")
    n = s // 2
    sim = F.cosine_similarity(z.unsqueeze(1), z.unsqueeze(0), dim=2) / tau
    positives = torch.cat([torch.diag(sim, n), torch.diag(sim, -n)]).unsqueeze(1)
    mask = torch.ones((s, s), dtype=torch.bool, device=z.device)
    mask.fill_diagonal_(False)
    idx = torch.arange(n, device=z.device)
    mask[idx, idx + n] = False
    mask[idx + n, idx] = False
    negatives = sim[mask].reshape(s, -1)
    logits = torch.cat([positives, negatives], dim=1)
    labels = torch.zeros(s, dtype=torch.long, device=z.device)
    return F.cross_entropy(logits, labels)


def total_pretrain_loss(rhythm_loss: torch.Tensor, beat_loss: Optional[torch.Tensor],
                        config: LossConfig) -> torch.Tensor:
    """rhythm + lambda_beat * beat; the beat term is dropped when absent"""
    if not bool(torch.isfinite(torch.as_tensor(rhythm_loss))):
        raise ValidationError("Rhythm loss is not finite")
    if beat_loss is None or config.lambda_beat == 0:
        return rhythm_loss
    if not bool(torch.isfinite(torch.as_tensor(beat_loss))):
        raise ValidationError("Beat loss is not finite")
    return rhythm_loss + config.lambda_beat * beat_loss


@dataclass
class GradCheckResult:
    max_abs_error: float
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def ntxent_gradcheck(z, targets: WeightsLike, tau: float = 0.1, eps: float = 1e-5,
                     tolerance: float = 1e-4) -> GradCheckResult:
    """
    Compare the autograd gradient of ntxent with central finite differences.

    Relative error is measured against the largest analytic gradient entry.
    """
    z0 = torch.as_tensor(np.asarray(z.detach() if isinstance(z, torch.Tensor) else z), dtype=torch.float64)
    w = _weights_tensor(targets, z0)

    zg = z0.clone().requires_grad_(True)
    ntxent(zg, w, tau).backward()
    analytic = zg.grad.detach()

    numeric = torch.zeros_like(z0)
    with torch.no_grad():
        for idx in np.ndindex(*z0.shape):
            plus, minus = z0.clone(), z0.clone()
            plus[idx] += eps
            minus[idx] -= eps
            numeric[idx] = (ntxent(plus, w, tau) - ntxent(minus, w, tau)) / (2 * eps)

    abs_error = float((analytic - numeric).abs().max())
    scale = max(float(analytic.abs().max()), 1e-8)
    return GradCheckResult(max_abs_error=abs_error, max_rel_error=abs_error / scale, tolerance=tolerance)
