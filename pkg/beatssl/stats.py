"""
Paired significance testing for ablation comparisons.

Two-sided Wilcoxon signed-rank test with zero differences dropped (Wilcoxon's
original prescription) and tied absolute differences mid-ranked. Up to
EXACT_MAX_N non-zero pairs the null distribution is counted exactly; beyond
that the normal approximation with continuity and tie correction is used.
"""

import itertools
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from .core.errors import ConfigurationError, InsufficientPairsError, ValidationError

EXACT_MAX_N = 25
MIN_PAIRS = 5


@dataclass
class PairedScoreSet:
    """Scores of two methods over the same (run, fold) cells, in matching order."""

    method_a: str
    method_b: str
    scores_a: np.ndarray
    scores_b: np.ndarray
    cells: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.scores_a = np.asarray(self.scores_a, dtype=np.float64).reshape(-1)
        self.scores_b = np.asarray(self.scores_b, dtype=np.float64).reshape(-1)
        if self.scores_a.shape != self.scores_b.shape:
            raise ValidationError(
                f"Paired scores differ in length: {self.scores_a.size} vs {self.scores_b.size}"
            )
        if self.scores_a.size < MIN_PAIRS:
            raise ValidationError(f"At least {MIN_PAIRS} paired cells are needed, got {self.scores_a.size}")
        if self.cells and len(self.cells) != self.scores_a.size:
            raise ValidationError("cells must label every paired score")

    @property
    def differences(self) -> np.ndarray:
        return self.scores_a - self.scores_b

    def swapped(self) -> "PairedScoreSet":
        return PairedScoreSet(self.method_b, self.method_a, self.scores_b, self.scores_a, list(self.cells))


@dataclass
class WilcoxonResult:
    statistic: float
    pvalue: float
    n_nonzero: int
    method: str
    degenerate: bool = False


def _signed_ranks(differences: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = differences[differences != 0]
    return rankdata(np.abs(d)), d > 0


def _two_sided(lower: float, upper: float) -> float:
    return float(min(1.0, 2.0 * min(lower, upper)))


def _exact_pvalue(ranks: np.ndarray, w_plus: float) -> float:
    """
    Null distribution of W+ by dynamic programming over doubled mid-ranks
    (integers), equivalent to enumerating all 2^n sign patterns.
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = np.zeros(int(doubled.sum()) + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts = counts + shifted
    total = float(2 ** len(doubled))
    w2 = int(round(2 * w_plus))
    lower = counts[:w2 + 1].sum() / total
    upper = counts[w2:].sum() / total
    return _two_sided(lower, upper)


def _normal_pvalue(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (abs(w_plus - mean) - 0.5) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(pairs: PairedScoreSet) -> WilcoxonResult:
    """
    Two-sided Wilcoxon signed-rank test on a paired score set.

    Raises:
        InsufficientPairsError: If only 1 to 4 differences are non-zero
    """
    ranks, positive = _signed_ranks(pairs.differences)
    n = len(ranks)
    if n == 0:
        warnings.warn(
            f"All differences between {pairs.method_a} and {pairs.method_b} are zero; p set to 1.0",
            UserWarning,
            stacklevel=2,
        )
        return WilcoxonResult(statistic=0.0, pvalue=1.0, n_nonzero=0, method="degenerate", degenerate=True)
    if n < MIN_PAIRS:
        raise InsufficientPairsError(
            f"{pairs.method_a} vs {pairs.method_b}: {n} non-zero differences, at least {MIN_PAIRS} needed"
        )
    w_plus = float(ranks[positive].sum())
    if n <= EXACT_MAX_N:
        return WilcoxonResult(statistic=w_plus, pvalue=_exact_pvalue(ranks, w_plus), n_nonzero=n, method="exact")
    return WilcoxonResult(statistic=w_plus, pvalue=_normal_pvalue(ranks, w_plus), n_nonzero=n, method="normal")


def wilcoxon_enumeration(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Brute-force two-sided p-value over all 2^n sign assignments"""
    d = np.asarray(scores_a, dtype=np.float64) - np.asarray(scores_b, dtype=np.float64)
    ranks, positive = _signed_ranks(d)
    n = len(ranks)
    if n == 0:
        return 1.0
    observed = float(ranks[positive].sum())
    lower = upper = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= observed + 1e-9:
            lower += 1
        if w >= observed - 1e-9:
            upper += 1
    total = 2 ** n
    return _two_sided(lower / total, upper / total)


def bonferroni(p_values: Sequence[float], m: Optional[int] = None) -> List[float]:
    """
    p' = min(1, m p) for every p.

    Raises:
        ConfigurationError: If m is smaller than the number of p-values
    """
    p_values = [float(p) for p in p_values]
    m = len(p_values) if m is None else int(m)
    if m < len(p_values):
        raise ConfigurationError(f"Comparison count m={m} is smaller than the {len(p_values)} p-values given")
    return [min(1.0, m * p) for p in p_values]
