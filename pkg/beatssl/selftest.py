"""
Self-test: the invariant suite behind the numerical core, runnable from the CLI.

Checks the Kors identity and round trip, augmentation algebra, the vectorised
loss against its scalar oracle and SimCLR form, finite-difference gradients,
target-matrix properties, frame mapping and exact Wilcoxon p-values.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import torch

from .beats import map_rpeak_to_frames, roi_pool
from .loss import classic_ntxent, ntxent, ntxent_gradcheck, ntxent_oracle
from .stats import PairedScoreSet, wilcoxon_enumeration, wilcoxon_signed_rank
from .targets import build_beat_targets, hard_targets, row_entropy, soft1_targets, soft2_targets
from .vcg import KORS, AugmentParams, augment, ecg_to_vcg, rotate_vcg, vcg_to_ecg

logger = logging.getLogger(__name__)


@dataclass
class ValidationResult:
    """Result of one self-test check."""
    test_name: str
    success: bool
    message: str
    details: Optional[Dict[str, Any]] = None
    duration_ms: Optional[float] = None
    error: Optional[str] = None


@dataclass
class ValidationSummary:
    total_tests: int
    passed: int
    failed: int
    total_duration_ms: float
    results: List[ValidationResult]

    @property
    def success(self) -> bool:
        return self.failed == 0


def _result(name: str, ok: bool, details: Dict[str, Any]) -> ValidationResult:
    return ValidationResult(test_name=name, success=bool(ok), message=f"{name} {'passed' if ok else 'failed'}",
                            details=details)


def _random_targets(rng: np.random.Generator, s: int, mode: str) -> np.ndarray:
    n = s // 2
    if mode == "hard":
        return hard_targets(n).weights
    features = rng.standard_normal((n, 4))
    if mode == "soft_1":
        return soft1_targets(features, rng.choice([1.0, 5.0])).weights
    if mode == "soft_2":
        return soft2_targets(features, k=min(3, n - 1)).weights
    classes = rng.choice(list("NSV"), size=n).tolist()
    return build_beat_targets("hard", classes=classes).weights


class SelfTestRunner:
    """Runs every check and collects ValidationResults."""

    def __init__(self, seed: int = 0, quick: bool = False):
        self.rng = np.random.default_rng(seed)
        self.quick = quick
        self.results: List[ValidationResult] = []

    def checks(self) -> List[Callable[[], ValidationResult]]:
        return [
            self.check_kors_identity,
            self.check_vcg_round_trip,
            self.check_augmentation_algebra,
            self.check_loss_oracle,
            self.check_classic_ntxent,
            self.check_gradients,
            self.check_target_properties,
            self.check_frame_mapping,
            self.check_wilcoxon,
        ]

    def run(self) -> ValidationSummary:
        for check in self.checks():
            self._run_single(check)
        passed = sum(r.success for r in self.results)
        return ValidationSummary(
            total_tests=len(self.results),
            passed=passed,
            failed=len(self.results) - passed,
            total_duration_ms=sum(r.duration_ms or 0.0 for r in self.results),
            results=self.results,
        )

    def _run_single(self, check: Callable[[], ValidationResult]) -> None:
        name = check.__name__.replace("check_", "").replace("_", " ")
        start = time.time()
        try:
            result = check()
        except Exception as e:
            result = ValidationResult(test_name=name, success=False, message=f"{name} raised", error=str(e))
        result.duration_ms = (time.time() - start) * 1000
        self.results.append(result)
        level = logging.INFO if result.success else logging.ERROR
        logger.log(level, "%s: %s (%.1f ms)", name, "PASS" if result.success else "FAIL", result.duration_ms)

    def check_kors_identity(self) -> ValidationResult:
        error = KORS.identity_error()
        return _result("kors identity", error < 1e-10, {"max_abs_error": error})

    def check_vcg_round_trip(self) -> ValidationResult:
        worst = 0.0
        for _ in range(100):
            v = self.rng.standard_normal((3, 50))
            back = ecg_to_vcg(vcg_to_ecg(v))
            worst = max(worst, float(np.linalg.norm(back - v) / np.linalg.norm(v)))
        return _result("vcg round trip", worst < 1e-9, {"max_rel_error": worst})

    def check_augmentation_algebra(self) -> ValidationResult:
        vcg = self.rng.standard_normal((3, 200))
        rotated = rotate_vcg(vcg, 37.0, [0.0, 0.6, 0.8])
        norm_error = float(np.max(np.abs(np.linalg.norm(rotated, axis=0) / np.linalg.norm(vcg, axis=0) - 1)))
        ecg = self.rng.standard_normal((12, 200))
        identity = AugmentParams(theta_range=(0, 0), scale_range=(1, 1), noise_sigma=0.0)
        out = augment(ecg, identity, np.random.default_rng(0))
        projection = KORS.project(ecg)
        proj_error = float(np.linalg.norm(out - projection) / np.linalg.norm(projection))
        ok = norm_error < 1e-9 and proj_error < 1e-9
        return _result("augmentation algebra", ok, {"norm_error": norm_error, "projection_error": proj_error})

    def check_loss_oracle(self) -> ValidationResult:
        worst = 0.0
        trials = 20 if self.quick else 100
        for t in range(trials):
            s = 2 * int(self.rng.integers(2, 9))
            mode = ("hard", "soft_1", "soft_2", "beat_hard")[t % 4]
            w = _random_targets(self.rng, s, mode)
            z = self.rng.standard_normal((s, 8))
            fast = float(ntxent(torch.as_tensor(z), w, 0.1))
            slow = ntxent_oracle(z, w, 0.1)
            worst = max(worst, abs(fast - slow) / max(abs(slow), 1e-12))
        return _result("loss oracle", worst < 1e-6, {"max_rel_error": worst, "trials": trials})

    def check_classic_ntxent(self) -> ValidationResult:
        z = torch.as_tensor(self.rng.standard_normal((12, 16)))
        weighted = float(ntxent(z, hard_targets(6), 0.2))
        classic = float(classic_ntxent(z, 0.2))
        error = abs(weighted - classic) / abs(classic)
        return _result("classic ntxent", error < 1e-6, {"rel_error": error})

    def check_gradients(self) -> ValidationResult:
        worst = 0.0
        trials = 5 if self.quick else 20
        for t in range(trials):
            s = 2 * int(self.rng.integers(1, 5))
            tau = 0.01 if t % 4 == 0 else 0.1
            w = _random_targets(self.rng, s, "hard" if s == 2 else ("hard", "soft_1")[t % 2])
            result = ntxent_gradcheck(self.rng.standard_normal((s, 6)), w, tau)
            worst = max(worst, result.max_rel_error)
        return _result("gradients", worst < 1e-4, {"max_rel_error": worst, "trials": trials})

    def check_target_properties(self) -> ValidationResult:
        problems = []
        for _ in range(20 if self.quick else 200):
            n = int(self.rng.integers(4, 10))
            features = self.rng.standard_normal((n, 5))
            for target in (soft1_targets(features, 1.0), soft2_targets(features, 3)):
                w = target.raw
                if not (np.allclose(w, w.T) and np.all(np.diag(w) == 0) and w.min() >= 0 and w.max() <= 1):
                    problems.append(target.mode)
            entropies = [row_entropy(soft1_targets(features, p).raw) for p in (1.0, 5.0, 50.0)]
            if np.any(entropies[1] > entropies[0] + 1e-9) or np.any(entropies[2] > entropies[1] + 1e-9):
                problems.append("entropy")
        return _result("target properties", not problems, {"violations": len(problems)})

    def check_frame_mapping(self) -> ValidationResult:
        bad = 0
        for stride in (1, 2, 4, 8, 16):
            n_frames = 5000 // stride + 1
            for r in range(400, 4000, 37):
                a = map_rpeak_to_frames(r, 352, stride, n_frames)
                b = map_rpeak_to_frames(r + stride, 352, stride, n_frames)
                bad += (b[0] != a[0] + 1) or (b[1] != a[1] + 1)
        fmap = self.rng.standard_normal((10, 4))
        pooled_error = float(np.max(np.abs(roi_pool(fmap, (2, 5)) - fmap[2:5].mean(0))))
        return _result("frame mapping", bad == 0 and pooled_error < 1e-9,
                       {"shift_violations": int(bad), "pool_error": pooled_error})

    def check_wilcoxon(self) -> ValidationResult:
        worst = 0.0
        for _ in range(20 if self.quick else 200):
            n = int(self.rng.integers(5, 11))
            a = np.round(self.rng.random(n), 2)
            b = np.round(self.rng.random(n), 2)
            d = a - b
            if np.count_nonzero(d) < 5:
                continue
            exact = wilcoxon_signed_rank(PairedScoreSet("a", "b", a, b)).pvalue
            worst = max(worst, abs(exact - wilcoxon_enumeration(a, b)))
        p5 = wilcoxon_signed_rank(PairedScoreSet("a", "b", np.arange(1, 6) + 1.0, np.ones(5) * 0.5)).pvalue
        return _result("wilcoxon", worst < 1e-12 and p5 == 0.0625, {"max_abs_error": worst, "p_n5": p5})


def run_selftest(seed: int = 0, quick: bool = False) -> ValidationSummary:
    summary = SelfTestRunner(seed=seed, quick=quick).run()
    logger.info("Self-test: %d/%d checks passed", summary.passed, summary.total_tests)
    for result in summary.results:
        if not result.success:
            logger.error("Failed: %s %s", result.test_name, result.error or result.details)
    return summary
