"""
Repeated k-fold cross-validation of the downstream tasks and the score
tables it produces.

Probe (task "probe"): the records of the held-out folds (9 and 10 by default)
are split into k test partitions; the probe always trains on the remaining
folds, with a validation slice carved off. Segmentation (task "segment"): plain
k-fold over all records.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from .checkpoint import Checkpoint
from .core.config import EvalConfig
from .core.errors import ConfigurationError, IntegrityError, LeakageError
from .downstream import ProbeHyper, SegmentHyper, linear_probe, segmentation_finetune
from .metrics import MetricReport
from .records import ECGRecord

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["task", "config_hash", "run", "fold", "metric", "class", "value"]
TASKS = ("probe", "segment")


def derive_seed(master: int, *path: int) -> int:
    """Deterministic child seed for (run, fold, ...) from a master seed"""
    return int(np.random.SeedSequence([int(master), *[int(p) for p in path]]).generate_state(1)[0])


@dataclass
class ScoreTable:
    """Long-format scores: one row per (task, config, run, fold, metric, class)."""

    frame: pd.DataFrame
    reports: List[MetricReport] = field(default_factory=list)

    def __post_init__(self):
        missing = [c for c in SCORE_COLUMNS if c not in self.frame.columns]
        if missing:
            raise IntegrityError(f"Score table lacks columns {missing}")
        self.frame = self.frame[SCORE_COLUMNS].reset_index(drop=True)

    @classmethod
    def from_reports(cls, cells: Iterable[tuple]) -> "ScoreTable":
        """cells: (run, fold, MetricReport) triples"""
        rows, reports = [], []
        for run, fold, report in cells:
            rows.extend(report.rows(run, fold))
            reports.append(report)
        return cls(pd.DataFrame(rows, columns=SCORE_COLUMNS), reports)

    @classmethod
    def concat(cls, tables: Sequence["ScoreTable"]) -> "ScoreTable":
        frame = pd.concat([t.frame for t in tables], ignore_index=True) if tables else pd.DataFrame(columns=SCORE_COLUMNS)
        return cls(frame, [r for t in tables for r in t.reports])

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Path) -> "ScoreTable":
        frame = pd.read_csv(path, dtype={"config_hash": str, "class": str})
        return cls(frame)

    def config_hashes(self) -> List[str]:
        return list(dict.fromkeys(self.frame["config_hash"]))

    def cells(self, task: str, metric: str, config_hash: Optional[str] = None, cls: str = "macro") -> pd.Series:
        """Values indexed by (run, fold), sorted"""
        f = self.frame
        mask = (f["task"] == task) & (f["metric"] == metric) & (f["class"] == cls)
        if config_hash is not None:
            mask &= f["config_hash"] == config_hash
        return f[mask].set_index(["run", "fold"])["value"].sort_index()

    def __len__(self) -> int:
        return len(self.frame)


def check_probe_split(train: Sequence[ECGRecord], test: Sequence[ECGRecord], test_folds: frozenset) -> None:
    leaked = [r.record_id for r in test if r.fold not in test_folds]
    if leaked:
        raise LeakageError(f"Test records from training folds: {leaked[:5]}")
    overlap = {r.record_id for r in train} & {r.record_id for r in test}
    if overlap:
        raise LeakageError(f"Records in both train and test: {sorted(overlap)[:5]}")


def _carve_validation(train: List[ECGRecord], fraction: float, seed: int):
    if len(train) < 5:
        return train, []
    order = np.random.default_rng(seed).permutation(len(train))
    n_val = max(1, int(round(fraction * len(train))))
    val = [train[i] for i in sorted(order[:n_val])]
    rest = [train[i] for i in sorted(order[n_val:])]
    return rest, val


def cross_validate(task: str, checkpoint: Checkpoint, records: Sequence[ECGRecord], k: int, runs: int,
                   seeds: Optional[Sequence[int]] = None, config: Optional[EvalConfig] = None,
                   test_folds: Iterable[int] = (9, 10)) -> ScoreTable:
    """
    runs x k evaluations of a checkpoint; one MetricReport per (run, fold).

    Raises:
        ConfigurationError: Unknown task, bad seeds, or too few records for k
        LeakageError: If a probe test record comes from a training fold
    """
    if task not in TASKS:
        raise ConfigurationError(f"Unknown task {task!r}; expected one of {TASKS}")
    config = config or EvalConfig()
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    if seeds is None:
        seeds = [derive_seed(checkpoint.seed, run) for run in range(runs)]
    if len(seeds) != runs:
        raise ConfigurationError(f"{len(seeds)} seeds given for {runs} runs")

    test_folds = frozenset(test_folds)
    if task == "probe":
        pool = [r for r in records if r.fold in test_folds]
        base_train = [r for r in records if r.fold is not None and r.fold not in test_folds]
        if not base_train:
            raise ConfigurationError("No training-fold records for the probe")
    else:
        pool = list(records)
        base_train = []
    if len(pool) < k:
        raise ConfigurationError(f"{len(pool)} records cannot be split into k={k} folds")

    cells = []
    for run, seed in enumerate(seeds):
        splitter = KFold(n_splits=k, shuffle=True, random_state=int(seed) % (2 ** 32))
        for fold, (train_idx, test_idx) in enumerate(splitter.split(np.arange(len(pool)))):
            cell_seed = derive_seed(seed, fold)
            test = [pool[i] for i in test_idx]
            if task == "probe":
                train, val = _carve_validation(list(base_train), config.val_fraction, cell_seed)
                check_probe_split(train + val, test, test_folds)
                report = linear_probe(checkpoint, train, val, test, ProbeHyper.from_eval(config, cell_seed))
            else:
                train = [pool[i] for i in train_idx]
                report = segmentation_finetune(checkpoint, train, test, SegmentHyper.from_eval(config, cell_seed))
            logger.info("%s run %d fold %d [%s]: %s", task, run, fold, checkpoint.config_hash,
                        {m: round(v, 4) for m, v in report.macro.items()})
            cells.append((run, fold, report))
    return ScoreTable.from_reports(cells)
