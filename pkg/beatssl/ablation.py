"""
The ablation sweep: pretrain and evaluate every row of the ablation table.

Each row gets its own config hash (the experiment config with that row
swapped in), a checkpoint and a score table at paths derived from
(config hash, seed). An index CSV ties hashes back to their rows for the
report.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from .checkpoint import save_checkpoint
from .core.config import AblationConfig, ExperimentConfig
from .core.logging_config import get_logger
from .core.run_ids import RunId
from .core.run_logging import RunLogger
from .crossval import ScoreTable, cross_validate
from .pretrain import pretrain
from .records import ECGRecord

logger = get_logger(__name__)

INDEX_NAME = "ablation_index.csv"
INDEX_COLUMNS = ["config_hash", "seed", "rhythm_mode", "beat_mode", "exponent", "label", "baseline",
                 "checkpoint", "scores"]


@dataclass
class AblationResult:
    ablation: AblationConfig
    run_id: RunId
    checkpoint_path: Path
    score_table_path: Optional[Path]


def evaluate_checkpoint(checkpoint, records: Sequence[ECGRecord], config: ExperimentConfig,
                        tasks: Sequence[str] = ("probe", "segment")) -> ScoreTable:
    """Cross-validate a checkpoint on every task the records support"""
    tables = []
    ev = config.eval
    if "probe" in tasks and any(r.rhythm_labels for r in records):
        tables.append(cross_validate("probe", checkpoint, records, ev.probe_k, ev.runs,
                                     config=ev, test_folds=config.data.test_folds))
    masked = [r for r in records if r.wave_masks is not None]
    if "segment" in tasks and masked:
        tables.append(cross_validate("segment", checkpoint, masked, ev.segment_k, ev.runs, config=ev))
    return ScoreTable.concat(tables)


def ablation_rows() -> List[AblationConfig]:
    """The table rows, in table order"""
    return AblationConfig.table_rows()


def run_ablation(config: ExperimentConfig, pretrain_records: Sequence[ECGRecord],
                 eval_records: Sequence[ECGRecord], out_dir: Path,
                 run_logger: Optional[RunLogger] = None, evaluate: bool = True) -> List[AblationResult]:
    """
    Pretrain (and optionally evaluate) all ablation rows sequentially.
    """
    out_dir = Path(out_dir)
    results = []
    for row in ablation_rows():
        cfg = config.with_ablation(row)
        run_id = RunId(cfg.config_hash(), cfg.train.seed)
        stage_id = run_logger.start_stage(f"ablate:{row.label()}", run_id.config_hash, run_id.seed) if run_logger else None
        try:
            checkpoint = pretrain(pretrain_records, row, cfg.pretrain_hyper(), run_id.config_hash)
            ckpt_path = save_checkpoint(checkpoint, run_id.checkpoint_path(out_dir))
            scores_path = None
            if evaluate:
                table = evaluate_checkpoint(checkpoint, eval_records, cfg)
                scores_path = table.to_csv(run_id.score_table_path(out_dir))
        except Exception as e:
            if run_logger:
                run_logger.complete_stage(stage_id, success=False, error=e)
            raise
        if run_logger:
            run_logger.complete_stage(
                stage_id,
                record_count=len(pretrain_records),
                metrics={"final_loss": checkpoint.loss_history[-1] if checkpoint.loss_history else None},
                artifact=ckpt_path,
            )
        logger.info("Row %s -> %s", row.label(), run_id)
        results.append(AblationResult(row, run_id, ckpt_path, scores_path))
    write_index(results, out_dir)
    return results


def write_index(results: Sequence[AblationResult], out_dir: Path) -> Path:
    rows = [{
        "config_hash": r.run_id.config_hash,
        "seed": r.run_id.seed,
        "rhythm_mode": r.ablation.rhythm_mode,
        "beat_mode": r.ablation.beat_mode,
        "exponent": r.ablation.exponent,
        "label": r.ablation.label(),
        "baseline": r.ablation.is_baseline,
        "checkpoint": str(r.checkpoint_path),
        "scores": "" if r.score_table_path is None else str(r.score_table_path),
    } for r in results]
    path = Path(out_dir) / INDEX_NAME
    pd.DataFrame(rows, columns=INDEX_COLUMNS).to_csv(path, index=False)
    return path
