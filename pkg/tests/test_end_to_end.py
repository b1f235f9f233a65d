"""
End-to-end training runs on synthetic data.

These take minutes on a CPU and are deselected by default; run them with
``pytest -m slow``.
"""

import numpy as np
import pandas as pd
import pytest
import yaml

from beatssl.ablation import INDEX_NAME
from beatssl.checkpoint import initial_checkpoint
from beatssl.core.config import ABLATION_ROWS, AblationConfig, EvalConfig, ModelConfig, PretrainHyper, TrainConfig
from beatssl.crossval import cross_validate
from beatssl.dataset import save_dataset
from beatssl.main import main
from beatssl.pretrain import pretrain

pytestmark = pytest.mark.slow

SEEDS = [11, 12, 13, 14, 15]
BEST_ROW = AblationConfig(rhythm_mode="soft_1", beat_mode="hard", exponent=50)


@pytest.fixture(scope="module")
def records(record_factory):
    return record_factory(64, seed=21)


@pytest.fixture(scope="module")
def pretrained(records):
    pool = [r for r in records if r.fold <= 8]
    hyper = PretrainHyper(train=TrainConfig(epochs=5, batch_size=16, seed=0))
    return pretrain(pool, BEST_ROW, hyper)


def test_pretraining_loss_falls(pretrained):
    history = pretrained.loss_history
    assert len(history) == 5
    assert history[-1] < 0.8 * history[0]


def test_probe_beats_random_init(pretrained, records):
    config = EvalConfig(probe_k=2, runs=len(SEEDS))
    trained = cross_validate("probe", pretrained, records, k=2, runs=len(SEEDS), seeds=SEEDS, config=config)
    random = cross_validate("probe", initial_checkpoint(ModelConfig(), seed=0), records, k=2, runs=len(SEEDS),
                            seeds=SEEDS, config=config)
    a = trained.cells("probe", "auroc")
    b = random.cells("probe", "auroc")
    assert list(a.index) == list(b.index)
    assert a.mean() >= 0.90
    assert (a - b).mean() >= 0.05


def test_segmentation_dice(pretrained, records):
    config = EvalConfig(segment_epochs=30, segment_k=2, runs=1)
    table = cross_validate("segment", pretrained, records[:24], k=2, runs=1, config=config)
    dice = table.cells("segment", "dice")
    assert dice.mean() >= 0.80


def test_ablation_sweep_and_report(tmp_path_factory, record_factory):
    root = tmp_path_factory.mktemp("sweep")
    data = root / "data"
    save_dataset(record_factory(20, seed=5), data)
    config = root / "sweep.yaml"
    config.write_text(yaml.safe_dump({
        "model": {"widths": [8, 16, 32], "kernel_size": 5, "proj_dim": 16},
        "train": {"epochs": 2, "batch_size": 8},
        "eval": {"probe_epochs": 5, "segment_epochs": 2, "probe_k": 2, "segment_k": 2, "runs": 1},
    }), encoding="utf-8")
    out = root / "runs"

    assert main(["ablate", "--config", str(config), "--data", str(data), "--out", str(out)]) == 0
    index = pd.read_csv(out / INDEX_NAME, dtype={"config_hash": str})
    rows = list(zip(index["rhythm_mode"], index["beat_mode"], index["exponent"].astype(float)))
    assert rows == list(ABLATION_ROWS)
    assert index["config_hash"].is_unique
    assert list(index["baseline"]) == [True] + [False] * 13
    assert len(list((out / "checkpoints").glob("*.ckpt"))) == 14

    assert main(["report", *index["scores"], "--out", str(out)]) == 0
    (report_dir,) = (out / "reports").iterdir()
    summary = pd.read_csv(report_dir / "summary.csv")
    assert list(summary["method"]) == [AblationConfig(rhythm_mode=r, beat_mode=b, exponent=e).label()
                                       for r, b, e in ABLATION_ROWS]
    significance = pd.read_csv(report_dir / "significance.csv")
    families = significance.groupby(["task", "metric"]).size()
    assert set(families.index) == {("probe", "auroc"), ("probe", "f1"), ("segment", "dice"), ("segment", "f1")}
    assert (families == 14 * 13 // 2).all()
    assert np.isnan(significance["p_value"]).all()
