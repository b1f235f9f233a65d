"""Ablation report: summary, significance and plots."""

import numpy as np
import pandas as pd
import pytest

from beatssl.crossval import SCORE_COLUMNS, ScoreTable
from beatssl.reporting import (
    build_report,
    collect_methods,
    load_index,
    significance_table,
    summary_table,
    table_set_hash,
)


def make_table(config_hash, values, task="probe", metric="auroc", folds=5):
    rows = []
    for i, value in enumerate(values):
        run, fold = divmod(i, folds)
        rows.append({"task": task, "config_hash": config_hash, "run": run, "fold": fold,
                     "metric": metric, "class": "macro", "value": value})
        rows.append({"task": task, "config_hash": config_hash, "run": run, "fold": fold,
                     "metric": metric, "class": "AFIB", "value": value})
    return ScoreTable(pd.DataFrame(rows, columns=SCORE_COLUMNS))


BASE = [0.70, 0.72, 0.68, 0.75, 0.71, 0.69, 0.73, 0.74, 0.70, 0.72]


# Test summary
def test_summary_one_row_per_config():
    tables = [make_table("aaaaaaaaaaaa", BASE), make_table("bbbbbbbbbbbb", [v + 0.05 for v in BASE])]
    summary = summary_table(collect_methods(tables))
    assert list(summary["method"]) == ["aaaaaaaaaaaa", "bbbbbbbbbbbb"]
    assert summary["probe_auroc_mean"].iloc[0] == pytest.approx(np.mean(BASE))
    assert summary["probe_auroc_std"].iloc[0] == pytest.approx(np.std(BASE, ddof=1))
    assert summary["probe_auroc"].iloc[1].startswith(f"{np.mean(BASE) + 0.05:.3f} ± ")


def test_index_names_and_baseline(temp_dir):
    index_path = temp_dir / "ablation_index.csv"
    pd.DataFrame([
        {"config_hash": "aaaaaaaaaaaa", "label": "hard/-/1*", "baseline": True},
        {"config_hash": "bbbbbbbbbbbb", "label": "soft_1/hard/50", "baseline": False},
    ]).to_csv(index_path, index=False)
    index = load_index(index_path)
    methods = collect_methods([make_table("aaaaaaaaaaaa", BASE), make_table("bbbbbbbbbbbb", BASE)], index)
    assert [m.name for m in methods] == ["hard/-/1*", "soft_1/hard/50"]
    assert [m.baseline for m in methods] == [True, False]
    assert list(summary_table(methods)["tag"]) == ["baseline", ""]
    assert load_index(temp_dir / "absent.csv") == {}


# Test significance
def test_identical_tables_give_p_one():
    tables = [make_table("aaaaaaaaaaaa", BASE), make_table("aaaaaaaaaaaa", BASE)]
    methods = collect_methods(tables)
    assert [m.name for m in methods] == ["aaaaaaaaaaaa", "aaaaaaaaaaaa#2"]
    sig = significance_table(methods)
    assert len(sig) == 1
    row = sig.iloc[0]
    assert row["p_value"] == 1.0 and row["p_bonferroni"] == 1.0
    assert row["n_pairs"] == 10
    assert row["note"] == "all differences zero"


def test_bonferroni_within_family():
    tables = [
        make_table("aaaaaaaaaaaa", BASE),
        make_table("bbbbbbbbbbbb", [v + 0.01 * (i + 1) for i, v in enumerate(BASE)]),
        make_table("cccccccccccc", [v - 0.002 * (i + 1) for i, v in enumerate(BASE)]),
    ]
    sig = significance_table(collect_methods(tables))
    assert len(sig) == 3
    np.testing.assert_allclose(sig["p_bonferroni"], np.minimum(1.0, 3 * sig["p_value"]))
    # ten strictly positive differences: 2 / 2**10
    first = sig.iloc[0]
    assert first["p_value"] == pytest.approx(2 / 1024)


def test_too_few_matched_cells_is_reported_not_raised():
    tables = [make_table("aaaaaaaaaaaa", BASE), make_table("bbbbbbbbbbbb", BASE[:3])]
    sig = significance_table(collect_methods(tables))
    row = sig.iloc[0]
    assert row["n_pairs"] == 3
    assert np.isnan(row["p_value"]) and np.isnan(row["p_bonferroni"])
    assert "5" in row["note"]


# Test report files
def test_build_report_writes_outputs(temp_dir):
    tables = [make_table("aaaaaaaaaaaa", BASE), make_table("bbbbbbbbbbbb", [v + 0.03 for v in BASE])]
    report = build_report(tables, temp_dir / "reports")
    assert report.summary_path.exists() and report.significance_path.exists()
    assert [p.name for p in report.plots] == ["box_probe_auroc.png"]
    assert all(p.stat().st_size > 0 for p in report.plots)
    assert len(pd.read_csv(report.summary_path)) == 2


def test_table_set_hash_tracks_contents_not_order(temp_dir):
    a = make_table("aaaaaaaaaaaa", BASE).to_csv(temp_dir / "a.csv")
    b = make_table("bbbbbbbbbbbb", BASE).to_csv(temp_dir / "b.csv")
    moved = temp_dir / "moved"
    moved.mkdir()
    a_copy = moved / "a.csv"
    a_copy.write_bytes(a.read_bytes())
    assert table_set_hash([a, b]) == table_set_hash([b, a_copy])
    assert table_set_hash([a, b]) != table_set_hash([a])
    assert len(table_set_hash([a])) == 12
