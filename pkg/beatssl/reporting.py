"""
Ablation report: per-configuration summary, pairwise significance and box
plots of the score distributions.

Every input score table is one method. Methods are named by their ablation
label when an index is available, otherwise by config hash; repeated names
get a "#n" suffix so identical tables still compare as separate methods.
"""

import hashlib
import itertools
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .core.errors import InsufficientPairsError  # noqa: E402
from .crossval import ScoreTable  # noqa: E402
from .stats import PairedScoreSet, bonferroni, wilcoxon_signed_rank  # noqa: E402

logger = logging.getLogger(__name__)

BASELINE_TAG = "baseline"


@dataclass
class Method:
    name: str
    config_hash: str
    table: ScoreTable
    baseline: bool = False


def table_set_hash(paths: Sequence[Path]) -> str:
    """12-hex-digit hash of a set of score tables, independent of their order and location"""
    digests = sorted(hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths)
    return hashlib.sha256("\n".join(digests).encode("ascii")).hexdigest()[:12]


def load_index(path: Optional[Path]) -> Dict[str, dict]:
    """config_hash -> index row (label, baseline flag)"""
    if path is None or not Path(path).exists():
        return {}
    frame = pd.read_csv(path, dtype={"config_hash": str})
    return {row["config_hash"]: row for row in frame.to_dict("records")}


def collect_methods(tables: Sequence[ScoreTable], index: Optional[Dict[str, dict]] = None) -> List[Method]:
    index = index or {}
    methods, seen = [], {}
    for table in tables:
        for config_hash in table.config_hashes():
            entry = index.get(config_hash, {})
            name = str(entry.get("label", config_hash))
            seen[name] = seen.get(name, 0) + 1
            if seen[name] > 1:
                name = f"{name}#{seen[name]}"
            frame = table.frame[table.frame["config_hash"] == config_hash]
            methods.append(Method(name, config_hash, ScoreTable(frame), bool(entry.get("baseline", False))))
    return methods


def _families(methods: Sequence[Method]) -> List[Tuple[str, str]]:
    """(task, metric) pairs with macro values"""
    frames = [m.table.frame for m in methods]
    if not frames:
        return []
    f = pd.concat(frames)
    f = f[f["class"] == "macro"]
    return sorted(set(zip(f["task"], f["metric"])))


def summary_table(methods: Sequence[Method]) -> pd.DataFrame:
    """One row per method: mean and std of every macro metric over (run, fold) cells"""
    rows = []
    for m in methods:
        row = {"method": m.name, "config_hash": m.config_hash, "tag": BASELINE_TAG if m.baseline else ""}
        for task, metric in _families(methods):
            values = m.table.cells(task, metric).to_numpy()
            if values.size:
                mean, std = float(values.mean()), float(values.std(ddof=1)) if values.size > 1 else 0.0
                row[f"{task}_{metric}_mean"] = mean
                row[f"{task}_{metric}_std"] = std
                row[f"{task}_{metric}"] = f"{mean:.3f} ± {std:.3f}"
        rows.append(row)
    return pd.DataFrame(rows)


def significance_table(methods: Sequence[Method]) -> pd.DataFrame:
    """
    Pairwise two-sided Wilcoxon tests on matched (run, fold) cells, Bonferroni
    adjusted within each (task, metric) family by the number of pairs.
    """
    rows = []
    for task, metric in _families(methods):
        pairs = list(itertools.combinations(methods, 2))
        family = []
        for a, b in pairs:
            sa, sb = a.table.cells(task, metric), b.table.cells(task, metric)
            common = sa.index.intersection(sb.index)
            row = {"task": task, "metric": metric, "method_a": a.name, "method_b": b.name,
                   "n_pairs": len(common), "statistic": np.nan, "p_value": np.nan, "note": ""}
            try:
                paired = PairedScoreSet(a.name, b.name, sa[common].to_numpy(), sb[common].to_numpy(), list(common))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", UserWarning)
                    result = wilcoxon_signed_rank(paired)
                row.update(statistic=result.statistic, p_value=result.pvalue,
                           note="all differences zero" if result.degenerate else result.method)
            except (InsufficientPairsError, ValueError) as e:
                row["note"] = str(e)
            family.append(row)
        tested = [r["p_value"] for r in family if not np.isnan(r["p_value"])]
        adjusted = iter(bonferroni(tested, m=len(pairs)))
        for r in family:
            r["p_bonferroni"] = np.nan if np.isnan(r["p_value"]) else next(adjusted)
        rows.extend(family)
    columns = ["task", "metric", "method_a", "method_b", "n_pairs", "statistic", "p_value", "p_bonferroni", "note"]
    return pd.DataFrame(rows, columns=columns)


def box_plots(methods: Sequence[Method], out_dir: Path) -> List[Path]:
    """One PNG per (task, metric) with a box per method"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for task, metric in _families(methods):
        data = [m.table.cells(task, metric).to_numpy() for m in methods]
        labels = [f"{m.name}*" if m.baseline else m.name for m in methods]
        fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(methods) + 2), 4.5))
        ax.boxplot(data)
        ax.set_xticks(range(1, len(labels) + 1))
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.set_ylabel(f"{metric} (macro)")
        ax.set_title(f"{task}: {metric}")
        fig.tight_layout()
        path = out_dir / f"box_{task}_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


@dataclass
class Report:
    summary: pd.DataFrame
    significance: pd.DataFrame
    plots: List[Path]
    summary_path: Path
    significance_path: Path


def build_report(tables: Sequence[ScoreTable], out_dir: Path, index: Optional[Dict[str, dict]] = None) -> Report:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = collect_methods(tables, index)
    summary = summary_table(methods)
    significance = significance_table(methods)
    summary_path = out_dir / "summary.csv"
    significance_path = out_dir / "significance.csv"
    summary.to_csv(summary_path, index=False)
    significance.to_csv(significance_path, index=False)
    plots = box_plots(methods, out_dir)
    logger.info("Report for %d methods written to %s", len(methods), out_dir)
    return Report(summary, significance, plots, summary_path, significance_path)
