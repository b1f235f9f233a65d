"""
Command-line entry point for beat-ssl.

    beatssl pretrain  --config cfg.yaml --data DIR
    beatssl ablate    --config cfg.yaml --synthetic 64
    beatssl probe     --checkpoint CKPT --data DIR
    beatssl segment   --checkpoint CKPT --data DIR
    beatssl report    SCORES.csv [SCORES.csv ...]
    beatssl convert   {synthetic,numpy} [--src DIR]
    beatssl selftest

Exit status is 0 on success, 2 on a reported error, 1 on anything unexpected.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from .ablation import INDEX_NAME, run_ablation
from .checkpoint import initial_checkpoint, load_checkpoint, save_checkpoint
from .convert import LAYOUTS, convert
from .core.config import AblationConfig, ExperimentConfig, RuntimeConfig, load_config
from .core.errors import BeatSSLError, ConfigurationError
from .core.logging_config import get_logger, setup_logging
from .core.run_ids import RunId
from .core.run_logging import RunLogger
from .crossval import ScoreTable, cross_validate
from .dataset import load_dataset
from .pretrain import pretrain
from .records import ECGRecord
from .reporting import build_report, load_index, table_set_hash
from .selftest import run_selftest
from .synthetic import synth_generate

logger = get_logger(__name__)

# Two-class rhythm task for generated data
SYNTHETIC_MIX = {"regular": 0.5, "irregular": 0.5}


def _common_parser() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="YAML experiment config")
    parent.add_argument("--seed", type=int, help="Overrides train.seed")
    parent.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                        help="Only allow the 14 ablation-table configurations")
    parent.add_argument("--out", type=Path, help="Output directory")
    parent.add_argument("--data", type=Path, help="Dataset root (manifest format)")
    parent.add_argument("--synthetic", type=int, metavar="N",
                        help="Use N generated records instead of a dataset")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="beatssl", description="Dual-context contrastive ECG pretraining")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", parents=[common], help="Pretrain one configuration")
    p.add_argument("--rhythm-mode", choices=["hard", "soft_1", "soft_2"])
    p.add_argument("--beat-mode", choices=["none", "hard", "soft_1", "soft_2"])
    p.add_argument("--exponent", type=float)

    p = sub.add_parser("ablate", parents=[common], help="Pretrain and evaluate all ablation rows")
    p.add_argument("--no-eval", action="store_true", help="Skip downstream evaluation")

    for task in ("probe", "segment"):
        p = sub.add_parser(task, parents=[common], help=f"Cross-validated {task} evaluation")
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--checkpoint", type=Path)
        group.add_argument("--random-init", action="store_true", help="Evaluate an untrained encoder")

    p = sub.add_parser("report", parents=[common], help="Summarise score tables")
    p.add_argument("tables", nargs="+", type=Path)
    p.add_argument("--index", type=Path, help=f"Ablation index (default <out>/{INDEX_NAME})")

    p = sub.add_parser("convert", parents=[common], help="Write a manifest-format dataset")
    p.add_argument("layout", choices=LAYOUTS)
    p.add_argument("--src", type=Path, help="Source directory for the numpy layout")
    p.add_argument("--n", type=int, default=64, help="Records to generate (synthetic layout)")

    p = sub.add_parser("selftest", parents=[common], help="Run the numerical invariant suite")
    p.add_argument("--quick", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides.setdefault("train", {})["seed"] = args.seed
    if args.strict is not None:
        overrides["strict"] = args.strict
    if args.data is not None:
        overrides.setdefault("data", {})["root"] = str(args.data)
    ablation = {key: getattr(args, attr) for key, attr in
                (("rhythm_mode", "rhythm_mode"), ("beat_mode", "beat_mode"), ("exponent", "exponent"))
                if getattr(args, attr, None) is not None}
    if ablation:
        overrides["ablation"] = ablation
    return overrides


def _records(args: argparse.Namespace, config: ExperimentConfig) -> List[ECGRecord]:
    if args.synthetic:
        return synth_generate(args.synthetic, duration_s=config.data.duration_s,
                              sampling_rate=config.data.sampling_rate, class_mix=SYNTHETIC_MIX,
                              seed=config.train.seed)
    root = args.data or config.data_root()
    if root is None:
        raise ConfigurationError("No data: pass --data, --synthetic N, or set BEATSSL_DATA_ROOT")
    return load_dataset(root)


def _pretrain_split(records: Sequence[ECGRecord], config: ExperimentConfig) -> List[ECGRecord]:
    folds = set(config.data.pretrain_folds)
    return [r for r in records if r.fold in folds]


def cmd_pretrain(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    ablation = config.ablation.check(config.strict)
    run_id = RunId(config.config_hash(), config.train.seed)
    records = _pretrain_split(_records(args, config), config)
    stage = run_logger.start_stage(f"pretrain:{ablation.label()}", run_id.config_hash, run_id.seed)
    try:
        checkpoint = pretrain(records, ablation, config.pretrain_hyper(), run_id.config_hash)
        path = save_checkpoint(checkpoint, run_id.checkpoint_path(out))
    except Exception as e:
        run_logger.complete_stage(stage, success=False, error=e)
        raise
    run_logger.complete_stage(stage, record_count=len(records),
                              metrics={"final_loss": checkpoint.loss_history[-1]}, artifact=path)
    print(path)
    return 0


def cmd_ablate(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    if not config.strict:
        logger.warning("ablate always runs the 14 table rows; --no-strict has no effect here")
    records = _records(args, config)
    results = run_ablation(config, _pretrain_split(records, config), records, out,
                           run_logger=run_logger, evaluate=not args.no_eval)
    for result in results:
        print(f"{result.ablation.label()}\t{result.checkpoint_path}\t{result.score_table_path or ''}")
    return 0


def cmd_evaluate(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    task = args.command
    if args.random_init:
        checkpoint = initial_checkpoint(config.model, config.train.seed)
    else:
        checkpoint = load_checkpoint(args.checkpoint)
    records = _records(args, config)
    if task == "segment":
        records = [r for r in records if r.wave_masks is not None]
    ev = config.eval
    k = ev.probe_k if task == "probe" else ev.segment_k
    run_id = RunId(checkpoint.config_hash, config.train.seed, eval_hash=config.config_hash())
    stage = run_logger.start_stage(task, checkpoint.config_hash, config.train.seed)
    try:
        table = cross_validate(task, checkpoint, records, k, ev.runs, config=ev,
                               test_folds=config.data.test_folds)
        path = table.to_csv(run_id.score_table_path(out, task))
    except Exception as e:
        run_logger.complete_stage(stage, success=False, error=e)
        raise
    macro = table.frame[table.frame["class"] == "macro"].groupby("metric")["value"].mean()
    run_logger.complete_stage(stage, record_count=len(records), metrics=macro.to_dict(), artifact=path)
    print(path)
    return 0


def cmd_report(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    missing = [str(p) for p in args.tables if not p.exists()]
    if missing:
        raise ConfigurationError(f"Score table(s) not found: {', '.join(missing)}")
    tables = [ScoreTable.from_csv(p) for p in args.tables]
    index = load_index(args.index or out / INDEX_NAME)
    run_id = RunId(table_set_hash(args.tables), config.train.seed)
    report = build_report(tables, run_id.report_dir(out), index)
    print(report.summary_path)
    print(report.significance_path)
    for plot in report.plots:
        print(plot)
    return 0


def cmd_convert(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    manifest = convert(args.layout, out, src=args.src, n_records=args.n, seed=config.train.seed,
                       sampling_rate=config.data.sampling_rate, duration_s=config.data.duration_s,
                       class_mix=SYNTHETIC_MIX)
    print(manifest)
    return 0


def cmd_selftest(args, config: ExperimentConfig, out: Path, run_logger: RunLogger) -> int:
    summary = run_selftest(seed=config.train.seed, quick=args.quick)
    for result in summary.results:
        print(f"{'PASS' if result.success else 'FAIL'}  {result.test_name}  ({result.duration_ms or 0:.0f} ms)")
    print(f"{summary.passed}/{summary.total_tests} checks passed")
    return 0 if summary.success else 1


COMMANDS = {
    "pretrain": cmd_pretrain,
    "ablate": cmd_ablate,
    "probe": cmd_evaluate,
    "segment": cmd_evaluate,
    "report": cmd_report,
    "convert": cmd_convert,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    RuntimeConfig.refresh()
    args = build_parser().parse_args(argv)
    setup_logging(RuntimeConfig.LOG_LEVEL)
    try:
        config = load_config(args.config, _overrides(args))
        if args.command == "convert":
            out = Path(args.out or RuntimeConfig.OUT_DIR / "dataset")
        else:
            out = RuntimeConfig.ensure_directories(args.out)
        run_logger = RunLogger(RuntimeConfig.get_run_log_path(args.out))
        return COMMANDS[args.command](args, config, out, run_logger)
    except BeatSSLError as e:
        print(f"beatssl {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error("Unexpected failure in %s: %s", args.command, e, exc_info=True)
        print(f"beatssl {args.command}: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
