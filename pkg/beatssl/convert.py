"""
Conversion of source layouts into the manifest dataset format.

Two layouts are understood:

    synthetic  generated records (no source directory)
    numpy      <src>/signals.npy         R x 12 x D float array
               <src>/records.json        [{"record_id", "fold", "labels", "sampling_rate"}, ...]
               <src>/masks.npy           optional R x D uint8 wave labels
               <src>/fiducials.json      optional {record_id: [{"wave", "onset": [...], "offset": [...]}]}
               <src>/beats.json          optional {record_id: [[sample, class], ...]}

Fiducials carry one onset and one offset per lead; they are averaged across
leads before being painted into a mask. A record with both a mask and
fiducials keeps the mask.
"""

import json
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .core.errors import ConfigurationError, DatasetIOError, IntegrityError
from .core.logging_config import get_logger
from .dataset import average_fiducials, fiducials_to_mask, save_dataset
from .records import P_WAVE, QRS_COMPLEX, T_WAVE, BeatAnnotation, ECGRecord, SegmentationMask
from .synthetic import synth_generate

logger = get_logger(__name__)

LAYOUTS = ("synthetic", "numpy")
WAVE_CODES: Dict[str, int] = {"p": P_WAVE, "qrs": QRS_COMPLEX, "t": T_WAVE}


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IntegrityError(f"{path.name} is not valid JSON: {e}") from None


def waves_from_fiducials(waves: Sequence[Mapping], n_samples: int) -> SegmentationMask:
    """
    Build a mask from per-lead wave fiducials.

    Raises:
        IntegrityError: On an unknown wave name or mismatched onset/offset lists
    """
    painted = []
    for wave in waves:
        name = str(wave.get("wave", "")).lower()
        if name not in WAVE_CODES:
            raise IntegrityError(f"Unknown wave {wave.get('wave')!r}; expected one of {sorted(WAVE_CODES)}")
        onsets, offsets = list(wave["onset"]), list(wave["offset"])
        if len(onsets) != len(offsets):
            raise IntegrityError(f"{name} wave has {len(onsets)} onsets but {len(offsets)} offsets")
        onset, offset = average_fiducials(np.column_stack([onsets, offsets]))
        painted.append((int(onset), int(offset), WAVE_CODES[name]))
    return fiducials_to_mask(painted, n_samples)


def convert_synthetic(out_dir: Path, n_records: int, seed: int = 0, duration_s: float = 10.0,
                      sampling_rate: float = 500.0, class_mix: Optional[Mapping[str, float]] = None) -> Path:
    records = synth_generate(n_records, duration_s=duration_s, sampling_rate=sampling_rate,
                             class_mix=class_mix, seed=seed)
    return save_dataset(records, out_dir)


def read_numpy_layout(src: Path) -> List[ECGRecord]:
    """
    Raises:
        DatasetIOError: If signals.npy or records.json is missing
        IntegrityError: If the arrays and the record list disagree
    """
    src = Path(src)
    signals_path, meta_path = src / "signals.npy", src / "records.json"
    for path in (signals_path, meta_path):
        if not path.exists():
            raise DatasetIOError(f"Missing {path}")
    signals = np.load(signals_path, allow_pickle=False)
    meta = _read_json(meta_path)
    if signals.ndim != 3:
        raise IntegrityError(f"signals.npy must be records x leads x samples, got shape {signals.shape}")
    if not isinstance(meta, list) or len(meta) != signals.shape[0]:
        raise IntegrityError(f"records.json must list {signals.shape[0]} records")

    masks = np.load(src / "masks.npy", allow_pickle=False) if (src / "masks.npy").exists() else None
    if masks is not None and masks.shape != (signals.shape[0], signals.shape[2]):
        raise IntegrityError(f"masks.npy shape {masks.shape} does not match signals {signals.shape}")
    fiducials = _read_json(src / "fiducials.json") if (src / "fiducials.json").exists() else {}
    beats = _read_json(src / "beats.json") if (src / "beats.json").exists() else {}

    records = []
    for i, entry in enumerate(meta):
        record_id = entry["record_id"]
        n_samples = signals.shape[2]
        mask = None
        if masks is not None:
            mask = SegmentationMask(masks[i].astype(np.uint8))
        elif record_id in fiducials:
            mask = waves_from_fiducials(fiducials[record_id], n_samples)
        annotation = None
        if record_id in beats:
            pairs = beats[record_id]
            annotation = BeatAnnotation(
                r_peaks=np.asarray([int(p[0]) for p in pairs], dtype=np.int64),
                classes=tuple(str(p[1]) for p in pairs),
            )
        records.append(ECGRecord(
            signal=signals[i],
            sampling_rate=float(entry.get("sampling_rate", 500.0)),
            record_id=record_id,
            fold=entry.get("fold"),
            beat_annotations=annotation,
            wave_masks=mask,
            rhythm_labels=frozenset(entry.get("labels", ())),
        ))
    return records


def convert(layout: str, out_dir: Path, src: Optional[Path] = None, n_records: int = 64,
            seed: int = 0, sampling_rate: float = 500.0, duration_s: float = 10.0,
            class_mix: Optional[Mapping[str, float]] = None) -> Path:
    """
    Write a manifest-format dataset; returns the manifest path.

    Raises:
        ConfigurationError: Unknown layout, or numpy layout without a source
    """
    if layout not in LAYOUTS:
        raise ConfigurationError(f"Unknown source layout {layout!r}; expected one of {LAYOUTS}")
    if layout == "synthetic":
        manifest = convert_synthetic(out_dir, n_records, seed, duration_s, sampling_rate, class_mix)
    else:
        if src is None:
            raise ConfigurationError("The numpy layout needs a source directory")
        manifest = save_dataset(read_numpy_layout(src), out_dir)
    logger.info("Converted %s layout into %s", layout, manifest)
    return manifest
