"""
On-disk dataset format.

    <root>/manifest.tsv   record_id  fold  n_leads  n_samples  sampling_rate  signal_file  [labels_json]
    <root>/<signal_file>  raw little-endian float32, lead-major
    <root>/<id>.beats     optional, lines "sample_index<TAB>class"
    <root>/<id>.mask      optional, raw uint8 wave labels, one per sample

A fold of "-" means the record has no fold. Lines starting with "#" are
comments. Record files are read concurrently but returned in manifest order.
"""

import asyncio
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import aiofiles
import numpy as np

from .core.errors import DatasetIOError, IntegrityError
from .core.validation import validate_file_path_security, validate_fold_set
from .records import BACKGROUND, WAVE_NAMES, BeatAnnotation, ECGRecord, SegmentationMask

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
NO_FOLD = "-"
SIGNAL_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    fold: Optional[int]
    n_leads: int
    n_samples: int
    sampling_rate: float
    signal_file: str
    labels: Tuple[str, ...] = ()


def parse_manifest(text: str) -> List[ManifestEntry]:
    """
    Raises:
        IntegrityError: On malformed lines or a record_id listed twice
    """
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) not in (6, 7):
            raise IntegrityError(f"Manifest line {lineno}: expected 6 or 7 tab-separated fields, got {len(parts)}")
        record_id, fold, n_leads, n_samples, rate, signal_file = parts[:6]
        if record_id in seen:
            raise IntegrityError(f"Manifest line {lineno}: record {record_id} listed twice")
        seen.add(record_id)
        try:
            labels = tuple(json.loads(parts[6])) if len(parts) == 7 and parts[6] else ()
            entries.append(ManifestEntry(
                record_id=record_id,
                fold=None if fold == NO_FOLD else int(fold),
                n_leads=int(n_leads),
                n_samples=int(n_samples),
                sampling_rate=float(rate),
                signal_file=signal_file,
                labels=labels,
            ))
        except (ValueError, TypeError) as e:
            raise IntegrityError(f"Manifest line {lineno}: {e}") from None
    return entries


def format_manifest_line(record: ECGRecord, signal_file: str) -> str:
    fold = NO_FOLD if record.fold is None else str(record.fold)
    fields = [record.record_id, fold, str(record.n_leads), str(record.n_samples),
              repr(float(record.sampling_rate)), signal_file]
    if record.rhythm_labels:
        fields.append(json.dumps(sorted(record.rhythm_labels)))
    return "\t".join(fields)


def _parse_beats(text: str, record_id: str) -> BeatAnnotation:
    peaks, classes = [], []
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            index, cls = line.split("\t")
            peaks.append(int(index))
        except ValueError:
            raise IntegrityError(f"{record_id}.beats: malformed line {line!r}") from None
        classes.append(cls.strip())
    return BeatAnnotation(r_peaks=np.asarray(peaks, dtype=np.int64), classes=tuple(classes))


async def _read_bytes(path: Path) -> bytes:
    async with aiofiles.open(path, "rb") as f:
        return await f.read()


async def _read_text(path: Path) -> str:
    async with aiofiles.open(path, "r", encoding="utf-8") as f:
        return await f.read()


async def _load_record(root: Path, entry: ManifestEntry) -> ECGRecord:
    signal_path = root / entry.signal_file
    if not validate_file_path_security(signal_path, root):
        raise IntegrityError(f"Signal file of {entry.record_id} points outside the dataset root")
    if not signal_path.exists():
        raise DatasetIOError(f"Signal file missing for {entry.record_id}: {signal_path}")
    raw = await _read_bytes(signal_path)
    expected = entry.n_leads * entry.n_samples * SIGNAL_DTYPE.itemsize
    if len(raw) != expected:
        raise IntegrityError(
            f"{entry.record_id}: signal file has {len(raw)} bytes, manifest declares "
            f"{entry.n_leads} x {entry.n_samples} float32 ({expected} bytes)"
        )
    signal = np.frombuffer(raw, dtype=SIGNAL_DTYPE).reshape(entry.n_leads, entry.n_samples).astype(np.float64)

    beats = None
    beats_path = root / f"{entry.record_id}.beats"
    if beats_path.exists():
        beats = _parse_beats(await _read_text(beats_path), entry.record_id)

    mask = None
    mask_path = root / f"{entry.record_id}.mask"
    if mask_path.exists():
        mask_bytes = await _read_bytes(mask_path)
        if len(mask_bytes) != entry.n_samples:
            raise IntegrityError(f"{entry.record_id}: mask has {len(mask_bytes)} samples, expected {entry.n_samples}")
        mask = SegmentationMask(np.frombuffer(mask_bytes, dtype=np.uint8).copy())

    return ECGRecord(
        signal=signal,
        sampling_rate=entry.sampling_rate,
        record_id=entry.record_id,
        fold=entry.fold,
        beat_annotations=beats,
        wave_masks=mask,
        rhythm_labels=frozenset(entry.labels),
    )


async def aload_dataset(root_dir: Path, split: Optional[Iterable[int]] = None) -> List[ECGRecord]:
    """
    Load the records of a dataset directory whose fold lies in split.

    split=None returns every record, including fold-less ones.

    Raises:
        DatasetIOError: If the manifest or a signal file is missing
        IntegrityError: On duplicate record ids or size mismatches
    """
    root = Path(root_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise DatasetIOError(f"No {MANIFEST_NAME} in {root}")
    entries = parse_manifest(await _read_text(manifest))
    if split is not None:
        folds = validate_fold_set(split)
        entries = [e for e in entries if e.fold in folds]
    records = await asyncio.gather(*(_load_record(root, e) for e in entries))
    logger.info("Loaded %d records from %s (split %s)", len(records), root,
                "all" if split is None else sorted(folds))
    return list(records)


def load_dataset(root_dir: Path, split: Optional[Iterable[int]] = None) -> List[ECGRecord]:
    """Synchronous wrapper around aload_dataset"""
    return asyncio.run(aload_dataset(root_dir, split))


def save_dataset(records: Sequence[ECGRecord], root_dir: Path) -> Path:
    """Write records (signals, sidecars, manifest) to root_dir; returns the manifest path"""
    root = Path(root_dir)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    seen = set()
    for record in records:
        if record.record_id in seen:
            raise IntegrityError(f"Record {record.record_id} appears twice")
        seen.add(record.record_id)
        signal_file = f"{record.record_id}.f32"
        (root / signal_file).write_bytes(np.ascontiguousarray(record.signal, dtype=SIGNAL_DTYPE).tobytes())
        if record.beat_annotations is not None:
            text = "".join(f"{int(r)}\t{c}\n" for r, c in
                           zip(record.beat_annotations.r_peaks, record.beat_annotations.classes))
            (root / f"{record.record_id}.beats").write_text(text, encoding="utf-8")
        if record.wave_masks is not None:
            (root / f"{record.record_id}.mask").write_bytes(record.wave_masks.labels.astype(np.uint8).tobytes())
        lines.append(format_manifest_line(record, signal_file))
    manifest = root / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %d records to %s", len(lines), root)
    return manifest


def average_fiducials(per_lead) -> np.ndarray:
    """
    Average fiducial sample positions across leads (L x K -> K).

    The mean is rounded to the nearest sample, ties toward the earlier sample.
    """
    points = np.asarray(per_lead, dtype=np.int64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise IntegrityError(f"Fiducials must be a nonempty leads x points matrix, got shape {points.shape}")
    n_leads = points.shape[0]
    totals = points.sum(axis=0)
    # ceil((2 * total - L) / (2L)) in integers
    return -((n_leads - 2 * totals) // (2 * n_leads))


def fiducials_to_mask(waves: Sequence[Tuple[int, int, int]], n_samples: int) -> SegmentationMask:
    """
    Paint (onset, offset, label) waves, inclusive, into a per-sample mask.

    Where a wave would touch a different wave its first sample is left as
    background so neighbouring waves stay separated.

    Raises:
        IntegrityError: If a wave lies strictly inside a wave of another class
    """
    labels = np.zeros(n_samples, dtype=np.uint8)
    outer: Optional[Tuple[int, int, int]] = None
    for onset, offset, label in sorted(waves):
        onset, offset = max(0, int(onset)), min(n_samples - 1, int(offset))
        if offset < onset:
            continue
        if outer is not None and label != outer[2] and offset < outer[1]:
            raise IntegrityError(
                f"{WAVE_NAMES[label]} wave [{onset}, {offset}] lies inside "
                f"{WAVE_NAMES[outer[2]]} wave [{outer[0]}, {outer[1]}]")
        if outer is None or offset >= outer[1]:
            outer = (onset, offset, label)
        labels[onset:offset + 1] = label
        if onset > 0 and labels[onset - 1] not in (BACKGROUND, label):
            labels[onset] = BACKGROUND
    return SegmentationMask(labels).validate(n_samples)
