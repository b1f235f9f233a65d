"""
Dual-context contrastive pretraining.

Every step draws N records, builds two VCG-augmented views of each, encodes
each view once, and contrasts (a) the temporally pooled record embeddings and,
if enabled, (b) the ROI-pooled beat embeddings cut from the same feature maps.
"""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from .beats import BeatWindow, beat_windows, roi_pool
from .checkpoint import Checkpoint
from .core.config import AblationConfig, PretrainHyper
from .core.errors import ConfigurationError, ShapeError
from .features import FeatureScaler, extract_beat_features, extract_features, record_r_peaks
from .labelers import build_labeler, pseudo_label_beats
from .loss import ntxent, total_pretrain_loss
from .models import PretrainModel, temporal_pool
from .records import ECGRecord
from .targets import build_beat_targets, build_rhythm_targets
from .vcg import AugmentParams, augment

logger = logging.getLogger(__name__)


def run_hash(ablation: AblationConfig, hyper: PretrainHyper) -> str:
    """Hash for runs started without an experiment file"""
    payload = {"ablation": ablation.model_dump(mode="json"), "hyper": hyper.model_dump(mode="json")}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass
class RecordBeats:
    """The beats of one record that take part in beat-level contrasting."""
    windows: List[BeatWindow] = field(default_factory=list)
    classes: List[str] = field(default_factory=list)
    features: Optional[np.ndarray] = None


@dataclass
class PreparedData:
    signals: np.ndarray
    record_features: Optional[np.ndarray]
    beats: List[RecordBeats]


def prepare_data(records: Sequence[ECGRecord], ablation: AblationConfig, hyper: PretrainHyper) -> PreparedData:
    """
    Stack signals and precompute everything the targets need.

    Raises:
        ShapeError: If records differ in lead count, length or sampling rate
        InsufficientBeatsError: If a soft rhythm mode meets a record with < 2 beats
    """
    if not records:
        raise ConfigurationError("Pretraining needs at least one record")
    first = records[0]
    for record in records:
        if (record.n_leads, record.n_samples, record.sampling_rate) != (first.n_leads, first.n_samples, first.sampling_rate):
            raise ShapeError(f"Record {record.record_id} differs in shape or sampling rate from {first.record_id}")
    if first.n_leads != hyper.model.in_leads:
        raise ShapeError(f"Model expects {hyper.model.in_leads} leads, records have {first.n_leads}")

    signals = np.stack([r.signal for r in records]).astype(np.float32)
    needs_peaks = ablation.rhythm_mode != "hard" or ablation.beat_enabled
    r_peaks = [record_r_peaks(r) for r in records] if needs_peaks else [None] * len(records)

    record_features = None
    if ablation.rhythm_mode != "hard":
        raw = np.stack([extract_features(r, p).values for r, p in zip(records, r_peaks)])
        record_features = FeatureScaler().fit_transform(raw)

    beats = [RecordBeats() for _ in records]
    if ablation.beat_enabled:
        t = hyper.targets
        labeler = None
        if ablation.beat_mode == "hard":
            labeler = build_labeler(t.labeler, records, t.beat_window, first.sampling_rate)
        for record, peaks, entry in zip(records, r_peaks, beats):
            entry.windows = beat_windows(record.record_id, peaks, t.beat_window, record.n_samples,
                                         hyper.model.stride, t.max_padding_fraction)
            kept = np.array([w.r_peak for w in entry.windows], dtype=np.int64)
            if not len(kept):
                continue
            if labeler is not None:
                by_peak = dict(zip(peaks.tolist(), pseudo_label_beats(record, labeler, t.beat_window, peaks)))
                entry.classes = [by_peak[int(r)] for r in kept]
            else:
                entry.features = extract_beat_features(record, kept, t.beat_window)
        if ablation.beat_mode != "hard":
            stacked = [b.features for b in beats if b.features is not None]
            if stacked:
                scaler = FeatureScaler().fit(np.vstack(stacked))
                for entry in beats:
                    if entry.features is not None:
                        entry.features = scaler.transform(entry.features)
        n_beats = sum(len(b.windows) for b in beats)
        logger.info("Prepared %d beats over %d records for %s beat contrasting",
                    n_beats, len(records), ablation.beat_mode)
    return PreparedData(signals=signals, record_features=record_features, beats=beats)


class Pretrainer:
    """Owns the model, optimiser and prepared data for one pretraining run."""

    def __init__(self, records: Sequence[ECGRecord], ablation: AblationConfig, hyper: PretrainHyper):
        self.ablation = ablation.check(hyper.strict)
        self.hyper = hyper
        self.seed = hyper.train.seed
        self.params = AugmentParams.from_config(hyper.augment, seed=self.seed)
        self.data = prepare_data(records, ablation, hyper)
        torch.manual_seed(self.seed)
        self.model = PretrainModel(hyper.model)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=hyper.train.lr)
        self.n_records = len(records)

    def batches(self, epoch: int) -> List[np.ndarray]:
        """Seeded permutation split into full batches (the remainder is dropped)"""
        order = np.random.default_rng([self.seed, epoch]).permutation(self.n_records)
        size = min(self.hyper.train.batch_size, self.n_records)
        return [order[i:i + size] for i in range(0, self.n_records - size + 1, size)]

    def views(self, batch: np.ndarray, epoch: int, step: int) -> List[torch.Tensor]:
        out = []
        for view in (0, 1):
            stacked = [
                augment(self.data.signals[i], self.params, np.random.default_rng([self.seed, epoch, step, int(i), view]))
                for i in batch
            ]
            out.append(torch.as_tensor(np.stack(stacked), dtype=torch.float32))
        return out

    def rhythm_loss(self, h1: torch.Tensor, h2: torch.Tensor, batch: np.ndarray) -> torch.Tensor:
        pool = self.hyper.model.rhythm_pool
        z = self.model.rhythm_head(torch.cat([temporal_pool(h1, pool), temporal_pool(h2, pool)]))
        t = self.hyper.targets
        features = None if self.data.record_features is None else self.data.record_features[batch]
        targets = build_rhythm_targets(
            self.ablation.rhythm_mode, len(batch), features,
            exponent=self.ablation.exponent, k=t.k, p_norm=t.p_norm, soft2_exponent=t.soft2_exponent,
        )
        return ntxent(z, targets, self.hyper.loss.tau)

    def beat_loss(self, h1: torch.Tensor, h2: torch.Tensor, batch: np.ndarray) -> Optional[torch.Tensor]:
        """None when the batch holds too few beats to contrast"""
        t = self.hyper.targets
        pooled1, pooled2, classes, features = [], [], [], []
        for b, i in enumerate(batch):
            entry = self.data.beats[i]
            maps1, maps2 = h1[b].T, h2[b].T
            for window in entry.windows:
                pooled1.append(roi_pool(maps1, window.frame_span, t.pooling))
                pooled2.append(roi_pool(maps2, window.frame_span, t.pooling))
            classes.extend(entry.classes)
            if entry.features is not None:
                features.append(entry.features)
        m = len(pooled1)
        if m < 2 or (self.ablation.beat_mode == "soft_2" and m <= t.k):
            logger.debug("Skipping beat loss: %d beats in batch", m)
            return None
        z = self.model.beat_head(torch.stack(pooled1 + pooled2))
        targets = build_beat_targets(
            self.ablation.beat_mode,
            classes=classes or None,
            features=np.vstack(features) if features else None,
            exponent=self.ablation.exponent, k=t.k, p_norm=t.p_norm, soft2_exponent=t.soft2_exponent,
        )
        return ntxent(z, targets, self.hyper.loss.tau)

    def step(self, batch: np.ndarray, epoch: int, step: int) -> float:
        self.model.train()
        x1, x2 = self.views(batch, epoch, step)
        encoder = self.model.encoder
        before = encoder.invocations
        h1 = encoder(x1)
        h2 = encoder(x2)
        if encoder.invocations - before != 2:
            raise RuntimeError("Each view must be encoded exactly once per step")

        loss_r = self.rhythm_loss(h1, h2, batch)
        loss_b = self.beat_loss(h1, h2, batch) if self.ablation.beat_enabled else None
        total = total_pretrain_loss(loss_r, loss_b, self.hyper.loss)

        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        return float(total.detach())

    def run_epoch(self, epoch: int) -> float:
        losses = [self.step(batch, epoch, s) for s, batch in enumerate(self.batches(epoch))]
        return float(np.mean(losses))


def pretrain(records: Sequence[ECGRecord], ablation: AblationConfig, hyper: PretrainHyper,
             config_hash: Optional[str] = None) -> Checkpoint:
    """
    Pretrain an encoder on records under one ablation row.

    Raises:
        ConfigurationError: If the row is invalid (or not a table row in strict mode)
    """
    trainer = Pretrainer(records, ablation, hyper)
    config_hash = config_hash or run_hash(ablation, hyper)
    history: List[float] = []
    for epoch in range(hyper.train.epochs):
        start = time.time()
        history.append(trainer.run_epoch(epoch))
        logger.info("Epoch %d/%d [%s] loss %.4f (%.1fs)", epoch + 1, hyper.train.epochs,
                    ablation.label(), history[-1], time.time() - start)
    return Checkpoint.from_model(
        trainer.model,
        ablation=ablation,
        config_hash=config_hash,
        epochs=hyper.train.epochs,
        seed=hyper.train.seed,
        loss_history=history,
    )
