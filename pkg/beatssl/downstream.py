"""
Downstream harnesses on a frozen encoder: multilabel linear probing and
wave segmentation with a mirrored decoder.
"""

import copy
import logging
import warnings
from typing import List, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field

from .checkpoint import Checkpoint
from .core.config import EvalConfig
from .core.errors import ConfigurationError
from .metrics import MetricReport, macro_auroc, probe_report, segment_report
from .models import ConvEncoder, LinearProbe, MirroredDecoder, freeze
from .records import ECGRecord

logger = logging.getLogger(__name__)


class ProbeHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=50, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=64, ge=1)
    pool_kernel: int = Field(default=4, ge=1)
    threshold: float = Field(default=0.5, gt=0, lt=1)
    seed: int = 0

    @classmethod
    def from_eval(cls, config: EvalConfig, seed: int = 0) -> "ProbeHyper":
        return cls(epochs=config.probe_epochs, lr=config.probe_lr, batch_size=config.probe_batch_size,
                   pool_kernel=config.probe_pool_kernel, threshold=config.threshold, seed=seed)


class SegmentHyper(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=30, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=8, ge=1)
    window: Tuple[int, int] = (500, 4500)
    seed: int = 0

    @classmethod
    def from_eval(cls, config: EvalConfig, seed: int = 0) -> "SegmentHyper":
        return cls(epochs=config.segment_epochs, lr=config.segment_lr, batch_size=config.segment_batch_size,
                   window=config.window, seed=seed)


def _signals(records: Sequence[ECGRecord]) -> torch.Tensor:
    return torch.as_tensor(np.stack([r.signal for r in records]), dtype=torch.float32)


@torch.no_grad()
def encode_records(encoder: ConvEncoder, records: Sequence[ECGRecord], batch_size: int = 32,
                   return_stages: bool = False):
    """Frozen-encoder feature maps for records, batched"""
    maps, stages = [], []
    for i in range(0, len(records), batch_size):
        x = _signals(records[i:i + batch_size])
        if return_stages:
            out, skips = encoder(x, return_stages=True)
            stages.append(skips)
        else:
            out = encoder(x)
        maps.append(out)
    features = torch.cat(maps)
    if not return_stages:
        return features
    return features, [torch.cat([s[level] for s in stages]) for level in range(len(stages[0]))]


def frozen_encoder(checkpoint: Checkpoint) -> ConvEncoder:
    return freeze(checkpoint.build_encoder())


def label_classes(train: Sequence[ECGRecord], *others: Sequence[ECGRecord]) -> List[str]:
    """
    Sorted label vocabulary of the training split.

    Raises:
        ConfigurationError: If another split uses a label absent from training
    """
    classes = sorted(set().union(*(r.rhythm_labels for r in train)))
    if not classes:
        raise ConfigurationError("Training records carry no rhythm labels")
    for split in others:
        extra = set().union(*(r.rhythm_labels for r in split)) - set(classes)
        if extra:
            raise ConfigurationError(f"Labels {sorted(extra)} do not occur in the training split")
    return classes


def label_matrix(records: Sequence[ECGRecord], classes: Sequence[str]) -> np.ndarray:
    return np.array([[float(c in r.rhythm_labels) for c in classes] for r in records], dtype=np.float32)


def _split_ids(**splits: Sequence[ECGRecord]) -> dict:
    return {name: [r.record_id for r in records] for name, records in splits.items()}


def linear_probe(checkpoint: Checkpoint, train: Sequence[ECGRecord], val: Sequence[ECGRecord],
                 test: Sequence[ECGRecord], hyper: ProbeHyper) -> MetricReport:
    """
    Train a linear classifier on frozen encoder features and score the test split.

    The epoch with the best validation macro AUROC is kept (the last epoch when
    there is no validation split).
    """
    if not train or not test:
        raise ConfigurationError("Linear probing needs nonempty train and test splits")
    classes = label_classes(train, val, test)
    encoder = frozen_encoder(checkpoint)
    x_train = encode_records(encoder, train)
    x_val = encode_records(encoder, val) if val else None
    x_test = encode_records(encoder, test)
    y_train = torch.as_tensor(label_matrix(train, classes))
    y_val = label_matrix(val, classes) if val else None

    torch.manual_seed(hyper.seed)
    probe = LinearProbe(encoder.channels, x_train.shape[2], len(classes), hyper.pool_kernel)
    optimizer = torch.optim.Adam(probe.parameters(), lr=hyper.lr)
    criterion = nn.BCEWithLogitsLoss()
    generator = torch.Generator().manual_seed(hyper.seed)

    best_state, best_score = None, -np.inf
    for epoch in range(hyper.epochs):
        probe.train()
        order = torch.randperm(len(train), generator=generator)
        for i in range(0, len(train), hyper.batch_size):
            idx = order[i:i + hyper.batch_size]
            loss = criterion(probe(x_train[idx]), y_train[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        if x_val is not None:
            probe.eval()
            with torch.no_grad(), warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                score, _, _ = macro_auroc(torch.sigmoid(probe(x_val)).numpy(), y_val)
            if score > best_score:
                best_score, best_state = score, copy.deepcopy(probe.state_dict())
    if best_state is not None:
        probe.load_state_dict(best_state)
        logger.debug("Probe kept validation AUROC %.4f", best_score)

    probe.eval()
    with torch.no_grad():
        scores = torch.sigmoid(probe(x_test)).numpy()
    return probe_report(
        scores, label_matrix(test, classes), classes,
        seed=hyper.seed,
        config_hash=checkpoint.config_hash,
        threshold=hyper.threshold,
        splits=_split_ids(train=train, val=val, test=test),
    )


def _masks(records: Sequence[ECGRecord]) -> np.ndarray:
    missing = [r.record_id for r in records if r.wave_masks is None]
    if missing:
        raise ConfigurationError(f"Records without wave masks: {missing[:5]}")
    return np.stack([r.wave_masks.labels for r in records]).astype(np.int64)


def segmentation_finetune(checkpoint: Checkpoint, train: Sequence[ECGRecord], test: Sequence[ECGRecord],
                          hyper: SegmentHyper) -> MetricReport:
    """
    Train a mirrored decoder on frozen encoder activations with cross-entropy,
    then score P/QRS/T F1 and Dice on the evaluation window of the test split.
    """
    if not train or not test:
        raise ConfigurationError("Segmentation needs nonempty train and test splits")
    y_train = torch.as_tensor(_masks(train))
    y_test = _masks(test)

    encoder = frozen_encoder(checkpoint)
    feats_train, skips_train = encode_records(encoder, train, return_stages=True)
    feats_test, skips_test = encode_records(encoder, test, return_stages=True)

    torch.manual_seed(hyper.seed)
    decoder = MirroredDecoder(checkpoint.model)
    optimizer = torch.optim.Adam(decoder.parameters(), lr=hyper.lr)
    criterion = nn.CrossEntropyLoss()
    generator = torch.Generator().manual_seed(hyper.seed)

    for epoch in range(hyper.epochs):
        decoder.train()
        order = torch.randperm(len(train), generator=generator)
        total = 0.0
        for i in range(0, len(train), hyper.batch_size):
            idx = order[i:i + hyper.batch_size]
            logits = decoder(feats_train[idx], [s[idx] for s in skips_train])
            loss = criterion(logits, y_train[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
        logger.debug("Decoder epoch %d loss %.4f", epoch + 1, total / len(train))

    decoder.eval()
    preds = []
    with torch.no_grad():
        for i in range(0, len(test), hyper.batch_size):
            sl = slice(i, i + hyper.batch_size)
            preds.append(decoder(feats_test[sl], [s[sl] for s in skips_test]).argmax(dim=1).numpy())
    return segment_report(
        np.concatenate(preds), y_test,
        seed=hyper.seed,
        config_hash=checkpoint.config_hash,
        window=tuple(hyper.window),
        splits=_split_ids(train=train, test=test),
    )
