"""
Checkpoint container.

Layout: 8 magic bytes, an 8-byte little-endian header length, a compact
sorted-key JSON header (format version, config hash, ablation row, model
config, training metadata and the blob table), then the raw little-endian
weight blobs in state-dict order. Writes go to a temp file that is renamed
into place under a file lock.
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from filelock import FileLock

from .core.config import AblationConfig, ModelConfig
from .core.errors import ConfigurationError, IntegrityError
from .models import ConvEncoder, PretrainModel

logger = logging.getLogger(__name__)

MAGIC = b"BSSLCKPT"
FORMAT_VERSION = 1
RANDOM_INIT_TAG = "random-init"


def _le(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


@dataclass(eq=False)
class Checkpoint:
    """Encoder and head weights plus everything needed to rebuild and trace them."""

    state: Dict[str, np.ndarray]
    ablation: AblationConfig
    model: ModelConfig
    config_hash: str
    epochs: int
    seed: int
    loss_history: List[float] = field(default_factory=list)
    pretrained: bool = True
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: PretrainModel, ablation: AblationConfig, config_hash: str,
                   epochs: int, seed: int, loss_history: Optional[List[float]] = None,
                   pretrained: bool = True) -> "Checkpoint":
        state = {name: t.detach().cpu().numpy().copy() for name, t in model.state_dict().items()}
        return cls(
            state=state,
            ablation=ablation,
            model=model.config,
            config_hash=config_hash,
            epochs=epochs,
            seed=seed,
            loss_history=[float(v) for v in (loss_history or [])],
            pretrained=pretrained,
        )

    def build_model(self) -> PretrainModel:
        model = PretrainModel(self.model)
        model.load_state_dict({name: torch.from_numpy(np.array(a)) for name, a in self.state.items()})
        return model

    def build_encoder(self) -> ConvEncoder:
        return self.build_model().encoder

    def encoder_state(self) -> Dict[str, np.ndarray]:
        prefix = "encoder."
        return {k[len(prefix):]: v for k, v in self.state.items() if k.startswith(prefix)}

    def to_bytes(self) -> bytes:
        blobs = []
        table = []
        offset = 0
        for name, array in self.state.items():
            array = np.ascontiguousarray(array, dtype=_le(array.dtype))
            data = array.tobytes()
            table.append({
                "name": name,
                "dtype": array.dtype.str,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(data),
            })
            blobs.append(data)
            offset += len(data)
        header = {
            "format_version": self.format_version,
            "config_hash": self.config_hash,
            "ablation": self.ablation.model_dump(mode="json"),
            "model": self.model.model_dump(mode="json"),
            "epochs": self.epochs,
            "seed": self.seed,
            "loss_history": self.loss_history,
            "pretrained": self.pretrained,
            "blobs": table,
        }
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<Q", len(encoded)) + encoded + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        """
        Raises:
            IntegrityError: On a bad magic, unknown version or truncated blobs
        """
        if data[:len(MAGIC)] != MAGIC:
            raise IntegrityError("Not a beat-ssl checkpoint (bad magic)")
        start = len(MAGIC) + 8
        try:
            (length,) = struct.unpack("<Q", data[len(MAGIC):start])
            header = json.loads(data[start:start + length].decode("utf-8"))
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise IntegrityError(f"Checkpoint header is unreadable: {e}") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise IntegrityError(f"Unsupported checkpoint format version {header.get('format_version')}")
        payload = memoryview(data)[start + length:]
        state = {}
        for entry in header["blobs"]:
            end = entry["offset"] + entry["nbytes"]
            if end > len(payload):
                raise IntegrityError(f"Checkpoint truncated inside blob {entry['name']}")
            array = np.frombuffer(payload[entry["offset"]:end], dtype=np.dtype(entry["dtype"]))
            state[entry["name"]] = array.reshape(entry["shape"]).copy()
        return cls(
            state=state,
            ablation=AblationConfig.model_validate(header["ablation"]),
            model=ModelConfig.model_validate(header["model"]),
            config_hash=header["config_hash"],
            epochs=header["epochs"],
            seed=header["seed"],
            loss_history=list(header["loss_history"]),
            pretrained=header["pretrained"],
            format_version=header["format_version"],
        )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    """Atomic write: temp file in the same directory, then os.replace"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with FileLock(str(path) + ".lock"):
        with open(tmp, "wb") as f:
            f.write(checkpoint.to_bytes())
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    logger.info("Saved checkpoint %s (%s, %d epochs)", path, checkpoint.config_hash, checkpoint.epochs)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        return Checkpoint.from_bytes(f.read())


def random_init_hash(model_config: ModelConfig) -> str:
    """12-hex-digit hash of an untrained encoder's architecture"""
    payload = json.dumps({"tag": RANDOM_INIT_TAG, "model": model_config.model_dump(mode="json")},
                         sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def initial_checkpoint(model_config: ModelConfig, seed: int,
                       ablation: Optional[AblationConfig] = None) -> Checkpoint:
    """Randomly initialised weights, for paired comparisons against pretraining"""
    torch.manual_seed(seed)
    model = PretrainModel(model_config)
    return Checkpoint.from_model(
        model,
        ablation=ablation or AblationConfig(),
        config_hash=random_init_hash(model_config),
        epochs=0,
        seed=seed,
        pretrained=False,
    )
