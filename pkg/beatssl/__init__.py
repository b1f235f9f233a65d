"""
beat-ssl: dual-context contrastive pretraining for 12-lead ECG.

Rhythm-level and beat-level NT-Xent losses with hard or soft pairwise
targets, VCG-space augmentation, beat ROI pooling on a shared feature map,
and the linear-probe / segmentation harness used to compare configurations.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .core.config import AblationConfig, ExperimentConfig, load_config
from .core.errors import BeatSSLError
from .loss import ntxent
from .pretrain import pretrain
from .records import ECGRecord
from .synthetic import synth_generate

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "BeatSSLError",
    "Checkpoint",
    "ECGRecord",
    "ExperimentConfig",
    "load_checkpoint",
    "load_config",
    "ntxent",
    "pretrain",
    "save_checkpoint",
    "synth_generate",
]
