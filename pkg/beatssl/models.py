"""
Networks: the shared 1-D residual encoder, the projection heads, the mirrored
segmentation decoder and the linear probe.

The encoder maps (B, 12, D) to a (B, C, n_frames) feature map with
n_frames = ceil(D / stride); stride and C are fixed by the config before any
training so beat windows can be projected onto frames ahead of time.
"""

import logging
from typing import List, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from .beats import n_frames_for
from .core.config import ModelConfig
from .core.errors import ConfigurationError

logger = logging.getLogger(__name__)

N_WAVE_CLASSES = 4


class ResidualStage(nn.Module):
    """Two convolutions, the first with stride 2, plus a strided 1x1 shortcut."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(in_channels, out_channels, kernel_size, stride=2, padding=pad, bias=False)
        self.bn1 = nn.BatchNorm1d(out_channels)
        self.conv2 = nn.Conv1d(out_channels, out_channels, kernel_size, padding=pad, bias=False)
        self.bn2 = nn.BatchNorm1d(out_channels)
        self.shortcut = nn.Sequential(
            nn.Conv1d(in_channels, out_channels, 1, stride=2, bias=False),
            nn.BatchNorm1d(out_channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ConvEncoder(nn.Module):
    """
    Stem convolution at full resolution followed by one stride-2 residual
    stage per entry of widths.

    invocations counts forward calls so the training loop can assert that
    every view is encoded exactly once.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        widths = list(config.widths)
        k = config.kernel_size
        self.stem = nn.Sequential(
            nn.Conv1d(config.in_leads, widths[0], k, padding=k // 2, bias=False),
            nn.BatchNorm1d(widths[0]),
            nn.ReLU(),
        )
        ins = [widths[0]] + widths[:-1]
        self.stages = nn.ModuleList(ResidualStage(i, o, k) for i, o in zip(ins, widths))
        self.invocations = 0

    @property
    def stride(self) -> int:
        return self.config.stride

    @property
    def channels(self) -> int:
        return self.config.channels

    def n_frames(self, n_samples: int) -> int:
        return n_frames_for(n_samples, self.stride)

    def forward(self, x: torch.Tensor, return_stages: bool = False
                ) -> Union[torch.Tensor, Tuple[torch.Tensor, List[torch.Tensor]]]:
        self.invocations += 1
        skips = [self.stem(x)]
        out = skips[0]
        for stage in self.stages:
            out = stage(out)
            skips.append(out)
        if return_stages:
            return out, skips[:-1]
        return out


class ProjectionHead(nn.Module):
    """Linear C -> C, ReLU, Linear C -> out_dim."""

    def __init__(self, in_dim: int, out_dim: int = 128):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, in_dim), nn.ReLU(), nn.Linear(in_dim, out_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def temporal_pool(feature_map: torch.Tensor, reducer: str = "mean") -> torch.Tensor:
    """(B, C, T) -> (B, C)"""
    if reducer == "max":
        return feature_map.amax(dim=2)
    return feature_map.mean(dim=2)


class DecoderStage(nn.Module):
    def __init__(self, in_channels: int, skip_channels: int, out_channels: int, kernel_size: int):
        super().__init__()
        self.up = nn.ConvTranspose1d(in_channels, out_channels, kernel_size=4, stride=2, padding=1)
        self.conv = nn.Sequential(
            nn.Conv1d(out_channels + skip_channels, out_channels, kernel_size, padding=kernel_size // 2),
            nn.BatchNorm1d(out_channels),
            nn.ReLU(),
        )

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = self.up(x)[..., :skip.shape[-1]]
        if x.shape[-1] < skip.shape[-1]:
            x = F.pad(x, (0, skip.shape[-1] - x.shape[-1]))
        return self.conv(torch.cat([x, skip], dim=1))


class MirroredDecoder(nn.Module):
    """
    Encoder stages in reverse: each stage doubles the length with a transposed
    convolution and fuses the matching encoder activation, ending in per-sample
    logits over background, P, QRS and T.
    """

    def __init__(self, config: ModelConfig, n_classes: int = N_WAVE_CLASSES):
        super().__init__()
        widths = list(config.widths)
        skip_widths = [widths[0]] + widths[:-1]
        k = config.kernel_size
        stages = []
        current = widths[-1]
        for skip in reversed(skip_widths):
            stages.append(DecoderStage(current, skip, skip, k))
            current = skip
        self.stages = nn.ModuleList(stages)
        self.head = nn.Conv1d(current, n_classes, 1)

    def forward(self, features: torch.Tensor, skips: List[torch.Tensor]) -> torch.Tensor:
        x = features
        for stage, skip in zip(self.stages, reversed(skips)):
            x = stage(x, skip)
        return self.head(x)


class LinearProbe(nn.Module):
    """Max-pool along time, flatten, one linear layer."""

    def __init__(self, channels: int, n_frames: int, n_classes: int, pool_kernel: int = 4):
        super().__init__()
        self.pool_kernel = pool_kernel
        pooled = n_frames // pool_kernel
        if pooled < 1:
            raise ConfigurationError(f"{n_frames} frames cannot be max-pooled with kernel {pool_kernel}")
        self.linear = nn.Linear(channels * pooled, n_classes)

    def forward(self, feature_map: torch.Tensor) -> torch.Tensor:
        pooled = F.max_pool1d(feature_map, self.pool_kernel)
        return self.linear(pooled.flatten(1))


class PretrainModel(nn.Module):
    """Encoder with a rhythm projection head and a beat projection head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = ConvEncoder(config)
        self.rhythm_head = ProjectionHead(config.channels, config.proj_dim)
        self.beat_head = ProjectionHead(config.channels, config.proj_dim)


def freeze(module: nn.Module) -> nn.Module:
    """Eval mode and no gradients, so BatchNorm statistics stay fixed too"""
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module
