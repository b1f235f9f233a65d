"""
Vectorcardiogram augmentation.

A 12-lead ECG is mapped to a 3-axis VCG with the Kors regression matrix,
rotated about a random axis and scaled there, mapped back with the
pseudo-inverse, and finally perturbed with Gaussian noise in the ECG domain.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .core.config import AugmentConfig
from .core.errors import ConfigurationError, ShapeError
from .core.validation import validate_interval, validate_unit_axis
from .records import N_LEADS

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-12

# Kors (1990) regression coefficients, rows X, Y, Z, columns in LEAD_NAMES order.
# The limb-derived leads III, aVR, aVL and aVF carry no independent information
# and get zero weight.
KORS_MATRIX = np.array([
    #  I      II    III  aVR  aVL  aVF   V1     V2     V3     V4     V5     V6
    [0.38, -0.07, 0.0, 0.0, 0.0, 0.0, -0.13, 0.05, -0.01, 0.14, 0.06, 0.54],
    [-0.07, 0.93, 0.0, 0.0, 0.0, 0.0, 0.06, -0.02, -0.05, 0.06, -0.17, 0.13],
    [0.11, -0.23, 0.0, 0.0, 0.0, 0.0, -0.43, -0.06, -0.14, -0.20, -0.11, 0.31],
])


@dataclass(frozen=True, eq=False)
class KorsTransform:
    """ECG <-> VCG linear maps. Immutable; the pseudo-inverse is computed once."""

    forward: np.ndarray = field(default_factory=lambda: KORS_MATRIX.copy())

    def __post_init__(self):
        forward = np.asarray(self.forward, dtype=np.float64)
        if forward.shape != (3, N_LEADS):
            raise ShapeError(f"Kors matrix must be 3x{N_LEADS}, got {forward.shape}")
        if np.linalg.matrix_rank(forward) != 3:
            raise ShapeError("Kors matrix must have rank 3")
        forward.setflags(write=False)
        object.__setattr__(self, "forward", forward)

    @cached_property
    def inverse(self) -> np.ndarray:
        inverse = np.linalg.pinv(self.forward, rcond=PINV_RCOND)
        inverse.setflags(write=False)
        return inverse

    def identity_error(self) -> float:
        """max |M M+ - I3|"""
        return float(np.max(np.abs(self.forward @ self.inverse - np.eye(3))))

    def to_vcg(self, ecg: np.ndarray) -> np.ndarray:
        ecg = np.asarray(ecg, dtype=np.float64)
        if ecg.ndim != 2 or ecg.shape[0] != N_LEADS:
            raise ShapeError(f"Expected {N_LEADS} x D ECG, got shape {ecg.shape}")
        return self.forward @ ecg

    def to_ecg(self, vcg: np.ndarray) -> np.ndarray:
        vcg = np.asarray(vcg, dtype=np.float64)
        if vcg.ndim != 2 or vcg.shape[0] != 3:
            raise ShapeError(f"Expected 3 x D VCG, got shape {vcg.shape}")
        return self.inverse @ vcg

    def project(self, ecg: np.ndarray) -> np.ndarray:
        """Projection onto the Kors row space, M+ M X"""
        return self.to_ecg(self.to_vcg(ecg))


KORS = KorsTransform()


def ecg_to_vcg(ecg: np.ndarray) -> np.ndarray:
    return KORS.to_vcg(ecg)


def vcg_to_ecg(vcg: np.ndarray) -> np.ndarray:
    return KORS.to_ecg(vcg)


def rotate_vcg(vcg: np.ndarray, theta: float, axis) -> np.ndarray:
    """
    Rotate every VCG column by theta degrees about a unit axis.

    Raises:
        ValidationError: If the axis is not unit length within 1e-9
    """
    axis = validate_unit_axis(axis)
    vcg = np.asarray(vcg, dtype=np.float64)
    if vcg.ndim != 2 or vcg.shape[0] != 3:
        raise ShapeError(f"Expected 3 x D VCG, got shape {vcg.shape}")
    matrix = Rotation.from_rotvec(np.deg2rad(theta) * axis).as_matrix()
    return matrix @ vcg


def random_axis(rng: np.random.Generator) -> np.ndarray:
    """Axis uniform on the unit sphere"""
    while True:
        v = rng.standard_normal(3)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


@dataclass(frozen=True)
class AugmentParams:
    theta_range: Tuple[float, float] = (-15.0, 15.0)
    scale_range: Tuple[float, float] = (1.0, 1.2)
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_range", validate_interval("theta_range", self.theta_range, -180.0, 180.0))
        lo, hi = validate_interval("scale_range", self.scale_range, 0.0, float("inf"))
        if lo <= 0:
            raise ConfigurationError("scale_range must be strictly positive")
        object.__setattr__(self, "scale_range", (lo, hi))
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")

    @classmethod
    def from_config(cls, config: AugmentConfig, seed: int = 0) -> "AugmentParams":
        return cls(
            theta_range=tuple(config.theta_range),
            scale_range=tuple(config.scale_range),
            noise_sigma=config.noise_sigma,
            seed=seed,
        )


@dataclass(frozen=True, eq=False)
class AugmentDraw:
    """The concrete random choices behind one augmented view."""
    theta: float
    axis: np.ndarray
    scale: float


def draw_params(params: AugmentParams, rng: np.random.Generator) -> AugmentDraw:
    theta = rng.uniform(*params.theta_range)
    axis = random_axis(rng)
    scale = rng.uniform(*params.scale_range)
    return AugmentDraw(theta=float(theta), axis=axis, scale=float(scale))


def augment(ecg: np.ndarray, params: AugmentParams, rng: Optional[np.random.Generator] = None,
            kors: KorsTransform = KORS) -> np.ndarray:
    """
    One augmented view: rotate then scale in VCG space, reconstruct, add noise.

    Deterministic given rng; a fresh generator seeded with params.seed is used
    when none is passed.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    vcg = kors.to_vcg(ecg)
    draw = draw_params(params, rng)
    vcg = draw.scale * rotate_vcg(vcg, draw.theta, draw.axis)
    out = kors.to_ecg(vcg)
    if params.noise_sigma > 0:
        out = out + rng.normal(0.0, params.noise_sigma, size=out.shape)
    return out


def augment_pair(ecg: np.ndarray, params: AugmentParams, rng: np.random.Generator,
                 kors: KorsTransform = KORS) -> Tuple[np.ndarray, np.ndarray]:
    """Two views with independent draws"""
    return augment(ecg, params, rng, kors), augment(ecg, params, rng, kors)
