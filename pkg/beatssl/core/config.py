"""
Configuration for beat-ssl experiments.

Two layers: RuntimeConfig reads environment variables (after python-dotenv has
loaded .env), ExperimentConfig is the validated YAML experiment file.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import ConfigurationError
from .validation import validate_fold_set, validate_interval

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "default.yaml"

RhythmMode = Literal["hard", "soft_1", "soft_2"]
BeatMode = Literal["none", "hard", "soft_1", "soft_2"]

# The ablation table, in table order: (rhythm contrast, beat contrast, exponent)
ABLATION_ROWS: Tuple[Tuple[str, str, float], ...] = (
    ("hard", "none", 1.0),
    ("hard", "hard", 1.0),
    ("hard", "soft_1", 1.0),
    ("hard", "soft_1", 50.0),
    ("hard", "soft_2", 1.0),
    ("soft_1", "none", 1.0),
    ("soft_1", "none", 50.0),
    ("soft_1", "hard", 1.0),
    ("soft_1", "hard", 50.0),
    ("soft_1", "soft_1", 1.0),
    ("soft_1", "soft_1", 50.0),
    ("soft_2", "none", 1.0),
    ("soft_2", "hard", 1.0),
    ("soft_2", "soft_2", 1.0),
)
BASELINE_ROW = ABLATION_ROWS[0]


class RuntimeConfig:
    """Process-level settings taken from the environment"""

    DATA_ROOT: Optional[str] = os.getenv("BEATSSL_DATA_ROOT")
    OUT_DIR: Path = Path(os.getenv("BEATSSL_OUT_DIR", "runs"))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    RUN_LOG_NAME: str = os.getenv("BEATSSL_RUN_LOG", "run_manifest.jsonl")

    @classmethod
    def refresh(cls) -> None:
        """Re-read the environment (after load_dotenv or in tests)"""
        cls.DATA_ROOT = os.getenv("BEATSSL_DATA_ROOT")
        cls.OUT_DIR = Path(os.getenv("BEATSSL_OUT_DIR", "runs"))
        cls.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
        cls.RUN_LOG_NAME = os.getenv("BEATSSL_RUN_LOG", "run_manifest.jsonl")

    @classmethod
    def get_run_log_path(cls, out_dir: Optional[Path] = None) -> Path:
        """Path of the run-manifest JSON-lines log"""
        return Path(out_dir or cls.OUT_DIR) / cls.RUN_LOG_NAME

    @classmethod
    def ensure_directories(cls, out_dir: Optional[Path] = None) -> Path:
        """Ensure the output directory tree exists"""
        root = Path(out_dir or cls.OUT_DIR)
        for sub in ("", "checkpoints", "scores", "reports"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        return root


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AblationConfig(_Section):
    """One row of the ablation table plus the strictness it is checked under."""

    rhythm_mode: RhythmMode = "hard"
    beat_mode: BeatMode = "none"
    exponent: float = Field(default=1.0, gt=0)

    def as_row(self) -> Tuple[str, str, float]:
        return (self.rhythm_mode, self.beat_mode, float(self.exponent))

    @property
    def beat_enabled(self) -> bool:
        return self.beat_mode != "none"

    @property
    def is_baseline(self) -> bool:
        return self.as_row() == BASELINE_ROW

    def label(self) -> str:
        beat = "-" if self.beat_mode == "none" else self.beat_mode
        text = f"{self.rhythm_mode}/{beat}/{self.exponent:g}"
        return f"{text}*" if self.is_baseline else text

    def check(self, strict: bool = True) -> "AblationConfig":
        """
        Validate the triple.

        Raises:
            ConfigurationError: If strict and the triple is not an ablation table
                row, or (always) for rhythm soft_2 with beat soft_1
        """
        if self.rhythm_mode == "soft_2" and self.beat_mode == "soft_1":
            raise ConfigurationError("rhythm soft_2 with beat soft_1 is never a valid combination")
        if strict and self.as_row() not in ABLATION_ROWS:
            raise ConfigurationError(
                f"Configuration {self.label()} is not one of the 14 rows of the ablation table; "
                "pass --no-strict to combine modes freely"
            )
        return self

    @classmethod
    def table_rows(cls) -> List["AblationConfig"]:
        return [cls(rhythm_mode=r, beat_mode=b, exponent=e) for r, b, e in ABLATION_ROWS]


class DataConfig(_Section):
    root: Optional[str] = None
    pretrain_folds: List[int] = Field(default_factory=lambda: list(range(1, 9)))
    test_folds: List[int] = Field(default_factory=lambda: [9, 10])
    sampling_rate: float = 500.0
    duration_s: float = 10.0

    @field_validator("pretrain_folds", "test_folds")
    @classmethod
    def _folds(cls, value: List[int]) -> List[int]:
        return sorted(validate_fold_set(value))


class AugmentConfig(_Section):
    theta_range: Tuple[float, float] = (-15.0, 15.0)
    scale_range: Tuple[float, float] = (1.0, 1.2)
    noise_sigma: float = Field(default=0.05, ge=0)

    @field_validator("theta_range")
    @classmethod
    def _theta(cls, value):
        return validate_interval("theta_range", value, -180.0, 180.0)

    @field_validator("scale_range")
    @classmethod
    def _scale(cls, value):
        lo, hi = validate_interval("scale_range", value, 0.0, float("inf"))
        if lo <= 0:
            raise ValueError("scale_range must be strictly positive")
        return lo, hi


class TargetsConfig(_Section):
    k: int = Field(default=3, ge=1)
    p_norm: float = Field(default=2.0, ge=1)
    soft2_exponent: float = Field(default=1.0, gt=0)
    beat_window: int = Field(default=352, ge=2)
    pooling: Literal["mean", "max"] = "mean"
    max_padding_fraction: float = Field(default=0.5, ge=0, le=1)
    labeler: str = "rule"

    @field_validator("beat_window")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("beat_window must be even")
        return value


class LossConfig(_Section):
    tau: float = Field(default=0.1, gt=0)
    lambda_beat: float = Field(default=1.0, ge=0)


class ModelConfig(_Section):
    in_leads: int = 12
    widths: List[int] = Field(default_factory=lambda: [32, 64, 128, 256])
    kernel_size: int = Field(default=7, ge=1)
    proj_dim: int = 128
    rhythm_pool: Literal["mean", "max"] = "mean"

    @field_validator("kernel_size")
    @classmethod
    def _odd(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return value

    @property
    def stride(self) -> int:
        return 2 ** len(self.widths)

    @property
    def channels(self) -> int:
        return self.widths[-1]


class TrainConfig(_Section):
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    seed: int = 0


class EvalConfig(_Section):
    probe_epochs: int = Field(default=50, ge=1)
    probe_lr: float = Field(default=1e-3, gt=0)
    probe_batch_size: int = Field(default=64, ge=1)
    probe_pool_kernel: int = Field(default=4, ge=1)
    threshold: float = Field(default=0.5, gt=0, lt=1)
    segment_epochs: int = Field(default=30, ge=1)
    segment_lr: float = Field(default=1e-3, gt=0)
    segment_batch_size: int = Field(default=8, ge=1)
    window: Tuple[int, int] = (500, 4500)
    probe_k: int = Field(default=10, ge=2)
    segment_k: int = Field(default=5, ge=2)
    runs: int = Field(default=5, ge=1)
    val_fraction: float = Field(default=0.1, gt=0, lt=1)


class PretrainHyper(_Section):
    """Everything pretraining needs apart from the ablation row and the data."""

    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    targets: TargetsConfig = Field(default_factory=TargetsConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    strict: bool = True


class ExperimentConfig(_Section):
    ablation: AblationConfig = Field(default_factory=AblationConfig)
    strict: bool = True
    data: DataConfig = Field(default_factory=DataConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    targets: TargetsConfig = Field(default_factory=TargetsConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    def pretrain_hyper(self) -> PretrainHyper:
        return PretrainHyper(
            augment=self.augment,
            targets=self.targets,
            loss=self.loss,
            model=self.model,
            train=self.train,
            strict=self.strict,
        )

    def with_ablation(self, ablation: AblationConfig) -> "ExperimentConfig":
        return self.model_copy(update={"ablation": ablation})

    def data_root(self) -> Optional[Path]:
        """Data root with BEATSSL_DATA_ROOT taking precedence over the file"""
        root = RuntimeConfig.DATA_ROOT or self.data.root
        return Path(root) if root else None

    def config_hash(self) -> str:
        """Stable 12-hex-digit hash of everything that defines the experiment"""
        payload = self.model_dump(mode="json", exclude={"data": {"root"}})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _format_pydantic_error(error: PydanticValidationError) -> str:
    unknown = []
    other = []
    for item in error.errors():
        dotted = ".".join(str(part) for part in item["loc"])
        if item["type"] == "extra_forbidden":
            unknown.append(dotted)
        else:
            other.append(f"{dotted}: {item['msg']}")
    parts = []
    if unknown:
        parts.append(f"Unknown config key(s): {', '.join(unknown)}")
    parts.extend(other)
    return "; ".join(parts)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_config(data: Optional[Dict[str, Any]]) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a plain mapping.

    Raises:
        ConfigurationError: Listing unknown keys or invalid values
    """
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError("Config file must contain a mapping at top level")
    try:
        return ExperimentConfig.model_validate(data or {})
    except PydanticValidationError as e:
        raise ConfigurationError(_format_pydantic_error(e)) from None


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load the packaged defaults, then the given YAML file, then overrides.

    Raises:
        ConfigurationError: If the file is missing, not YAML, or fails validation
    """
    with open(DEFAULT_CONFIG_PATH, "r", encoding="utf-8") as f:
        merged = yaml.safe_load(f) or {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                user = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Config file {path} is not valid YAML: {e}") from None
        if user is not None and not isinstance(user, dict):
            raise ConfigurationError(f"Config file {path} must contain a mapping at top level")
        merged = _deep_merge(merged, user or {})
    if overrides:
        merged = _deep_merge(merged, overrides)
    return parse_config(merged)
