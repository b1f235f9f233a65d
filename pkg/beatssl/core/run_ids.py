"""
Run identifiers and output paths.

Every artifact path is derived from (config hash, seed), so two experiments
never write to the same file. Evaluations of a checkpoint add the hash of the
evaluating config, since one checkpoint can be scored under many configs.
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ValidationError


@dataclass(frozen=True)
class RunId:
    config_hash: str
    seed: int
    eval_hash: Optional[str] = None

    # Standard format: <config_hash>[-<eval_hash>]-s<seed>
    STANDARD_FORMAT = "{prefix}-s{seed}"
    PATTERN = re.compile(r'^([0-9a-f]{12})(?:-([0-9a-f]{12}))?-s(\d+)$')

    def __str__(self) -> str:
        prefix = self.config_hash if self.eval_hash is None else f"{self.config_hash}-{self.eval_hash}"
        return self.STANDARD_FORMAT.format(prefix=prefix, seed=self.seed)

    @classmethod
    def parse(cls, text: str) -> "RunId":
        """
        Parse '<hash>-s<seed>' or '<hash>-<eval_hash>-s<seed>'.

        Raises:
            ValidationError: If the text is not in the standard format
        """
        match = cls.PATTERN.match(text)
        if not match:
            raise ValidationError(f"Run id {text!r} is not in '<config_hash>[-<eval_hash>]-s<seed>' format")
        return cls(config_hash=match.group(1), seed=int(match.group(3)), eval_hash=match.group(2))

    def checkpoint_path(self, out_dir: Path) -> Path:
        return Path(out_dir) / "checkpoints" / f"{self}.ckpt"

    def score_table_path(self, out_dir: Path, task: Optional[str] = None) -> Path:
        name = f"{self}-{task}.csv" if task else f"{self}.csv"
        return Path(out_dir) / "scores" / name

    def report_dir(self, out_dir: Path) -> Path:
        return Path(out_dir) / "reports" / str(self)
