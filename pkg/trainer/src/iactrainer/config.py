"""Training configuration for the fine-tuning regimen.

The study grid used batch sizes 64/128 for the short-context family and 8/16
for the long-context family, with weight decay 0.01 or 0.001. Desk-scale
presets shrink the model and sequence length so the whole regimen runs on a
CPU in seconds; they keep the regimen itself (AdamW, linear warmup over the
first 10% of steps, early stopping after five stagnant validation epochs,
8-fold cross-validation) intact.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

MODEL_FAMILIES = ("code-bert-like", "long-context-like")

SHORT_CONTEXT_BATCH_GRID = (64, 128)
LONG_CONTEXT_BATCH_GRID = (8, 16)
WEIGHT_DECAY_GRID = (0.01, 0.001)

# Validation loss counts as improved only when it beats the best seen by
# more than this; anything else is "stagnant".
STAGNATION_THRESHOLD = 1e-4


class TrainerConfigError(ValueError):
    """Invalid training configuration (CLI exit code 2)."""


class TrainerDataError(ValueError):
    """Dataset violates the interchange schema (CLI exit code 3)."""


@dataclass
class TrainConfig:
    model_family: str = "code-bert-like"
    batch_size: int = 8
    weight_decay: float = 0.01
    warmup_fraction: float = 0.10
    max_epochs: int = 10
    patience: int = 5
    folds: int = 8
    learning_rate: float = 1e-3  # never stated in the study; flagged unanchored
    seed: int = 0
    max_seq_len: int = 128
    # model size (desk-scale defaults; the full-scale preset widens these)
    embed_dim: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 128
    vocab_buckets: int = 2048
    final_epochs: int | None = None  # None -> max epochs any fold ran

    def check(self) -> None:
        if self.model_family not in MODEL_FAMILIES:
            raise TrainerConfigError(
                f"model_family must be one of {MODEL_FAMILIES}, got {self.model_family!r}"
            )
        if self.batch_size < 1:
            raise TrainerConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise TrainerConfigError(
                f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}"
            )
        if self.patience < 1:
            raise TrainerConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise TrainerConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.folds < 2:
            raise TrainerConfigError(f"folds must be >= 2, got {self.folds}")
        if self.weight_decay < 0 or self.learning_rate <= 0:
            raise TrainerConfigError("weight_decay/learning_rate out of range")
        if self.embed_dim % self.n_heads:
            raise TrainerConfigError("embed_dim must be divisible by n_heads")

    def warmup_steps(self, total_steps: int) -> int:
        return math.ceil(self.warmup_fraction * total_steps)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "TrainConfig":
        return cls(**payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def desk_preset(model_family: str = "code-bert-like", **overrides) -> TrainConfig:
    """Small, CPU-fast settings preserving the regimen."""
    base = dict(
        model_family=model_family,
        batch_size=8,
        max_epochs=10,
        folds=2,
        max_seq_len=128 if model_family == "code-bert-like" else 256,
    )
    base.update(overrides)
    return TrainConfig(**base)


def full_scale_preset(model_family: str = "code-bert-like", **overrides) -> TrainConfig:
    """The study-sized regimen (not exercised by the test suite)."""
    base = dict(
        model_family=model_family,
        batch_size=64 if model_family == "code-bert-like" else 8,
        max_epochs=50,
        folds=8,
        max_seq_len=512 if model_family == "code-bert-like" else 2048,
        embed_dim=256,
        n_heads=8,
        n_layers=6,
        ff_dim=1024,
        vocab_buckets=32768,
    )
    base.update(overrides)
    return TrainConfig(**base)
