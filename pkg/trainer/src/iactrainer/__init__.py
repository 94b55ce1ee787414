"""iac-trainer: desk-scale fine-tuning of sequence classifiers for IaC
misconfiguration detection. Consumes and produces the iacsmell JSONL
interchange schemas without importing that package."""

__version__ = "0.1.0"

from .config import TrainConfig, TrainerConfigError, TrainerDataError, desk_preset, full_scale_preset
from .loop import RunArtifact, finetune, load_checkpoint, predict
from .model import SequenceClassifier, build_model

__all__ = [
    "__version__",
    "RunArtifact",
    "SequenceClassifier",
    "TrainConfig",
    "TrainerConfigError",
    "TrainerDataError",
    "build_model",
    "desk_preset",
    "finetune",
    "full_scale_preset",
    "load_checkpoint",
    "predict",
]
