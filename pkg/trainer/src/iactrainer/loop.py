"""The fine-tuning regimen: AdamW with decayed weights, linear warmup over
the first fraction of steps, per-fold early stopping on stagnant validation
loss, and a final full-data fit that becomes the run checkpoint.

A run artifact is a directory holding config.json, log.jsonl (one record per
epoch per fold), summary.json (epochs per fold, truncation count), and
checkpoint.pt.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import STAGNATION_THRESHOLD, TrainConfig, TrainerDataError
from .data import encode_dataset, load_dataset, stratified_folds
from .model import SequenceClassifier, build_model

logger = logging.getLogger(__name__)


@dataclass
class RunArtifact:
    run_dir: Path
    epochs_per_fold: list[int]
    skipped_folds: list[int]
    truncated: int
    log: list[dict] = field(default_factory=list)

    @property
    def checkpoint_path(self) -> Path:
        return self.run_dir / "checkpoint.pt"


def _batches(n: int, batch_size: int, generator: np.random.Generator | None):
    order = np.arange(n) if generator is None else generator.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _lr_factor(step: int, warmup: int, total: int) -> float:
    """Linear warmup to 1.0 over `warmup` steps, then linear decay to 0."""
    if warmup > 0 and step < warmup:
        return (step + 1) / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


def _run_epochs(
    model: SequenceClassifier,
    config: TrainConfig,
    X_train: torch.Tensor,
    y_train: torch.Tensor,
    X_val: torch.Tensor | None,
    y_val: torch.Tensor | None,
    max_epochs: int,
    rng: np.random.Generator,
    on_epoch,
) -> int:
    """Train until early stop or max_epochs; returns the epochs run."""
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps_per_epoch = math.ceil(len(X_train) / config.batch_size)
    total_steps = steps_per_epoch * max_epochs
    warmup = config.warmup_steps(total_steps)
    criterion = nn.CrossEntropyLoss()
    step = 0
    best_val = math.inf
    stagnant = 0
    epochs_run = 0
    for epoch in range(1, max_epochs + 1):
        model.train()
        epoch_loss = 0.0
        for batch in _batches(len(X_train), config.batch_size, rng):
            for group in optimizer.param_groups:
                group["lr"] = config.learning_rate * _lr_factor(step, warmup, total_steps)
            optimizer.zero_grad()
            logits = model(X_train[batch])
            loss = criterion(logits, y_train[batch])
            loss.backward()
            optimizer.step()
            epoch_loss += loss.detach().item() * len(batch)
            step += 1
        train_loss = epoch_loss / len(X_train)
        val_loss = None
        if X_val is not None and len(X_val):
            model.eval()
            with torch.no_grad():
                val_loss = float(criterion(model(X_val), y_val))
        epochs_run = epoch
        on_epoch(epoch, train_loss, val_loss)
        if val_loss is not None:
            if best_val - val_loss > STAGNATION_THRESHOLD:
                best_val = val_loss
                stagnant = 0
            else:
                stagnant += 1
                if stagnant >= config.patience:
                    break
    return epochs_run


def finetune(config: TrainConfig, dataset_path: str | Path, run_dir: str | Path) -> RunArtifact:
    """Cross-validated training plus a final full-data fit.

    Single-class folds are skipped with a warning; bodies longer than the
    sequence limit are truncated and counted.
    """
    config.check()
    records = load_dataset(dataset_path)
    if not records:
        raise TrainerDataError(f"dataset {dataset_path} is empty")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.save(run_dir / "config.json")

    matrix, labels, truncated = encode_dataset(
        records, config.max_seq_len, config.vocab_buckets
    )
    if truncated:
        logger.warning("%d of %d bodies exceeded max_seq_len and were truncated",
                       truncated, len(records))
    X = torch.from_numpy(matrix)
    y = torch.from_numpy(labels)

    log: list[dict] = []
    epochs_per_fold: list[int] = []
    skipped: list[int] = []
    if config.folds > len(records):
        raise TrainerDataError(
            f"folds={config.folds} exceeds dataset size {len(records)}"
        )
    holdouts = stratified_folds(labels, config.folds, config.seed)
    for fold, holdout in enumerate(holdouts):
        train_idx = np.setdiff1d(np.arange(len(records)), holdout)
        if len(np.unique(labels[train_idx])) < 2 or len(holdout) == 0:
            logger.warning("fold %d skipped: single-class train side", fold)
            skipped.append(fold)
            continue
        model = build_model(config)
        rng = np.random.default_rng([config.seed, fold])
        epochs = _run_epochs(
            model, config,
            X[train_idx], y[train_idx], X[holdout], y[holdout],
            config.max_epochs, rng,
            lambda epoch, tl, vl, fold=fold: log.append(
                {"fold": fold, "epoch": epoch, "train_loss": tl, "val_loss": vl}
            ),
        )
        epochs_per_fold.append(epochs)

    final_epochs = config.final_epochs
    if final_epochs is None:
        final_epochs = max(epochs_per_fold, default=config.max_epochs)
    model = build_model(config)
    rng = np.random.default_rng([config.seed, config.folds])
    _run_epochs(
        model, config, X, y, None, None, final_epochs, rng,
        lambda epoch, tl, vl: log.append(
            {"fold": "final", "epoch": epoch, "train_loss": tl, "val_loss": vl}
        ),
    )

    with (run_dir / "log.jsonl").open("w", encoding="utf-8") as handle:
        for entry in log:
            handle.write(json.dumps(entry) + "\n")
    summary = {
        "epochs_per_fold": epochs_per_fold,
        "skipped_folds": skipped,
        "truncated": truncated,
        "final_epochs": final_epochs,
        "seed": config.seed,
        "dataset_size": len(records),
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    torch.save(
        {"state_dict": model.state_dict(), "config": config.to_json()},
        run_dir / "checkpoint.pt",
    )
    return RunArtifact(
        run_dir=run_dir,
        epochs_per_fold=epochs_per_fold,
        skipped_folds=skipped,
        truncated=truncated,
        log=log,
    )


def load_checkpoint(run_dir: str | Path) -> tuple[SequenceClassifier, TrainConfig]:
    path = Path(run_dir) / "checkpoint.pt"
    if not path.exists():
        raise TrainerDataError(f"no checkpoint at {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    config = TrainConfig.from_json(payload["config"])
    model = SequenceClassifier(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config


def predict(run_dir: str | Path, dataset_path: str | Path) -> list[dict]:
    """Prediction records {id, predicted_label, score} for every snippet,
    in input order. score is the positive-class probability."""
    model, config = load_checkpoint(run_dir)
    records = load_dataset(dataset_path)
    if not records:
        return []
    matrix, _, _ = encode_dataset(records, config.max_seq_len, config.vocab_buckets)
    X = torch.from_numpy(matrix)
    out: list[dict] = []
    with torch.no_grad():
        for start in range(0, len(records), config.batch_size):
            logits = model(X[start : start + config.batch_size])
            scores = torch.softmax(logits, dim=1)[:, 1]
            for record, score in zip(records[start : start + config.batch_size], scores):
                out.append(
                    {
                        "id": record.id,
                        "predicted_label": int(score > 0.5),
                        "score": float(score),
                    }
                )
    if len(out) != len(records) or any(
        r["id"] != rec.id for r, rec in zip(out, records)
    ):
        raise TrainerDataError("prediction ids diverged from the input dataset")
    return out
