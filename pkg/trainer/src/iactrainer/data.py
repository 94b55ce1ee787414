"""Reading the snippet interchange schema and turning bodies into token ids.

This package is independent of the evaluator; the only contract is the JSONL
schema: {id, tool, body, label, pair_id?, misconfig_lines?} in, and
{id, predicted_label, score} out. Tokenization is a hashing trick over
lowercased whitespace tokens, so no vocabulary file needs to ship with a
checkpoint.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainerDataError

CLS_ID = 1  # 0 is padding
_HASH_OFFSET = 2


@dataclass
class Record:
    id: str
    body: str
    label: int


def load_dataset(path: str | Path) -> list[Record]:
    path = Path(path)
    if not path.exists():
        raise TrainerDataError(f"dataset file {path} does not exist")
    records: list[Record] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrainerDataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for field in ("id", "body", "label"):
                if field not in raw:
                    raise TrainerDataError(f"{path}:{lineno}: missing field {field!r}")
            if raw["label"] not in (0, 1):
                raise TrainerDataError(f"{path}:{lineno}: label must be 0 or 1")
            if raw["id"] in seen:
                raise TrainerDataError(f"{path}:{lineno}: duplicate id {raw['id']!r}")
            seen.add(raw["id"])
            records.append(Record(id=str(raw["id"]), body=str(raw["body"]), label=raw["label"]))
    return records


def hash_token(token: str, buckets: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return _HASH_OFFSET + int.from_bytes(digest[:8], "little") % (buckets - _HASH_OFFSET)


def encode(body: str, max_seq_len: int, buckets: int) -> tuple[np.ndarray, bool]:
    """Token ids (CLS first, zero-padded) and whether the body was truncated."""
    tokens = body.lower().split()
    truncated = len(tokens) > max_seq_len - 1
    ids = [CLS_ID] + [hash_token(t, buckets) for t in tokens[: max_seq_len - 1]]
    out = np.zeros(max_seq_len, dtype=np.int64)
    out[: len(ids)] = ids
    return out, truncated


def encode_dataset(
    records: list[Record], max_seq_len: int, buckets: int
) -> tuple[np.ndarray, np.ndarray, int]:
    """Stacked token ids, labels, and the count of truncated bodies."""
    matrix = np.zeros((len(records), max_seq_len), dtype=np.int64)
    labels = np.zeros(len(records), dtype=np.int64)
    truncated = 0
    for i, record in enumerate(records):
        row, was_truncated = encode(record.body, max_seq_len, buckets)
        matrix[i] = row
        labels[i] = record.label
        truncated += was_truncated
    return matrix, labels, truncated


def stratified_folds(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Index arrays of k label-stratified holdouts covering the dataset."""
    rng = np.random.default_rng(seed)
    fold_of = np.zeros(len(labels), dtype=np.int64)
    offset = 0
    for label in (1, 0):
        members = np.flatnonzero(labels == label)
        members = members[rng.permutation(len(members))]
        fold_of[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return [np.flatnonzero(fold_of == f) for f in range(k)]


def save_predictions(records: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
