from __future__ import annotations

import json
import random
from pathlib import Path

import pytest


def toy_records(n: int = 60, seed: int = 0) -> list[dict]:
    """Separable toy subset: misconfigured bodies leak credentials."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        label = i % 2
        if label:
            body = f"user {{ 'u{i}': password => 'hunter{rng.randint(2, 9)}', mode => '0777' }}"
        else:
            body = f"user {{ 'u{i}': ensure => present, mode => '064{rng.randint(0, 4)}' }}"
        records.append({"id": f"s{i:04d}", "tool": "puppet", "body": body, "label": label})
    rng.shuffle(records)
    return records


def write_jsonl(records: list[dict], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def toy_dataset(tmp_path) -> Path:
    return write_jsonl(toy_records(), tmp_path / "toy.jsonl")
