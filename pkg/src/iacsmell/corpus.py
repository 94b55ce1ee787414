"""Labeled snippet datasets: JSONL loading, validation, splitting, and folding.

A dataset is a list of :class:`Snippet` records. The canonical interchange
format is JSONL, one snippet per line, UTF-8, with the field names used by
:meth:`Snippet.to_record`.
"""
from __future__ import annotations

import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

logger = logging.getLogger(__name__)

TOOLS = ("ansible", "puppet")


@dataclass
class Snippet:
    """One labeled IaC code unit.

    label 1 means misconfigured, 0 means clean/fixed. ``pair_id`` links a
    misconfigured snippet to its fixed counterpart. ``misconfig_lines`` are
    1-based line numbers of the misconfigured instruction(s).
    """

    id: str
    tool: str
    body: str
    label: int
    pair_id: str | None = None
    misconfig_lines: list[int] | None = None

    def line_count(self) -> int:
        return max(1, len(self.body.splitlines()))

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "tool": self.tool,
            "body": self.body,
            "label": self.label,
        }
        if self.pair_id is not None:
            record["pair_id"] = self.pair_id
        if self.misconfig_lines is not None:
            record["misconfig_lines"] = list(self.misconfig_lines)
        return record

    @classmethod
    def from_record(cls, record: dict) -> "Snippet":
        try:
            return cls(
                id=str(record["id"]),
                tool=str(record["tool"]),
                body=str(record["body"]),
                label=record["label"],
                pair_id=record.get("pair_id"),
                misconfig_lines=record.get("misconfig_lines"),
            )
        except KeyError as exc:
            raise DataError(f"missing required field {exc}") from exc


@dataclass
class DatasetManifest:
    """Recount summary of a dataset."""

    name: str
    tool: str
    total: int
    per_label_counts: dict[int, int]
    provenance: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "tool": self.tool,
            "total": self.total,
            "per_label_counts": {str(k): v for k, v in self.per_label_counts.items()},
            "provenance": self.provenance,
        }


@dataclass
class ValidationReport:
    manifest: DatasetManifest
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class SplitSpec:
    """Train/val/test fractions plus the shuffle seed."""

    train_fraction: float = 0.70
    val_fraction: float = 0.20
    test_fraction: float = 0.10
    seed: int = 0

    def fractions(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.val_fraction, self.test_fraction)

    def check(self) -> None:
        for f in self.fractions():
            if not (0.0 < f < 1.0):
                raise DataError(f"split fraction {f} outside (0, 1)")
        if abs(sum(self.fractions()) - 1.0) > 1e-9:
            raise DataError(f"split fractions {self.fractions()} do not sum to 1")


def _snippet_violations(snippet: Snippet) -> list[str]:
    problems = []
    if snippet.tool not in TOOLS:
        problems.append(f"{snippet.id}: unknown tool {snippet.tool!r}")
    if snippet.label not in (0, 1):
        problems.append(f"{snippet.id}: label {snippet.label!r} outside {{0, 1}}")
    if not snippet.body.strip():
        problems.append(f"{snippet.id}: body empty after trimming")
    if snippet.misconfig_lines is not None:
        n_lines = snippet.line_count()
        for ln in snippet.misconfig_lines:
            if not (isinstance(ln, int) and 1 <= ln <= n_lines):
                problems.append(
                    f"{snippet.id}: misconfig_line {ln} outside [1, {n_lines}]"
                )
    return problems


def load_jsonl(path: str | Path) -> list[Snippet]:
    """Parse a JSONL dataset file, enforcing the snippet invariants.

    Raises DataError naming the offending 1-based line on the first
    malformed record, invalid label, or duplicate id.
    """
    path = Path(path)
    snippets: list[Snippet] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            try:
                snippet = Snippet.from_record(record)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            problems = _snippet_violations(snippet)
            if problems:
                raise DataError(f"{path}:{lineno}: " + "; ".join(problems))
            if snippet.id in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate id {snippet.id!r}")
            seen_ids.add(snippet.id)
            snippets.append(snippet)
    return snippets


def save_jsonl(snippets: Iterable[Snippet], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for snippet in snippets:
            handle.write(json.dumps(snippet.to_record(), ensure_ascii=False) + "\n")


def validate(
    dataset: Sequence[Snippet], name: str = "", provenance: str = ""
) -> ValidationReport:
    """Recount a dataset and report every invariant violation by snippet id."""
    violations: list[str] = []
    seen: set[str] = set()
    per_label: Counter[int] = Counter()
    tools: set[str] = set()
    for snippet in dataset:
        violations.extend(_snippet_violations(snippet))
        if snippet.id in seen:
            violations.append(f"{snippet.id}: duplicate id")
        seen.add(snippet.id)
        per_label[snippet.label] += 1
        tools.add(snippet.tool)
    tool = tools.pop() if len(tools) == 1 else "mixed"
    manifest = DatasetManifest(
        name=name,
        tool=tool,
        total=len(dataset),
        per_label_counts=dict(sorted(per_label.items())),
        provenance=provenance,
    )
    return ValidationReport(manifest=manifest, violations=violations)


def _apportion(total: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` across ``fractions``.

    Remainder ties are broken toward the smaller fraction, then by position.
    """
    raw = [f * total for f in fractions]
    base = [math.floor(r) for r in raw]
    remainders = [r - b for r, b in zip(raw, base)]
    leftover = total - sum(base)
    order = sorted(
        range(len(fractions)), key=lambda i: (-remainders[i], fractions[i], i)
    )
    for i in order[:leftover]:
        base[i] += 1
    return base


def _quota_solve(
    n_pos: int, n_neg: int, fractions: Sequence[float], targets: Sequence[int]
) -> list[int] | None:
    """Positive-label quota per partition such that, together with the
    complement, every cell stays within floor/ceil of its proportional share
    and column sums hit ``targets`` exactly. None if infeasible."""
    n_parts = len(fractions)
    lo, hi = [], []
    for p in range(n_parts):
        ideal_pos = fractions[p] * n_pos
        ideal_neg = fractions[p] * n_neg
        l = max(math.floor(ideal_pos), targets[p] - math.ceil(ideal_neg))
        h = min(math.ceil(ideal_pos), targets[p] - math.floor(ideal_neg))
        if l > h:
            return None
        lo.append(l)
        hi.append(h)
    quota = list(lo)
    deficit = n_pos - sum(quota)
    if deficit < 0:
        return None
    order = sorted(
        range(n_parts),
        key=lambda p: (
            -(fractions[p] * n_pos - math.floor(fractions[p] * n_pos)),
            fractions[p],
            p,
        ),
    )
    while deficit > 0:
        progressed = False
        for p in order:
            if deficit == 0:
                break
            if quota[p] < hi[p]:
                quota[p] += 1
                deficit -= 1
                progressed = True
        if not progressed:
            return None
    return quota


def _partition_quotas(
    n_pos: int, n_neg: int, fractions: Sequence[float]
) -> tuple[list[int], list[int]]:
    """Per-partition label quotas: exact global sizes (largest remainder over
    the whole dataset) while each label's count stays within one item of its
    proportional share."""
    total = n_pos + n_neg
    raw = [f * total for f in fractions]
    base = [math.floor(r) for r in raw]
    remainders = [r - b for r, b in zip(raw, base)]
    leftover = total - sum(base)
    order = sorted(
        range(len(fractions)), key=lambda i: (-remainders[i], fractions[i], i)
    )
    # Preferred ceil-assignment first; fall back to the other assignments of
    # the leftover units if the cell bounds make it infeasible.
    candidates = [tuple(sorted(order[:leftover]))]
    for combo in combinations(range(len(fractions)), leftover):
        key = tuple(sorted(combo))
        if key not in candidates:
            candidates.append(key)
    for combo in candidates:
        targets = list(base)
        for i in combo:
            targets[i] += 1
        quota_pos = _quota_solve(n_pos, n_neg, fractions, targets)
        if quota_pos is not None:
            quota_neg = [targets[p] - quota_pos[p] for p in range(len(targets))]
            return quota_pos, quota_neg
    raise DataError("no feasible stratified allocation found")  # pragma: no cover


def stratified_split(
    dataset: Sequence[Snippet], spec: SplitSpec
) -> tuple[list[Snippet], list[Snippet], list[Snippet]]:
    """Partition a dataset into train/val/test.

    Guarantees: partitions are disjoint and exhaustive; each label's count in
    each partition is within one item of its proportional share; snippets
    sharing a pair_id land in the same partition; deterministic for a given
    seed. Global partition sizes follow largest-remainder rounding of the
    fractions, so 3066 items at 0.70/0.20/0.10 give 2146/613/307. When the
    data is so heavily paired that pair integrity and exact quotas cannot
    coexist, pairs win and the deviation is logged.
    """
    spec.check()
    if not dataset:
        raise DataError("cannot split an empty dataset")
    labels = {s.label for s in dataset}
    if labels != {0, 1}:
        raise DataError(f"stratification needs both labels, got {sorted(labels)}")

    fractions = spec.fractions()
    n_pos = sum(1 for s in dataset if s.label == 1)
    n_neg = len(dataset) - n_pos
    quota_pos, quota_neg = _partition_quotas(n_pos, n_neg, fractions)
    remaining = {1: list(quota_pos), 0: list(quota_neg)}

    # Units: pair groups stay together, everything else is a singleton.
    unit_of: dict[str, list[int]] = {}
    units: list[list[int]] = []
    for idx, snippet in enumerate(dataset):
        if snippet.pair_id is not None:
            if snippet.pair_id not in unit_of:
                unit_of[snippet.pair_id] = []
                units.append(unit_of[snippet.pair_id])
            unit_of[snippet.pair_id].append(idx)
        else:
            units.append([idx])

    rng = random.Random(spec.seed)
    rng.shuffle(units)

    def is_canonical_pair(members: list[int]) -> bool:
        return len(members) == 2 and {dataset[i].label for i in members} == {0, 1}

    pairs = [u for u in units if is_canonical_pair(u)]
    odd_groups = [u for u in units if len(u) > 1 and not is_canonical_pair(u)]
    singles = [u[0] for u in units if len(u) == 1]

    assignment = [-1] * len(dataset)

    def place(members: list[int], part: int) -> None:
        for i in members:
            assignment[i] = part
            remaining[dataset[i].label][part] -= 1

    # A misconfigured/fixed pair consumes one slot of each label, so pairs are
    # apportioned proportionally, capped by the per-partition label quotas.
    if pairs:
        caps = [min(quota_pos[p], quota_neg[p]) for p in range(3)]
        alloc = _apportion(len(pairs), fractions)
        if sum(caps) >= len(pairs):
            alloc = [min(alloc[p], caps[p]) for p in range(3)]
            overflow = len(pairs) - sum(alloc)
            while overflow > 0:
                p = max(range(3), key=lambda q: (caps[q] - alloc[q], -q))
                alloc[p] += 1
                overflow -= 1
        else:
            logger.warning(
                "dataset too heavily paired for exact stratification; "
                "keeping pairs intact (%d pairs, caps %s)", len(pairs), caps
            )
        cursor = 0
        for p in range(3):
            for _ in range(alloc[p]):
                place(pairs[cursor], p)
                cursor += 1

    # Unusual pair groups (same-label pairs, triples): greedy least-overflow.
    for members in odd_groups:
        need = Counter(dataset[i].label for i in members)
        def badness(p: int) -> tuple[int, int, int]:
            overflow = sum(max(0, need[lab] - remaining[lab][p]) for lab in need)
            slack = remaining[0][p] + remaining[1][p]
            return (overflow, -slack, p)
        place(members, min(range(3), key=badness))

    # Singletons top the quotas up exactly.
    for idx in singles:
        label = dataset[idx].label
        open_parts = [p for p in range(3) if remaining[label][p] > 0]
        part = open_parts[0] if open_parts else max(
            range(3), key=lambda p: (remaining[label][p], -p)
        )
        place([idx], part)

    parts: tuple[list[Snippet], list[Snippet], list[Snippet]] = ([], [], [])
    for idx, snippet in enumerate(dataset):
        parts[assignment[idx]].append(snippet)
    return parts


def kfold(
    dataset: Sequence[Snippet], k: int, seed: int = 0
) -> list[tuple[list[Snippet], list[Snippet]]]:
    """Stratified k-fold partition: k (train, holdout) pairs.

    Holdouts are pairwise disjoint, cover the dataset, and each label is
    spread across folds within one item of an even share. Deterministic for
    a given seed.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if k > len(dataset):
        raise DataError(f"k={k} exceeds dataset size {len(dataset)}")
    labels = {s.label for s in dataset}
    if labels != {0, 1}:
        raise DataError(f"stratification needs both labels, got {sorted(labels)}")

    rng = random.Random(seed)
    fold_of = [-1] * len(dataset)
    offset = 0
    for label in (1, 0):
        members = [i for i, s in enumerate(dataset) if s.label == label]
        rng.shuffle(members)
        for j, idx in enumerate(members):
            fold_of[idx] = (offset + j) % k
        # rotate so one label's leftovers do not pile onto the same folds
        offset = (offset + len(members)) % k
    folds = []
    for f in range(k):
        holdout = [s for i, s in enumerate(dataset) if fold_of[i] == f]
        train = [s for i, s in enumerate(dataset) if fold_of[i] != f]
        folds.append((train, holdout))
    return folds
