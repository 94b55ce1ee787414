from __future__ import annotations

import json
import random
from collections import Counter

import pytest

from iacsmell.corpus import (
    Snippet,
    SplitSpec,
    kfold,
    load_jsonl,
    save_jsonl,
    stratified_split,
    validate,
)
from iacsmell.errors import DataError

from conftest import make_dataset, make_paired_dataset, make_snippet


def write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


class TestLoadJsonl:
    def test_full_corpus_roundtrip(self, tmp_path):
        # the Ansible study corpus size
        records = [make_snippet(i, i % 2).to_record() for i in range(3066)]
        path = tmp_path / "ansible.jsonl"
        write_jsonl(path, records)
        loaded = load_jsonl(path)
        assert len(loaded) == 3066
        assert [s.id for s in loaded] == [r["id"] for r in records]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_jsonl(path) == []

    def test_label_outside_domain_names_line(self, tmp_path):
        records = [
            make_snippet(0, 1).to_record(),
            {**make_snippet(1, 0).to_record(), "label": 2},
        ]
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, records)
        with pytest.raises(DataError, match=r":2:"):
            load_jsonl(path)

    def test_malformed_line_names_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text(
            json.dumps(make_snippet(0, 1).to_record()) + "\n{not json\n"
        )
        with pytest.raises(DataError, match=r":2:.*malformed"):
            load_jsonl(path)

    def test_duplicate_id_rejected(self, tmp_path):
        record = make_snippet(0, 1).to_record()
        path = tmp_path / "dup.jsonl"
        write_jsonl(path, [record, record])
        with pytest.raises(DataError, match="duplicate id"):
            load_jsonl(path)

    def test_save_load_preserves_order_and_fields(self, tmp_path):
        original = [
            make_snippet(0, 1, pair_id="p0", misconfig_lines=[1]),
            make_snippet(1, 0, pair_id="p0"),
            make_snippet(2, 1, body="a\nb\nc", misconfig_lines=[2, 3]),
        ]
        path = tmp_path / "round.jsonl"
        save_jsonl(original, path)
        assert load_jsonl(path) == original


class TestValidate:
    def test_recount(self):
        dataset = [make_snippet(0, 1), make_snippet(1, 0), make_snippet(2, 1)]
        report = validate(dataset)
        assert report.manifest.per_label_counts == {0: 1, 1: 2}
        assert report.manifest.total == 3
        assert report.ok

    def test_out_of_range_misconfig_line_reported(self):
        body = "\n".join(f"line {i}" for i in range(10))
        snippet = Snippet(id="x", tool="puppet", body=body, label=1, misconfig_lines=[99])
        report = validate([snippet])
        assert any("misconfig_line 99" in v for v in report.violations)

    def test_puppet_corpus_total(self):
        # the Puppet study corpus size
        report = validate(make_dataset(979, 979))
        assert report.manifest.total == 1958

    def test_manifest_total_matches_counts(self):
        report = validate(make_dataset(7, 5))
        assert report.manifest.total == sum(report.manifest.per_label_counts.values())


def recount(parts, dataset):
    """Oracle: exhaustively recount ids and labels in emitted partitions."""
    all_ids = Counter()
    per_part_labels = []
    for part in parts:
        per_part_labels.append(Counter(s.label for s in part))
        all_ids.update(s.id for s in part)
    assert all_ids == Counter(s.id for s in dataset), "not a permutation of input"
    return per_part_labels


class TestStratifiedSplit:
    def test_ansible_corpus_sizes(self):
        dataset = make_dataset(1533, 1533)
        train, val, test = stratified_split(dataset, SplitSpec(seed=42))
        assert (len(train), len(val), len(test)) == (2146, 613, 307)

    def test_puppet_corpus_sizes(self):
        dataset = make_dataset(979, 979)
        train, val, test = stratified_split(dataset, SplitSpec(seed=42))
        assert (len(train), len(val), len(test)) == (1370, 392, 196)

    def test_small_dataset_per_label_recount(self):
        dataset = make_dataset(5, 5)
        spec = SplitSpec(0.8, 0.1, 0.1, seed=7)
        parts = stratified_split(dataset, spec)
        per_part = recount(parts, dataset)
        for label in (0, 1):
            for part_labels, frac in zip(per_part, (0.8, 0.1, 0.1)):
                assert abs(part_labels[label] - frac * 5) <= 1 + 1e-9

    def test_single_class_rejected(self):
        dataset = [make_snippet(i, 1) for i in range(10)]
        with pytest.raises(DataError, match="both labels"):
            stratified_split(dataset, SplitSpec(seed=0))

    def test_deterministic_for_seed(self):
        dataset = make_dataset(40, 25, seed=3)
        a = stratified_split(dataset, SplitSpec(seed=11))
        b = stratified_split(dataset, SplitSpec(seed=11))
        assert a == b

    def test_different_seed_can_differ(self):
        dataset = make_dataset(40, 25, seed=3)
        a = stratified_split(dataset, SplitSpec(seed=1))
        b = stratified_split(dataset, SplitSpec(seed=2))
        assert [s.id for s in a[0]] != [s.id for s in b[0]]

    def test_pairs_stay_together(self):
        dataset = make_paired_dataset(n_pairs=30, n_pos=11, n_neg=9, seed=5)
        parts = stratified_split(dataset, SplitSpec(seed=13))
        recount(parts, dataset)
        location = {}
        for p, part in enumerate(parts):
            for snippet in part:
                if snippet.pair_id:
                    location.setdefault(snippet.pair_id, set()).add(p)
        assert all(len(parts_seen) == 1 for parts_seen in location.values())

    def test_heavily_paired_still_stratified(self):
        dataset = make_paired_dataset(n_pairs=50, n_pos=0, n_neg=0, seed=5)
        parts = stratified_split(dataset, SplitSpec(seed=13))
        per_part = recount(parts, dataset)
        for label in (0, 1):
            for part_labels, frac in zip(per_part, (0.7, 0.2, 0.1)):
                assert abs(part_labels[label] - frac * 50) <= 1 + 1e-9

    def test_bad_fractions_rejected(self):
        with pytest.raises(DataError):
            stratified_split(make_dataset(5, 5), SplitSpec(0.7, 0.2, 0.2, seed=0))
        with pytest.raises(DataError):
            stratified_split(make_dataset(5, 5), SplitSpec(1.0, -0.05, 0.05, seed=0))

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            stratified_split([], SplitSpec(seed=0))


class TestKfold:
    def test_balanced_16_snippets(self):
        dataset = make_dataset(8, 8, seed=1)
        folds = kfold(dataset, k=8, seed=0)
        assert len(folds) == 8
        for train, holdout in folds:
            assert len(holdout) == 2
            assert sorted(s.label for s in holdout) == [0, 1]
            assert len(train) == 14

    def test_k_below_two_rejected(self):
        with pytest.raises(DataError):
            kfold(make_dataset(5, 5), k=1, seed=0)

    def test_k_exceeding_size_rejected(self):
        with pytest.raises(DataError):
            kfold(make_dataset(2, 2), k=5, seed=0)

    def test_puppet_corpus_fold_sizes(self):
        dataset = make_dataset(979, 979)
        folds = kfold(dataset, k=8, seed=0)
        sizes = sorted(len(h) for _, h in folds)
        assert set(sizes) <= {244, 245}
        assert sum(sizes) == 1958

    def test_holdouts_partition_exactly(self):
        dataset = make_dataset(23, 17, seed=2)
        folds = kfold(dataset, k=5, seed=9)
        seen = Counter()
        for _, holdout in folds:
            seen.update(s.id for s in holdout)
        assert seen == Counter(s.id for s in dataset)
        assert max(seen.values()) == 1

    def test_no_id_in_own_train_side(self):
        dataset = make_dataset(12, 9, seed=4)
        for train, holdout in kfold(dataset, k=4, seed=3):
            train_ids = {s.id for s in train}
            assert all(s.id not in train_ids for s in holdout)

    def test_deterministic(self):
        dataset = make_dataset(12, 9, seed=4)
        a = kfold(dataset, k=3, seed=5)
        b = kfold(dataset, k=3, seed=5)
        assert a == b

    def test_holdout_stratified_within_one(self):
        rng = random.Random(0)
        for _ in range(50):
            n_pos = rng.randint(4, 40)
            n_neg = rng.randint(4, 40)
            k = rng.randint(2, 4)
            dataset = make_dataset(n_pos, n_neg, seed=rng.randint(0, 999))
            folds = kfold(dataset, k=k, seed=rng.randint(0, 999))
            for _, holdout in folds:
                pos = sum(1 for s in holdout if s.label == 1)
                neg = len(holdout) - pos
                assert abs(pos - n_pos / k) <= 1 + 1e-9
                assert abs(neg - n_neg / k) <= 1 + 1e-9
