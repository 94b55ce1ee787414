"""Acceptance suite: one test per exit criterion, at the stated tolerances.

Run `pytest -v tests/test_acceptance.py` for one pass/fail line per
criterion. Criterion 1 (baseline regression against the published Puppet and
Ansible corpora) needs the real datasets; point IACSMELL_PUPPET_CORPUS and
IACSMELL_ANSIBLE_CORPUS at their JSONL files to enable it. When the corpora
are unavailable the criterion is replaced by the property suites below
(criteria 2-8), and the skip message states so.
"""
from __future__ import annotations

import itertools
import json
import os
import random
import re

import pytest

from iacsmell.ablate import reduce_puppet_context, strip_ansible_nl
from iacsmell.corpus import Snippet, SplitSpec, kfold, load_jsonl, stratified_split
from iacsmell.evaluate import (
    ConfusionMatrix,
    PipelineSpec,
    cross_validate,
    precision_recall_f1,
    render_table,
)
from iacsmell.features import (
    SparseVector,
    bow_vectorize,
    build_vocab,
    tfidf_vectorize,
)
from iacsmell.forest import (
    ForestConfig,
    RandomForestModel,
    predict,
    train_forest,
    train_tree,
    tree_rng,
)
from iacsmell.llm_bench import ChatClient, PUPPET_DETECT_PROMPT, PromptTemplate, benchmark, parse_cwes
from iacsmell.normalize import normalize_text

from conftest import envelope, make_paired_dataset, make_snippet, read_fixture, scripted_client
from test_features import oracle_bow, oracle_tfidf

PUBLISHED_PUPPET = {"tfidf": (0.70, 0.73, 0.72), "bow": (0.70, 0.74, 0.72)}
PUBLISHED_ANSIBLE = {"bow": (0.77, 0.84, 0.77)}
TOLERANCE = 0.07


def _passed(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


class TestCriterion1BaselineRegression:
    """Dataset-dependent regression against the published baseline rows."""

    def _run(self, path: str, expectations: dict[str, tuple[float, float, float]]):
        dataset = load_jsonl(path)
        for featurizer, (want_p, want_r, want_f1) in expectations.items():
            pipeline = PipelineSpec(
                featurizer=featurizer, forest=ForestConfig(n_trees=100, seed=42)
            )
            report = cross_validate(pipeline, dataset, k=8, seed=42)
            assert abs(report.precision - want_p) <= TOLERANCE
            assert abs(report.recall - want_r) <= TOLERANCE
            assert abs(report.f1 - want_f1) <= TOLERANCE

    def test_puppet_corpus(self):
        path = os.environ.get("IACSMELL_PUPPET_CORPUS")
        if not path:
            pytest.skip(
                "Puppet corpus unavailable (set IACSMELL_PUPPET_CORPUS); "
                "criterion replaced by the property suites (criteria 2-8)"
            )
        self._run(path, PUBLISHED_PUPPET)
        _passed("criterion-1 puppet baseline regression")

    def test_ansible_corpus(self):
        path = os.environ.get("IACSMELL_ANSIBLE_CORPUS")
        if not path:
            pytest.skip(
                "Ansible corpus unavailable (set IACSMELL_ANSIBLE_CORPUS); "
                "criterion replaced by the property suites (criteria 2-8)"
            )
        self._run(path, PUBLISHED_ANSIBLE)
        _passed("criterion-1 ansible baseline regression")


class TestCriterion2FeatureOracleEquivalence:
    def test_hundred_randomized_corpora(self):
        rng = random.Random(2024)
        words = [f"t{i}" for i in range(18)]
        for _ in range(100):
            corpus = [
                [rng.choice(words) for _ in range(rng.randint(0, 15))]
                for _ in range(rng.randint(1, 20))
            ]
            if not any(corpus):
                corpus[0] = ["t0"]
            vocab = build_vocab(corpus)
            for doc in corpus:
                bow = dict(bow_vectorize(doc, vocab).entries)
                assert bow == oracle_bow(doc, vocab)
                tfidf_vec = tfidf_vectorize(doc, vocab)
                tfidf = dict(tfidf_vec.entries)
                want = oracle_tfidf(doc, vocab)
                assert set(tfidf) == set(want)
                for index, weight in want.items():
                    assert abs(tfidf[index] - weight) <= 1e-12
                norm = tfidf_vec.norm()
                assert norm == 0.0 or abs(norm - 1.0) <= 1e-9
        _passed("criterion-2 feature oracle equivalence (100 corpora)")


def _random_separable(rng: random.Random, n: int, dim: int):
    X, y = [], []
    for _ in range(n):
        label = rng.randint(0, 1)
        low, high = (0.55 + 0.01, 1.0) if label else (0.0, 0.45)
        X.append(
            SparseVector(
                dimension=dim,
                entries=tuple(
                    (j, v)
                    for j, v in enumerate(
                        rng.uniform(low, high) for _ in range(dim)
                    )
                    if v != 0
                ),
            )
        )
        y.append(label)
    y[0], y[1] = 0, 1
    X[0] = SparseVector(dimension=dim, entries=tuple((j, 0.2) for j in range(dim)))
    X[1] = SparseVector(dimension=dim, entries=tuple((j, 0.8) for j in range(dim)))
    return X, y


class TestCriterion3ForestCorrectness:
    def test_randomized_separable_datasets(self):
        rng = random.Random(77)
        for trial in range(6):
            n = rng.randint(20, 200)
            dim = rng.randint(2, 6)
            X, y = _random_separable(rng, n, dim)
            config = ForestConfig(n_trees=25, seed=trial)
            model = train_forest(X, y, config)
            assert [predict(model, x)[0] for x in X] == y, "forest must fit separable data"
            retrained = train_forest(X, y, config)
            assert retrained.serialize() == model.serialize(), "fixed-seed retrain differs"
        _passed("criterion-3 forest training accuracy / determinism")

    def test_single_tree_memorizes(self):
        rng = random.Random(78)
        for trial in range(6):
            dim = rng.randint(2, 4)
            n = rng.randint(5, min(120, 8**dim))
            codes = rng.sample(range(8**dim), n)
            X = [
                SparseVector(
                    dimension=dim,
                    entries=tuple(
                        (j, float((c >> (3 * j)) % 8 + 1)) for j in range(dim)
                    ),
                )
                for c in codes
            ]
            y = [rng.randint(0, 1) for _ in range(n)]
            y[0], y[1 % n] = 0, 1
            config = ForestConfig(
                n_trees=1, bootstrap=False, features_per_split=dim, seed=trial
            )
            tree = train_tree(X, y, config, tree_rng(trial, 0))
            model = RandomForestModel(trees=[tree], config=config, dimension=dim)
            assert [predict(model, x)[0] for x in X] == y, "tree must memorize"
        _passed("criterion-3 single-tree memorization")


class TestCriterion4SplitFoldInvariants:
    def test_thousand_randomized_datasets(self):
        rng = random.Random(4)
        fractions_pool = [(0.7, 0.2, 0.1), (0.6, 0.2, 0.2), (0.5, 0.3, 0.2), (0.8, 0.1, 0.1)]
        for trial in range(1000):
            n_pos = rng.randint(1, 60)
            n_neg = rng.randint(1, 60)
            n_pairs = rng.randint(0, min(n_pos, n_neg)) if trial % 3 == 0 else 0
            dataset = make_paired_dataset(
                n_pairs, n_pos - n_pairs, n_neg - n_pairs, seed=trial
            )
            train_f, val_f, test_f = rng.choice(fractions_pool)
            spec = SplitSpec(train_f, val_f, test_f, seed=trial)
            parts = stratified_split(dataset, spec)
            ids = sorted(s.id for part in parts for s in part)
            assert ids == sorted(s.id for s in dataset), "split is not a partition"
            for label, n_label in ((1, n_pos), (0, n_neg)):
                for part, fraction in zip(parts, spec.fractions()):
                    count = sum(1 for s in part if s.label == label)
                    assert abs(count - fraction * n_label) <= 1 + 1e-9, (
                        f"label {label} deviates in trial {trial}"
                    )
            seen_pairs: dict[str, int] = {}
            for index, part in enumerate(parts):
                for snippet in part:
                    if snippet.pair_id:
                        assert seen_pairs.setdefault(snippet.pair_id, index) == index
        _passed("criterion-4 stratified split invariants (1000 datasets)")

    def test_published_corpus_sizes(self):
        for n_pos, n_neg, sizes in (
            (1533, 1533, (2146, 613, 307)),
            (979, 979, (1370, 392, 196)),
            (1000, 2066, (2146, 613, 307)),
            (700, 1258, (1370, 392, 196)),
        ):
            dataset = make_paired_dataset(0, n_pos, n_neg, seed=1)
            parts = stratified_split(dataset, SplitSpec(seed=42))
            assert tuple(len(p) for p in parts) == sizes
        _passed("criterion-4 published split sizes 2146/613/307 and 1370/392/196")

    def test_kfold_partitions_exactly(self):
        rng = random.Random(5)
        for trial in range(200):
            n_pos = rng.randint(2, 50)
            n_neg = rng.randint(2, 50)
            k = rng.randint(2, min(8, n_pos + n_neg))
            dataset = make_paired_dataset(0, n_pos, n_neg, seed=trial)
            folds = kfold(dataset, k=k, seed=trial)
            seen: list[str] = []
            for train, holdout in folds:
                seen.extend(s.id for s in holdout)
                train_ids = {s.id for s in train}
                assert not train_ids & {s.id for s in holdout}
                assert len(train) + len(holdout) == len(dataset)
            assert sorted(seen) == sorted(s.id for s in dataset)
        _passed("criterion-4 kfold exact partition (200 datasets)")


class TestCriterion5Normalization:
    def test_ten_thousand_fuzzed_inputs(self):
        rng = random.Random(55)
        forbidden = {"\n", ".", ",", "!"}
        for trial in range(10_000):
            if trial % 2:
                raw: str | bytes = bytes(
                    rng.randrange(256) for _ in range(rng.randint(0, 40))
                )
            else:
                raw = "".join(
                    chr(rng.choice((10, 9, 33, 44, 46, 65, 97, 122, 214, 304, 966, 128169)))
                    for _ in range(rng.randint(0, 40))
                )
            once = normalize_text(raw)
            assert normalize_text(once) == once, f"not idempotent on {raw!r}"
            assert not set(once) & forbidden, f"forbidden char in {once!r}"
        _passed("criterion-5 normalization idempotence/alphabet (10000 inputs)")


class TestCriterion6AblationGoldenFiles:
    def test_strip_nl_golden(self):
        source = read_fixture("nextcloud_tasks.yml")
        assert source.count("name:") == 2  # fixture carries two name entries
        out = strip_ansible_nl(source)
        assert "name:" not in out

        def keys_at_any_depth(node):
            found = set()
            if isinstance(node, dict):
                for key, value in node.items():
                    found.add(key)
                    found |= keys_at_any_depth(value)
            elif isinstance(node, list):
                for item in node:
                    found |= keys_at_any_depth(item)
            return found

        import yaml

        assert "name" not in keys_at_any_depth(yaml.safe_load(out))
        assert "mode: 0750" in out
        _passed("criterion-6 strip-nl golden (name entries removed, mode: 0750 kept)")

    def test_reduce_context_golden(self):
        snippet = Snippet(
            id="trove",
            tool="puppet",
            body=read_fixture("trove_reduced_input.pp"),
            label=1,
            misconfig_lines=[2],
        )
        out = reduce_puppet_context(snippet)
        expected = read_fixture("trove_reduced_expected.pp")
        assert out.splitlines() == expected.splitlines()
        _passed("criterion-6 reduce-context golden (line-for-line)")


class TestCriterion7MetricsIdentities:
    def test_exhaustive_small_matrices(self):
        for tp, fp, tn, fn in itertools.product(range(7), repeat=4):
            matrix = ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)
            p, r, f1 = precision_recall_f1(matrix)
            assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f1 <= 1.0
            if tp + fp == 0:
                assert p == 0.0
            else:
                assert p == tp / (tp + fp)
            if tp + fn == 0:
                assert r == 0.0
            else:
                assert r == tp / (tp + fn)
            if p + r == 0:
                assert f1 == 0.0
            else:
                assert f1 == 2 * p * r / (p + r)
                assert min(p, r) - 1e-12 <= f1 <= max(p, r) + 1e-12
        _passed("criterion-7 metrics identities (2401 matrices)")


class TestCriterion8LlmHarnessDeterminism:
    def test_two_cached_runs_identical(self, tmp_path):
        dataset = []
        for i in range(6):
            dataset.append(make_snippet(i, 1, body=f"password => 'hunter2' # {i}"))
            dataset.append(make_snippet(100 + i, 0, body=f"ensure => present # {i}"))
        template = PromptTemplate(tool="puppet", text=PUPPET_DETECT_PROMPT)

        def responder(payload):
            content = payload["messages"][0]["content"]
            return envelope("CWE-798 found" if "hunter2" in content else "clean")

        client = scripted_client(tmp_path, responder=responder, max_in_flight=3)
        first = benchmark(dataset, template, client)

        def offline(url, headers, payload, timeout):
            raise AssertionError("cache must serve the second run")

        second = benchmark(dataset, template, ChatClient(client.config, transport=offline))
        assert first.report.to_json() == second.report.to_json()
        table_first = render_table([("stub-model", first.report)], layout="models-rows")
        table_second = render_table([("stub-model", second.report)], layout="models-rows")
        assert table_first == table_second
        assert table_first.splitlines()[0].split() == [
            "Model", "Precision", "Recall", "F1-score",
        ]
        _passed("criterion-8 cached benchmark determinism + table layout")

    def test_cwe_parser_against_regex_oracle(self):
        rng = random.Random(88)
        pieces = [
            "CWE-", "cwe-", "CwE-", "798", "79", "0", "", " ", ", ", "and ",
            "no issue", "\n", "-", "CWE", "id:", "(", ")",
        ]
        oracle = re.compile(r"(?i)CWE-(\d+)")
        for _ in range(1000):
            text = "".join(rng.choice(pieces) for _ in range(rng.randint(0, 30)))
            expected: list[str] = []
            for match in oracle.finditer(text):
                cwe = f"CWE-{match.group(1)}"
                if cwe not in expected:
                    expected.append(cwe)
            assert parse_cwes(text) == expected
        _passed("criterion-8 CWE parser equals regex oracle (1000 responses)")
