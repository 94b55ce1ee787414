"""From-scratch CART trees and a bagged random forest for binary labels.

Splits minimize weighted Gini impurity over a per-node random feature
subset; thresholds sit at midpoints of sorted distinct values. Feature
matrices are sparse-aware: absent entries are exact zeros and the implicit
zero mass participates in the split search. Every source of randomness is
derived from the forest seed, so training is reproducible end to end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError
from .features import SparseVector


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | str = "sqrt"  # "sqrt" -> ceil(sqrt(d)), or an int
    bootstrap: bool = True
    seed: int = 0

    def check(self, dimension: int) -> int:
        """Validate against a feature dimension and resolve the subset size."""
        if self.n_trees < 1:
            raise DataError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_split < 2:
            raise DataError(
                f"min_samples_split must be >= 2, got {self.min_samples_split}"
            )
        if self.features_per_split == "sqrt":
            return max(1, math.ceil(math.sqrt(dimension)))
        k = int(self.features_per_split)
        if not 1 <= k <= dimension:
            raise DataError(
                f"features_per_split {k} outside [1, {dimension}]"
            )
        return k

    def to_json(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "features_per_split": self.features_per_split,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ForestConfig":
        return cls(**payload)


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (probabilities)."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    probabilities: tuple[float, float] | None = None  # (p0, p1) at leaves
    counts: tuple[int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.probabilities is not None

    def to_json(self) -> dict:
        if self.is_leaf:
            return {"leaf": list(self.probabilities), "counts": list(self.counts)}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TreeNode":
        if "leaf" in payload:
            return cls(
                probabilities=tuple(payload["leaf"]),
                counts=tuple(payload["counts"]),
            )
        return cls(
            feature=payload["feature"],
            threshold=payload["threshold"],
            left=payload["left"],
            right=payload["right"],
        )


@dataclass
class DecisionTree:
    nodes: list[TreeNode] = field(default_factory=list)

    def route(self, values: "_DenseLookup") -> TreeNode:
        node = self.nodes[0]
        while not node.is_leaf:
            if values.get(node.feature) <= node.threshold:
                node = self.nodes[node.left]
            else:
                node = self.nodes[node.right]
        return node

    def vote(self, values: "_DenseLookup") -> int:
        leaf = self.route(values)
        return 1 if leaf.probabilities[1] > 0.5 else 0

    def to_json(self) -> dict:
        return {"nodes": [n.to_json() for n in self.nodes]}

    @classmethod
    def from_json(cls, payload: dict) -> "DecisionTree":
        return cls(nodes=[TreeNode.from_json(n) for n in payload["nodes"]])


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    config: ForestConfig
    dimension: int
    vocab_fingerprint: str = ""

    def to_json(self) -> dict:
        return {
            "format": "iacsmell-forest/1",
            "config": self.config.to_json(),
            "dimension": self.dimension,
            "vocab_fingerprint": self.vocab_fingerprint,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "RandomForestModel":
        if payload.get("format") != "iacsmell-forest/1":
            raise DataError(f"unsupported forest format {payload.get('format')!r}")
        config = ForestConfig.from_json(payload["config"])
        trees = [DecisionTree.from_json(t) for t in payload["trees"]]
        if len(trees) != config.n_trees:
            raise DataError(
                f"model carries {len(trees)} trees but config says {config.n_trees}"
            )
        return cls(
            trees=trees,
            config=config,
            dimension=payload["dimension"],
            vocab_fingerprint=payload.get("vocab_fingerprint", ""),
        )

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RandomForestModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class _DenseLookup:
    """Feature accessor over either a dense sequence or a SparseVector."""

    __slots__ = ("_map",)

    def __init__(self, x: SparseVector | Sequence[float]):
        if isinstance(x, SparseVector):
            self._map = dict(x.entries)
        else:
            self._map = {i: float(v) for i, v in enumerate(x) if v != 0}

    def get(self, feature: int) -> float:
        return self._map.get(feature, 0.0)


class _ColumnStore:
    """Column-sorted view of a sparse sample matrix for fast split search."""

    def __init__(self, X: Sequence[SparseVector], dimension: int):
        rows_by_col: list[list[int]] = [[] for _ in range(dimension)]
        vals_by_col: list[list[float]] = [[] for _ in range(dimension)]
        for row, vector in enumerate(X):
            for index, weight in vector.entries:
                rows_by_col[index].append(row)
                vals_by_col[index].append(weight)
        self.col_rows = [np.asarray(r, dtype=np.int64) for r in rows_by_col]
        self.col_vals = [np.asarray(v, dtype=np.float64) for v in vals_by_col]
        self.n_rows = len(X)
        self.dimension = dimension

    def values_for(self, rows: np.ndarray, feature: int) -> np.ndarray:
        col_rows = self.col_rows[feature]
        if len(col_rows) == 0:
            return np.zeros(len(rows), dtype=np.float64)
        pos = np.searchsorted(col_rows, rows)
        pos = np.clip(pos, 0, len(col_rows) - 1)
        hit = col_rows[pos] == rows
        out = np.zeros(len(rows), dtype=np.float64)
        out[hit] = self.col_vals[feature][pos[hit]]
        return out


def gini(class_counts: Sequence[float]) -> float:
    """Gini impurity 1 - sum(p_i^2); at most 0.5 for two classes."""
    total = float(sum(class_counts))
    if total <= 0:
        raise DataError("gini undefined for all-zero class counts")
    if any(c < 0 for c in class_counts):
        raise DataError("negative class count")
    return 1.0 - sum((c / total) ** 2 for c in class_counts)


def _best_split(
    store: _ColumnStore,
    rows: np.ndarray,
    y: np.ndarray,
    features: np.ndarray,
) -> tuple[int, float] | None:
    """Best (feature, threshold) by Gini over the candidate features.

    Any non-trivial partition is acceptable (zero improvement included), so
    fully grown trees always reach purity when sample rows are distinct.
    Deterministic: features are scanned in the given order and strictly
    better costs win.
    """
    n = len(rows)
    best: tuple[float, int, float] | None = None
    for feature in features:
        values = store.values_for(rows, feature)
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[order]
        if sv[0] == sv[-1]:
            continue  # constant feature at this node
        boundaries = np.nonzero(sv[:-1] != sv[1:])[0]
        left_n = boundaries + 1
        left_pos = np.cumsum(sy)[boundaries]
        left_neg = left_n - left_pos
        right_n = n - left_n
        total_pos = int(sy.sum())
        right_pos = total_pos - left_pos
        right_neg = right_n - right_pos
        # weighted children impurity, scaled by n (constant per node)
        left_term = left_n - (left_pos**2 + left_neg**2) / left_n
        right_term = right_n - (right_pos**2 + right_neg**2) / right_n
        costs = left_term + right_term
        k = int(np.argmin(costs))
        cost = float(costs[k])
        if best is None or cost < best[0]:
            boundary = boundaries[k]
            threshold = (sv[boundary] + sv[boundary + 1]) / 2.0
            best = (cost, int(feature), float(threshold))
    if best is None:
        return None
    return best[1], best[2]


def train_tree(
    X: Sequence[SparseVector],
    y: Sequence[int],
    config: ForestConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    """Grow one CART tree. Recursion stops at purity, the depth limit,
    min_samples_split, or when every candidate feature is constant."""
    if len(X) != len(y):
        raise DataError(f"got {len(X)} samples but {len(y)} labels")
    if not X:
        raise DataError("cannot train a tree on zero samples")
    dims = {v.dimension for v in X}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions {sorted(dims)}")
    dimension = dims.pop()
    n_features = config.check(dimension)
    store = _ColumnStore(X, dimension)
    labels = np.asarray(y, dtype=np.int64)
    return _grow(store, labels, np.arange(len(X), dtype=np.int64), config, n_features, rng)


def _grow(
    store: _ColumnStore,
    labels: np.ndarray,
    root_rows: np.ndarray,
    config: ForestConfig,
    n_features: int,
    rng: np.random.Generator,
) -> DecisionTree:
    tree = DecisionTree()

    def make_leaf(rows: np.ndarray) -> int:
        pos = int(labels[rows].sum())
        neg = len(rows) - pos
        total = len(rows)
        node = TreeNode(
            probabilities=(neg / total, pos / total), counts=(neg, pos)
        )
        tree.nodes.append(node)
        return len(tree.nodes) - 1

    # explicit stack: work item = (rows, depth, parent index, is_left)
    pending: list[tuple[np.ndarray, int, int, bool]] = [(root_rows, 0, -1, False)]
    while pending:
        rows, depth, parent, is_left = pending.pop()
        y_node = labels[rows]
        pos = int(y_node.sum())
        pure = pos == 0 or pos == len(rows)
        depth_capped = config.max_depth is not None and depth >= config.max_depth
        split = None
        if not pure and not depth_capped and len(rows) >= config.min_samples_split:
            features = rng.permutation(store.dimension)[:n_features]
            split = _best_split(store, rows, y_node, features)
        if split is None:
            index = make_leaf(rows)
        else:
            feature, threshold = split
            node = TreeNode(feature=feature, threshold=threshold)
            tree.nodes.append(node)
            index = len(tree.nodes) - 1
            values = store.values_for(rows, feature)
            go_left = values <= threshold
            # right pushed first so the left branch is built next (stable ids)
            pending.append((rows[~go_left], depth + 1, index, False))
            pending.append((rows[go_left], depth + 1, index, True))
        if parent >= 0:
            if is_left:
                tree.nodes[parent].left = index
            else:
                tree.nodes[parent].right = index
    return tree


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """The documented per-tree randomness derivation."""
    return np.random.default_rng(np.random.SeedSequence([seed, tree_index]))


def bootstrap_indices(
    config: ForestConfig, tree_index: int, n_samples: int
) -> np.ndarray:
    """Resample indices the given tree trains on (drawn before tree growth,
    so they are reconstructable for inspection)."""
    rng = tree_rng(config.seed, tree_index)
    if config.bootstrap:
        return rng.integers(0, n_samples, size=n_samples)
    return np.arange(n_samples, dtype=np.int64)


def train_forest(
    X: Sequence[SparseVector],
    y: Sequence[int],
    config: ForestConfig,
    vocab_fingerprint: str = "",
) -> RandomForestModel:
    """Train n_trees CART trees on bootstrap resamples.

    Each tree's randomness comes only from its own derived seed, so retraining
    with the same config is byte-identical.
    """
    labels = set(y)
    if labels != {0, 1}:
        raise DataError(f"forest training needs both labels, got {sorted(labels)}")
    if len(X) != len(y):
        raise DataError(f"got {len(X)} samples but {len(y)} labels")
    dims = {v.dimension for v in X}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions {sorted(dims)}")
    dimension = dims.pop()
    n_features = config.check(dimension)
    store = _ColumnStore(X, dimension)
    all_labels = np.asarray(y, dtype=np.int64)
    trees = []
    for t in range(config.n_trees):
        rng = tree_rng(config.seed, t)
        if config.bootstrap:
            rows = rng.integers(0, len(X), size=len(X))
        else:
            rows = np.arange(len(X), dtype=np.int64)
        trees.append(_grow(store, all_labels, rows, config, n_features, rng))
    return RandomForestModel(
        trees=trees,
        config=config,
        dimension=dimension,
        vocab_fingerprint=vocab_fingerprint,
    )


def predict(
    model: RandomForestModel, x: SparseVector | Sequence[float]
) -> tuple[int, float]:
    """Majority vote: score is the fraction of trees voting misconfigured;
    the label is 1 only when the score strictly exceeds 0.5 (ties say clean).
    """
    if isinstance(x, SparseVector):
        if x.dimension != model.dimension:
            raise DataError(
                f"input dimension {x.dimension} != model dimension {model.dimension}"
            )
    elif len(x) != model.dimension:
        raise DataError(
            f"input dimension {len(x)} != model dimension {model.dimension}"
        )
    values = _DenseLookup(x)
    votes = sum(tree.vote(values) for tree in model.trees)
    score = votes / len(model.trees)
    return (1 if score > 0.5 else 0, score)


def predict_many(
    model: RandomForestModel, X: Sequence[SparseVector | Sequence[float]]
) -> list[tuple[int, float]]:
    return [predict(model, x) for x in X]


class RandomForestSmellClassifier(BaseEstimator, ClassifierMixin):
    """Estimator facade over the functional forest API."""

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int | None = None,
        min_samples_split: int = 2,
        features_per_split: int | str = "sqrt",
        bootstrap: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.features_per_split = features_per_split
        self.bootstrap = bootstrap
        self.seed = seed

    def _config(self) -> ForestConfig:
        return ForestConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            features_per_split=self.features_per_split,
            bootstrap=self.bootstrap,
            seed=self.seed,
        )

    def fit(self, X: Sequence[SparseVector], y: Sequence[int]):
        self.model_ = train_forest(X, y, self._config())
        return self

    def _check_fitted(self) -> RandomForestModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        return model

    def predict(self, X: Sequence[SparseVector]) -> list[int]:
        model = self._check_fitted()
        return [predict(model, x)[0] for x in X]

    def predict_score(self, X: Sequence[SparseVector]) -> list[float]:
        model = self._check_fitted()
        return [predict(model, x)[1] for x in X]
