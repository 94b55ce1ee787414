"""Confusion-matrix metrics, the cross-validation driver, and text tables.

The positive class is label 1 (misconfigured). Zero-denominator conventions:
precision is 0 when tp+fp = 0, recall is 0 when tp+fn = 0, F1 is 0 when
P+R = 0; each such fallback is logged. Cross-validation aggregates per-fold
metrics by their median.
"""
from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Sequence

from .corpus import Snippet, kfold, validate
from .errors import DataError
from .features import FEATURIZERS, Vocabulary, build_vocab, tokenize
from .forest import ForestConfig, RandomForestModel, predict, train_forest
from .normalize import DEFAULT_FILTER_CHARS, normalize_text

logger = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


def confusion(
    predictions: Sequence[tuple[str, int]], truth: Sequence[tuple[str, int]]
) -> ConfusionMatrix:
    """Count tp/fp/tn/fn over matching id sets; mismatched ids are an error
    naming the offenders."""
    pred_map = dict(predictions)
    truth_map = dict(truth)
    if len(pred_map) != len(predictions):
        raise DataError("duplicate ids among predictions")
    if len(truth_map) != len(truth):
        raise DataError("duplicate ids among truth labels")
    missing = sorted(set(truth_map) - set(pred_map))
    extra = sorted(set(pred_map) - set(truth_map))
    if missing or extra:
        raise DataError(
            f"id mismatch: missing predictions for {missing}, unexpected {extra}"
        )
    matrix = ConfusionMatrix()
    for snippet_id, actual in truth_map.items():
        predicted = pred_map[snippet_id]
        if actual not in (0, 1) or predicted not in (0, 1):
            raise DataError(f"{snippet_id}: labels must be 0 or 1")
        if predicted == 1 and actual == 1:
            matrix.tp += 1
        elif predicted == 1 and actual == 0:
            matrix.fp += 1
        elif predicted == 0 and actual == 0:
            matrix.tn += 1
        else:
            matrix.fn += 1
    return matrix


def precision_recall_f1(matrix: ConfusionMatrix) -> tuple[float, float, float]:
    if matrix.tp + matrix.fp > 0:
        precision = matrix.tp / (matrix.tp + matrix.fp)
    else:
        logger.warning("no positive predictions; precision set to 0 by convention")
        precision = 0.0
    if matrix.tp + matrix.fn > 0:
        recall = matrix.tp / (matrix.tp + matrix.fn)
    else:
        logger.warning("no positive ground truth; recall set to 0 by convention")
        recall = 0.0
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return precision, recall, f1


@dataclass
class FoldResult:
    fold: int
    matrix: ConfusionMatrix | None
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    failed: bool = False
    error: str = ""

    def to_json(self) -> dict:
        return {
            "fold": self.fold,
            "matrix": self.matrix.to_json() if self.matrix else None,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    matrix: ConfusionMatrix
    per_fold: list[FoldResult] | None = None
    aggregation: str = "single"  # "single" | "median" | "mean"
    provenance: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_matrix(
        cls, matrix: ConfusionMatrix, provenance: dict | None = None
    ) -> "MetricsReport":
        p, r, f1 = precision_recall_f1(matrix)
        return cls(
            precision=p,
            recall=r,
            f1=f1,
            matrix=matrix,
            provenance=provenance or {},
        )

    @classmethod
    def aggregate(
        cls,
        folds: Sequence[FoldResult],
        how: str = "median",
        provenance: dict | None = None,
        warnings: list[str] | None = None,
    ) -> "MetricsReport":
        """Combine per-fold metrics; the matrix field pools raw counts while
        precision/recall/f1 are the per-metric median (or mean)."""
        usable = [f for f in folds if not f.failed]
        if not usable:
            raise DataError("all folds failed; nothing to aggregate")
        agg = statistics.median if how == "median" else statistics.fmean
        pooled = ConfusionMatrix()
        for f in usable:
            pooled = pooled + f.matrix
        return cls(
            precision=float(agg([f.precision for f in usable])),
            recall=float(agg([f.recall for f in usable])),
            f1=float(agg([f.f1 for f in usable])),
            matrix=pooled,
            per_fold=list(folds),
            aggregation=how,
            provenance=provenance or {},
            warnings=list(warnings or []),
        )

    def to_json(self) -> dict:
        return {
            "format": "iacsmell-report/1",
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matrix": self.matrix.to_json(),
            "per_fold": [f.to_json() for f in self.per_fold] if self.per_fold else None,
            "aggregation": self.aggregation,
            "provenance": self.provenance,
            "warnings": self.warnings,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "MetricsReport":
        per_fold = None
        if payload.get("per_fold"):
            per_fold = [
                FoldResult(
                    fold=f["fold"],
                    matrix=ConfusionMatrix(**f["matrix"]) if f["matrix"] else None,
                    precision=f["precision"],
                    recall=f["recall"],
                    f1=f["f1"],
                    failed=f["failed"],
                    error=f.get("error", ""),
                )
                for f in payload["per_fold"]
            ]
        return cls(
            precision=payload["precision"],
            recall=payload["recall"],
            f1=payload["f1"],
            matrix=ConfusionMatrix(**payload["matrix"]),
            per_fold=per_fold,
            aggregation=payload.get("aggregation", "single"),
            provenance=payload.get("provenance", {}),
            warnings=payload.get("warnings", []),
        )


@dataclass
class PipelineSpec:
    """A baseline run: featurizer choice plus forest settings."""

    featurizer: str = "tfidf"
    forest: ForestConfig = field(default_factory=ForestConfig)
    min_df: int = 1
    filter_set: str = DEFAULT_FILTER_CHARS

    def check(self) -> None:
        if self.featurizer not in FEATURIZERS:
            raise DataError(
                f"unknown featurizer {self.featurizer!r}; expected one of "
                f"{sorted(FEATURIZERS)}"
            )

    def to_json(self) -> dict:
        return {
            "featurizer": self.featurizer,
            "forest": self.forest.to_json(),
            "min_df": self.min_df,
            "filter_set": self.filter_set,
        }


def _run_fold(
    pipeline: PipelineSpec,
    train: Sequence[Snippet],
    holdout: Sequence[Snippet],
) -> ConfusionMatrix:
    train_docs = [normalize_text(s.body, pipeline.filter_set) for s in train]
    holdout_docs = [normalize_text(s.body, pipeline.filter_set) for s in holdout]
    vocab = build_vocab([tokenize(d) for d in train_docs], pipeline.min_df)
    vectorizer = FEATURIZERS[pipeline.featurizer](min_df=pipeline.min_df)
    vectorizer.vocabulary_ = vocab
    X_train = vectorizer.transform(train_docs)
    X_hold = vectorizer.transform(holdout_docs)
    model = train_forest(
        X_train,
        [s.label for s in train],
        pipeline.forest,
        vocab_fingerprint=vocab.fingerprint(),
    )
    predictions = [
        (s.id, predict(model, x)[0]) for s, x in zip(holdout, X_hold)
    ]
    truth = [(s.id, s.label) for s in holdout]
    return confusion(predictions, truth)


def cross_validate(
    pipeline: PipelineSpec,
    dataset: Sequence[Snippet],
    k: int = 8,
    seed: int = 0,
) -> MetricsReport:
    """k-fold evaluation of a featurizer+forest pipeline with median
    aggregation. A failing fold is recorded and skipped with a warning."""
    pipeline.check()
    folds = kfold(dataset, k=k, seed=seed)
    results: list[FoldResult] = []
    warnings: list[str] = []
    for i, (train, holdout) in enumerate(folds):
        try:
            matrix = _run_fold(pipeline, train, holdout)
            p, r, f1 = precision_recall_f1(matrix)
            results.append(
                FoldResult(fold=i, matrix=matrix, precision=p, recall=r, f1=f1)
            )
        except Exception as exc:  # fold failure must not sink the run
            message = f"fold {i} failed: {exc}"
            logger.warning(message)
            warnings.append(message)
            results.append(FoldResult(fold=i, matrix=None, failed=True, error=str(exc)))
    manifest = validate(dataset).manifest.to_json()
    provenance = {
        "pipeline": pipeline.to_json(),
        "k": k,
        "seed": seed,
        "dataset_manifest": manifest,
    }
    return MetricsReport.aggregate(
        results, how="median", provenance=provenance, warnings=warnings
    )


@dataclass
class BaselineModel:
    """Deployable baseline artifact: featurizer choice, its vocabulary, and
    the trained forest, bundled so predictions are reproducible later."""

    featurizer: str
    vocab: Vocabulary
    forest: RandomForestModel
    min_df: int = 1
    filter_set: str = DEFAULT_FILTER_CHARS

    def to_json(self) -> dict:
        return {
            "format": "iacsmell-model/1",
            "featurizer": self.featurizer,
            "min_df": self.min_df,
            "filter_set": self.filter_set,
            "vocab": self.vocab.to_json(),
            "forest": self.forest.to_json(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "BaselineModel":
        if payload.get("format") != "iacsmell-model/1":
            raise DataError(f"unsupported model format {payload.get('format')!r}")
        return cls(
            featurizer=payload["featurizer"],
            vocab=Vocabulary.from_json(payload["vocab"]),
            forest=RandomForestModel.from_json(payload["forest"]),
            min_df=payload.get("min_df", 1),
            filter_set=payload.get("filter_set", DEFAULT_FILTER_CHARS),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "BaselineModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def _vectorize(self, snippets: Sequence[Snippet]):
        vectorizer = FEATURIZERS[self.featurizer](min_df=self.min_df)
        vectorizer.vocabulary_ = self.vocab
        docs = [normalize_text(s.body, self.filter_set) for s in snippets]
        return vectorizer.transform(docs)

    def predict(self, snippets: Sequence[Snippet]) -> list[dict]:
        """Prediction records in the interchange schema
        {id, predicted_label, score}."""
        out = []
        for snippet, x in zip(snippets, self._vectorize(snippets)):
            label, score = predict(self.forest, x)
            out.append({"id": snippet.id, "predicted_label": label, "score": score})
        return out


def train_baseline(dataset: Sequence[Snippet], pipeline: PipelineSpec) -> BaselineModel:
    """Fit the featurizer and forest of a pipeline on a whole dataset."""
    pipeline.check()
    docs = [normalize_text(s.body, pipeline.filter_set) for s in dataset]
    vocab = build_vocab([tokenize(d) for d in docs], pipeline.min_df)
    vectorizer = FEATURIZERS[pipeline.featurizer](min_df=pipeline.min_df)
    vectorizer.vocabulary_ = vocab
    X = vectorizer.transform(docs)
    forest_model = train_forest(
        X, [s.label for s in dataset], pipeline.forest,
        vocab_fingerprint=vocab.fingerprint(),
    )
    return BaselineModel(
        featurizer=pipeline.featurizer,
        vocab=vocab,
        forest=forest_model,
        min_df=pipeline.min_df,
        filter_set=pipeline.filter_set,
    )


def load_predictions(path: str | Path) -> list[tuple[str, int]]:
    """Read a predictions JSONL file ({id, predicted_label, score?} records)
    into (id, label) pairs, validating the schema."""
    path = Path(path)
    pairs: list[tuple[str, int]] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if "id" not in record or "predicted_label" not in record:
                raise DataError(
                    f"{path}:{lineno}: prediction records need id and predicted_label"
                )
            label = record["predicted_label"]
            if label not in (0, 1):
                raise DataError(f"{path}:{lineno}: predicted_label must be 0 or 1")
            pairs.append((str(record["id"]), label))
    return pairs


def save_predictions(records: Sequence[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _round2(value: float) -> str:
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


METRIC_ROWS = ("Precision", "Recall", "F1-score")


def render_table(
    reports: Sequence[tuple[str, MetricsReport]],
    layout: str = "metrics-rows",
) -> str:
    """Aligned plain-text table of P/R/F1 for a set of named reports.

    layout "metrics-rows" puts one metric per row and one model per column;
    "models-rows" puts one model per row. Values are rounded half-even to
    two decimals; column order follows input order.
    """
    if layout not in ("metrics-rows", "models-rows"):
        raise DataError(f"unknown table layout {layout!r}")
    if layout == "metrics-rows":
        header = ["Metric"] + [name for name, _ in reports]
        rows = []
        if reports:
            for label, attr in zip(METRIC_ROWS, ("precision", "recall", "f1")):
                rows.append([label] + [_round2(getattr(r, attr)) for _, r in reports])
    else:
        header = ["Model", "Precision", "Recall", "F1-score"]
        rows = [
            [name, _round2(r.precision), _round2(r.recall), _round2(r.f1)]
            for name, r in reports
        ]
    widths = [
        max(len(str(cell)) for cell in column)
        for column in zip(header, *rows)
    ] if rows else [len(h) for h in header]
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
