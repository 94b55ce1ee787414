"""Whitespace tokenization and BoW / TF-IDF vectorization.

TF-IDF uses the smoothed inverse document frequency
``idf(t) = ln((1 + N) / (1 + df(t))) + 1`` and L2-normalizes each vector.
Both weightings produce :class:`SparseVector` values over a shared
:class:`Vocabulary`.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError
from .normalize import NormalizedDoc


@dataclass(frozen=True)
class SparseVector:
    """Sorted sparse representation: strictly increasing indices, no stored
    zeros."""

    dimension: int
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        last = -1
        for index, weight in self.entries:
            if not 0 <= index < self.dimension:
                raise DataError(f"index {index} outside [0, {self.dimension})")
            if index <= last:
                raise DataError("sparse indices must be strictly increasing")
            if weight == 0:
                raise DataError("explicit zero weight in sparse vector")
            last = index

    def to_dense(self) -> list[float]:
        dense = [0.0] * self.dimension
        for index, weight in self.entries:
            dense[index] = weight
        return dense

    def norm(self) -> float:
        return math.sqrt(sum(w * w for _, w in self.entries))


@dataclass
class Vocabulary:
    """Token inventory with document frequencies.

    Indices are dense and assigned in first-seen corpus order; tokens below
    ``min_df`` are excluded.
    """

    token_to_index: dict[str, int]
    doc_freq: dict[str, int]
    corpus_size: int
    min_df: int = 1

    def __len__(self) -> int:
        return len(self.token_to_index)

    def idf(self, token: str) -> float:
        df = self.doc_freq[token]
        return math.log((1 + self.corpus_size) / (1 + df)) + 1.0

    def to_json(self) -> dict:
        return {
            "format": "iacsmell-vocab/1",
            "corpus_size": self.corpus_size,
            "min_df": self.min_df,
            "tokens": [
                {"token": t, "index": i, "df": self.doc_freq[t]}
                for t, i in sorted(self.token_to_index.items(), key=lambda kv: kv[1])
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Vocabulary":
        if payload.get("format") != "iacsmell-vocab/1":
            raise DataError(f"unsupported vocabulary format {payload.get('format')!r}")
        token_to_index = {row["token"]: row["index"] for row in payload["tokens"]}
        doc_freq = {row["token"]: row["df"] for row in payload["tokens"]}
        return cls(
            token_to_index=token_to_index,
            doc_freq=doc_freq,
            corpus_size=payload["corpus_size"],
            min_df=payload.get("min_df", 1),
        )

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(canonical).hexdigest()


def tokenize(doc: NormalizedDoc | str) -> list[str]:
    """Split normalized text on whitespace, dropping empty tokens."""
    text = doc.text if isinstance(doc, NormalizedDoc) else doc
    return text.split()


def build_vocab(corpus: Sequence[Sequence[str]], min_df: int = 1) -> Vocabulary:
    """Collect tokens with document frequency >= min_df, indexed in
    first-seen order. df counts distinct documents, not occurrences."""
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    doc_freq: Counter[str] = Counter()
    first_seen: dict[str, None] = {}
    for tokens in corpus:
        for token in tokens:
            if token not in first_seen:
                first_seen[token] = None
        doc_freq.update(set(tokens))
    kept = {t: None for t in first_seen if doc_freq[t] >= min_df}
    if not kept:
        raise DataError(f"no token reaches min_df={min_df}")
    token_to_index = {t: i for i, t in enumerate(kept)}
    return Vocabulary(
        token_to_index=token_to_index,
        doc_freq={t: doc_freq[t] for t in kept},
        corpus_size=len(corpus),
        min_df=min_df,
    )


def bow_vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    """Raw in-document counts; out-of-vocabulary tokens are ignored."""
    counts: Counter[int] = Counter()
    for token in tokens:
        index = vocab.token_to_index.get(token)
        if index is not None:
            counts[index] += 1
    entries = tuple((i, float(c)) for i, c in sorted(counts.items()))
    return SparseVector(dimension=len(vocab), entries=entries)


def tfidf_vectorize(tokens: Sequence[str], vocab: Vocabulary) -> SparseVector:
    """tf * idf with smoothed idf, L2-normalized unless the vector is zero."""
    counts: Counter[str] = Counter(t for t in tokens if t in vocab.token_to_index)
    weighted = {
        vocab.token_to_index[t]: c * vocab.idf(t) for t, c in counts.items()
    }
    norm = math.sqrt(sum(w * w for w in weighted.values()))
    if norm > 0:
        weighted = {i: w / norm for i, w in weighted.items()}
    entries = tuple((i, w) for i, w in sorted(weighted.items()) if w != 0)
    return SparseVector(dimension=len(vocab), entries=entries)


class _VectorizerBase(BaseEstimator, TransformerMixin):
    """Shared fit logic: tokenizes documents and learns a Vocabulary."""

    def __init__(self, min_df: int = 1):
        self.min_df = min_df

    def fit(self, X: Iterable[NormalizedDoc | str], y=None):
        self.vocabulary_ = build_vocab([tokenize(doc) for doc in X], self.min_df)
        return self

    def _check_fitted(self) -> Vocabulary:
        vocab = getattr(self, "vocabulary_", None)
        if vocab is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        return vocab


class BowVectorizer(_VectorizerBase):
    """Bag-of-words counts over a learned vocabulary."""

    def transform(self, X: Iterable[NormalizedDoc | str]) -> list[SparseVector]:
        vocab = self._check_fitted()
        return [bow_vectorize(tokenize(doc), vocab) for doc in X]


class TfidfVectorizer(_VectorizerBase):
    """L2-normalized tf-idf over a learned vocabulary."""

    def transform(self, X: Iterable[NormalizedDoc | str]) -> list[SparseVector]:
        vocab = self._check_fitted()
        return [tfidf_vectorize(tokenize(doc), vocab) for doc in X]


FEATURIZERS = {"bow": BowVectorizer, "tfidf": TfidfVectorizer}
