"""Text canonicalization: lowercase, punctuation filtering, single-line form.

The pipeline is lowercase -> filter_chars -> flatten. Output never contains
newlines or the filtered punctuation, and re-normalizing an output is a
no-op, so downstream tokenizers see a stable alphabet.
"""
from __future__ import annotations

from dataclasses import dataclass

from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Snippet

DEFAULT_FILTER_CHARS = ".,!"


@dataclass
class NormalizedDoc:
    """A snippet body reduced to one lowercase line."""

    source_id: str
    text: str

    @property
    def empty(self) -> bool:
        """True when nothing survived filtering (degenerate input)."""
        return self.text == ""


def lowercase(text: str) -> str:
    return text.lower()


def filter_chars(text: str | bytes, filter_set: str = DEFAULT_FILTER_CHARS) -> str:
    """Drop the configured punctuation; delete byte sequences that do not
    decode as UTF-8 rather than substituting a replacement character."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="ignore")
    return text.translate({ord(c): None for c in filter_set})


def flatten(text: str) -> str:
    """Collapse all whitespace runs (including newlines and indentation) to
    single spaces and trim the ends."""
    return " ".join(text.split())


def normalize_text(text: str | bytes, filter_set: str = DEFAULT_FILTER_CHARS) -> str:
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="ignore")
    return flatten(filter_chars(lowercase(text), filter_set))


def normalize(snippet: Snippet, filter_set: str = DEFAULT_FILTER_CHARS) -> NormalizedDoc:
    """Canonicalize one snippet; an all-filtered body yields an empty doc
    flagged via :attr:`NormalizedDoc.empty` instead of an error."""
    return NormalizedDoc(source_id=snippet.id, text=normalize_text(snippet.body, filter_set))


class TextNormalizer(BaseEstimator, TransformerMixin):
    """Stateless transformer turning snippets or raw strings into canonical
    single-line lowercase text."""

    def __init__(self, filter_set: str = DEFAULT_FILTER_CHARS):
        self.filter_set = filter_set

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[str]:
        out = []
        for item in X:
            body = item.body if isinstance(item, Snippet) else item
            out.append(normalize_text(body, self.filter_set))
        return out
