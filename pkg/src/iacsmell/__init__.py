"""iacsmell: a lab for studying security misconfigurations in IaC snippets.

Core pieces: a JSONL snippet corpus with stratified splitting and folding,
a normalization pipeline, BoW/TF-IDF featurizers, a from-scratch random
forest, ablation parsers for Ansible and Puppet, an evaluation/reporting
layer, and a cached LLM benchmarking harness.
"""

__version__ = "0.1.0"

from .corpus import DatasetManifest, Snippet, SplitSpec, kfold, load_jsonl, save_jsonl, stratified_split, validate
from .errors import ConfigError, DataError, IacsmellError
from .evaluate import BaselineModel, ConfusionMatrix, MetricsReport, PipelineSpec, confusion, cross_validate, precision_recall_f1, render_table, train_baseline
from .features import BowVectorizer, SparseVector, TfidfVectorizer, Vocabulary, bow_vectorize, build_vocab, tfidf_vectorize, tokenize
from .forest import ForestConfig, RandomForestModel, RandomForestSmellClassifier, gini, predict, train_forest, train_tree
from .normalize import NormalizedDoc, TextNormalizer, filter_chars, flatten, lowercase, normalize, normalize_text

__all__ = [
    "__version__",
    "BaselineModel",
    "BowVectorizer",
    "ConfigError",
    "ConfusionMatrix",
    "DataError",
    "DatasetManifest",
    "ForestConfig",
    "IacsmellError",
    "MetricsReport",
    "NormalizedDoc",
    "PipelineSpec",
    "RandomForestModel",
    "RandomForestSmellClassifier",
    "Snippet",
    "SparseVector",
    "SplitSpec",
    "TextNormalizer",
    "TfidfVectorizer",
    "Vocabulary",
    "bow_vectorize",
    "build_vocab",
    "confusion",
    "cross_validate",
    "filter_chars",
    "flatten",
    "gini",
    "kfold",
    "load_jsonl",
    "lowercase",
    "normalize",
    "normalize_text",
    "precision_recall_f1",
    "predict",
    "render_table",
    "save_jsonl",
    "stratified_split",
    "tfidf_vectorize",
    "tokenize",
    "train_baseline",
    "train_forest",
    "train_tree",
    "validate",
]
