"""Compact transformer encoder with a two-class sequence head.

The two families share the architecture; the long-context one just defaults
to a larger maximum sequence length. Checkpoints are plain state dicts plus
the config that built them, so reloads are exact.
"""
from __future__ import annotations

import torch
from torch import nn

from .config import TrainConfig


class SequenceClassifier(nn.Module):
    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(
            config.vocab_buckets, config.embed_dim, padding_idx=0
        )
        self.position_embedding = nn.Embedding(config.max_seq_len, config.embed_dim)
        layer = nn.TransformerEncoderLayer(
            d_model=config.embed_dim,
            nhead=config.n_heads,
            dim_feedforward=config.ff_dim,
            dropout=0.0,
            batch_first=True,
        )
        # the nested-tensor fast path is prototype-stage and can change
        # numerics between runs; keep the reference path for reproducibility
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.n_layers, enable_nested_tensor=False
        )
        self.head = nn.Linear(config.embed_dim, 2)

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        hidden = self.token_embedding(token_ids) + self.position_embedding(positions)
        padding_mask = token_ids == 0
        encoded = self.encoder(hidden, src_key_padding_mask=padding_mask)
        return self.head(encoded[:, 0])  # classify from the leading CLS position


def build_model(config: TrainConfig) -> SequenceClassifier:
    torch.manual_seed(config.seed)
    return SequenceClassifier(config)
