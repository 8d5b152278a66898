"""Sequence encoders shared by the note and code sides.

Both sides use the same encoder family with separate weights: either a
one-layer 1-D convolution with tanh, or a single bidirectional GRU.
Inputs are right-padded; embeddings at PAD positions are zeroed before
encoding so padding can never leak into valid outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import ConfigError, DataError

ENCODER_KINDS = ("cnn", "rnn")


@dataclass
class EncoderConfig:
    """Architecture hyperparameters for one encoder family.

    `dropout=None` resolves to the family default: 0.2 for the CNN
    (applied to input embeddings) and 0.3 for the RNN (applied to
    encoder outputs). The RNN hidden size is per direction, so the
    bidirectional output dimension is `2 * rnn_hidden`.
    """

    kind: str = "rnn"
    embed_dim: int = 100
    cnn_filters: int = 256
    cnn_width: int = 10
    rnn_hidden: int = 512
    rnn_layers: int = 1
    bidirectional: bool = True
    dropout: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        for name in ("embed_dim", "cnn_filters", "cnn_width", "rnn_hidden", "rnn_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.dropout is None:
            self.dropout = 0.2 if self.kind == "cnn" else 0.3
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def output_dim(self) -> int:
        if self.kind == "cnn":
            return self.cnn_filters
        return self.rnn_hidden * (2 if self.bidirectional else 1)


class SequenceEncoder(nn.Module):
    """Token-level encoder producing one output vector per input position."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.drop = nn.Dropout(config.dropout)
        if config.kind == "cnn":
            self.conv = nn.Conv1d(config.embed_dim, config.cnn_filters, config.cnn_width)
            nn.init.xavier_uniform_(self.conv.weight)
            nn.init.zeros_(self.conv.bias)
        else:
            self.gru = nn.GRU(
                config.embed_dim,
                config.rnn_hidden,
                num_layers=config.rnn_layers,
                bidirectional=config.bidirectional,
                batch_first=True,
            )

    def forward(self, embedded: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """(B, T, embed_dim) + bool mask (B, T) -> (B, T, output_dim)."""
        lengths = mask.sum(dim=1)
        if (lengths == 0).any():
            raise DataError("encoder input contains an all-PAD sequence")
        x = embedded * mask.unsqueeze(-1).to(embedded.dtype)
        if self.config.kind == "cnn":
            x = self.drop(x)
            x = x * mask.unsqueeze(-1).to(x.dtype)
            # length-preserving padding: (width-1)//2 left, width//2 right
            w = self.config.cnn_width
            x = F.pad(x.transpose(1, 2), ((w - 1) // 2, w // 2))
            return torch.tanh(self.conv(x)).transpose(1, 2)
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.gru(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=mask.shape[1])
        return self.drop(out)


def masked_mean(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over valid positions: (B, T, H) + (B, T) -> (B, H)."""
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    totals = (hidden * weights).sum(dim=1)
    counts = weights.sum(dim=1).clamp(min=1.0)
    return totals / counts
