"""Dual label-wise attention between encoded notes and encoded codes.

Codes are represented purely by their encoded descriptions, so the model
carries no per-label parameters: any code set, from any code-system
version, can be scored by the same weights. Per attention head, scores
are tanh(h_code @ W_code) @ tanh(W_note @ H_note), softmaxed over note
tokens; the attended note summaries of all heads are concatenated and a
single shared affine map plus sigmoid produces the per-code probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from .corpus import CodeEntry
from .encoders import EncoderConfig, SequenceEncoder, masked_mean
from .errors import ConfigError, DataError
from .textproc import PAD_ID, Vocabulary

MASK_FILL = -1e9  # additive surrogate for -inf before the token softmax


@dataclass
class ModelConfig:
    """Full model shape: encoder family, head count, embedding width."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    heads: int = 1

    def __post_init__(self) -> None:
        if self.heads <= 0:
            raise ConfigError("heads must be positive")

    @property
    def shared_dim(self) -> int:
        # note, code, and projection dimensions are tied
        return self.encoder.output_dim

    def to_dict(self) -> dict:
        return {
            "heads": self.heads,
            "encoder": {
                "kind": self.encoder.kind,
                "embed_dim": self.encoder.embed_dim,
                "cnn_filters": self.encoder.cnn_filters,
                "cnn_width": self.encoder.cnn_width,
                "rnn_hidden": self.encoder.rnn_hidden,
                "rnn_layers": self.encoder.rnn_layers,
                "bidirectional": self.encoder.bidirectional,
                "dropout": self.encoder.dropout,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(encoder=EncoderConfig(**data["encoder"]), heads=data["heads"])


class DualCoder(nn.Module):
    """Dual-encoder label-wise attention model over token-id inputs."""

    def __init__(self, vocab_size: int, config: ModelConfig):
        super().__init__()
        if vocab_size < 2:
            raise ConfigError("vocab_size must include PAD and UNK")
        self.config = config
        self.vocab_size = vocab_size
        d = config.shared_dim
        self.embedding = nn.Embedding(vocab_size, config.encoder.embed_dim, padding_idx=PAD_ID)
        self.note_encoder = SequenceEncoder(config.encoder)
        self.code_encoder = SequenceEncoder(config.encoder)
        self.w_note = nn.Parameter(torch.empty(config.heads, d, d))
        self.w_code = nn.Parameter(torch.empty(config.heads, d, d))
        for head in range(config.heads):
            nn.init.xavier_uniform_(self.w_note[head])
            nn.init.xavier_uniform_(self.w_code[head])
        self.classifier = nn.Linear(config.heads * d, 1)

    def load_embedding_table(self, table: np.ndarray, standardize: bool = True) -> None:
        """Copy a pretrained table into the shared embedding.

        Skip-gram tables come out orders of magnitude smaller than the
        unit-variance init the tanh layers downstream were sized for, so
        by default the whole table is rescaled by one scalar to unit RMS
        over the word rows. Directions are untouched.
        """
        if table.shape != tuple(self.embedding.weight.shape):
            raise DataError(
                f"embedding table shape {table.shape} does not match model "
                f"{tuple(self.embedding.weight.shape)}"
            )
        table = np.ascontiguousarray(table, dtype=np.float32)
        if standardize:
            rms = float(np.sqrt(np.mean(np.square(table[2:], dtype=np.float64))))
            if rms < 1e-12:
                raise DataError("embedding table is all zeros")
            table = table / rms
        with torch.no_grad():
            self.embedding.weight.copy_(torch.from_numpy(table))
            self.embedding.weight[PAD_ID].zero_()

    def encode_notes(self, note_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(N, T) ids -> token-level features (N, T, d) and validity mask."""
        mask = note_ids != PAD_ID
        hidden = self.note_encoder(self.embedding(note_ids), mask)
        return hidden, mask

    def encode_codes(self, code_ids: torch.Tensor) -> torch.Tensor:
        """(L, Tc) description ids -> pooled code vectors (L, d)."""
        mask = code_ids != PAD_ID
        if (mask.sum(dim=1) == 0).any():
            raise DataError("code with empty description token sequence")
        hidden = self.code_encoder(self.embedding(code_ids), mask)
        return masked_mean(hidden, mask)

    def attend(
        self,
        h_note: torch.Tensor,
        code_vecs: torch.Tensor,
        mask: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-head attention and concatenated per-code note summaries.

        h_note (N, T, d), code_vecs (L, d), mask (N, T) ->
        attention (N, M, L, T) and summaries (N, L, M*d).
        """
        if not mask.any(dim=1).all():
            raise DataError("attention requires at least one valid token per note")
        proj_note = torch.tanh(torch.einsum("msd,ntd->nmts", self.w_note, h_note))
        proj_code = torch.tanh(code_vecs @ self.w_code)  # (M, L, s)
        scores = torch.einsum("mls,nmts->nmlt", proj_code, proj_note)
        scores = scores.masked_fill(~mask[:, None, None, :], MASK_FILL)
        attn = torch.softmax(scores, dim=-1)
        attn = attn * mask[:, None, None, :].to(attn.dtype)  # exact zeros on PAD
        summaries = torch.einsum("nmlt,ntd->nmld", attn, h_note)
        n, m, l, d = summaries.shape
        return attn, summaries.permute(0, 2, 1, 3).reshape(n, l, m * d)

    def classify(self, summaries: torch.Tensor) -> torch.Tensor:
        """Shared affine map over every code's summary -> logits (N, L)."""
        if summaries.shape[-1] != self.classifier.in_features:
            raise ConfigError(
                f"summary width {summaries.shape[-1]} != classifier input "
                f"{self.classifier.in_features}"
            )
        return self.classifier(summaries).squeeze(-1)

    def forward(self, note_ids: torch.Tensor, code_ids: torch.Tensor) -> torch.Tensor:
        """Token ids (N, T) and (L, Tc) -> logits (N, L)."""
        h_note, mask = self.encode_notes(note_ids)
        code_vecs = self.encode_codes(code_ids)
        _, summaries = self.attend(h_note, code_vecs, mask)
        return self.classify(summaries)


def pad_token_ids(sequences: Sequence[np.ndarray], min_len: int = 1) -> torch.Tensor:
    """Right-pad id sequences with PAD into one (N, T) int64 tensor."""
    width = max(min_len, max((int(s.size) for s in sequences), default=min_len))
    out = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    for i, seq in enumerate(sequences):
        out[i, : seq.size] = seq
    return torch.from_numpy(out)


def encode_code_batch(vocab: Vocabulary, entries: Sequence[CodeEntry]) -> torch.Tensor:
    return pad_token_ids([vocab.encode(e.tokens) for e in entries])


def encode_note_batch(vocab: Vocabulary, token_seqs: Sequence[Sequence[str]]) -> torch.Tensor:
    return pad_token_ids([vocab.encode(toks) for toks in token_seqs])


@torch.no_grad()
def predict_matrix(
    model: DualCoder,
    vocab: Vocabulary,
    note_token_seqs: Sequence[Sequence[str]],
    code_entries: Sequence[CodeEntry],
    note_batch: int = 64,
    code_chunk: int = 8192,
) -> np.ndarray:
    """Probability matrix (N, C) in eval mode, chunked over notes and codes.

    The forward pass decomposes over the label axis, so scoring a large
    code set in `code_chunk`-sized slices and concatenating the columns
    changes nothing beyond float rounding.
    """
    if not code_entries:
        raise DataError("predict_matrix requires at least one code")
    if not note_token_seqs:
        raise DataError("predict_matrix requires at least one note")
    was_training = model.training
    model.eval()
    try:
        code_id_chunks = [
            encode_code_batch(vocab, code_entries[i : i + code_chunk])
            for i in range(0, len(code_entries), code_chunk)
        ]
        rows: list[np.ndarray] = []
        for i in range(0, len(note_token_seqs), note_batch):
            note_ids = encode_note_batch(vocab, note_token_seqs[i : i + note_batch])
            cols = [torch.sigmoid(model(note_ids, chunk)) for chunk in code_id_chunks]
            rows.append(torch.cat(cols, dim=1).numpy())
        return np.concatenate(rows, axis=0)
    finally:
        if was_training:
            model.train()
