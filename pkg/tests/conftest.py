"""Shared fixtures: a tiny handmade corpus and micro model configs."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from dualcoder.attention import DualCoder, ModelConfig
from dualcoder.corpus import CodeEntry, Document
from dualcoder.encoders import EncoderConfig
from dualcoder.textproc import Vocabulary, tokenize


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def make_doc(doc_id, text, gold, version="V9", split="train"):
    return Document(
        doc_id=doc_id,
        text=text,
        tokens=tuple(tokenize(text)),
        gold_codes=frozenset(gold),
        version=version,
        split=split,
    )


def make_code(code_id, description, version="V9"):
    return CodeEntry(
        code_id=code_id,
        version=version,
        description=description,
        tokens=tuple(tokenize(description)),
    )


@pytest.fixture
def tiny_registry():
    return [
        make_code("V9-0", "acute kidney failure"),
        make_code("V9-1", "chronic heart disease"),
        make_code("V9-2", "fracture of left femur"),
        make_code("V10-0", "acute renal failure unspecified", version="V10"),
        make_code("V10-1", "chronic ischemic heart disease", version="V10"),
    ]


@pytest.fixture
def tiny_docs():
    return [
        make_doc("n-00", "patient with acute kidney failure and fever", {"V9-0"}),
        make_doc("n-01", "chronic heart disease noted on admission", {"V9-1"}),
        make_doc("n-02", "left femur fracture after a fall", {"V9-2", "V9-0"}),
        make_doc("n-03", "acute renal failure workup", {"V10-0"}, version="V10"),
        make_doc("n-04", "ischemic heart disease chronic stable", {"V10-1"}, version="V10", split="test"),
    ]


@pytest.fixture
def tiny_vocab(tiny_docs, tiny_registry):
    tokens = sorted({t for d in tiny_docs for t in d.tokens} | {t for e in tiny_registry for t in e.tokens})
    return Vocabulary(tokens)


def micro_config(kind: str, heads: int = 2) -> ModelConfig:
    return ModelConfig(
        encoder=EncoderConfig(
            kind=kind,
            embed_dim=8,
            cnn_filters=8,
            cnn_width=3,
            rnn_hidden=8,
            dropout=0.0,
        ),
        heads=heads,
    )


def micro_instance(kind: str, seed: int = 0, heads: int = 2, vocab_size: int = 20):
    """Seeded micro model plus a small ids/targets problem instance."""
    torch.manual_seed(seed)
    model = DualCoder(vocab_size, micro_config(kind, heads=heads))
    rng = np.random.default_rng(seed)
    note_ids = np.zeros((2, 5), dtype=np.int64)
    note_lengths = [5, 3]
    for i, length in enumerate(note_lengths):
        note_ids[i, :length] = rng.integers(2, vocab_size, size=length)
    code_ids = np.zeros((4, 3), dtype=np.int64)
    code_lengths = [3, 2, 1, 3]
    for i, length in enumerate(code_lengths):
        code_ids[i, :length] = rng.integers(2, vocab_size, size=length)
    targets = rng.integers(0, 2, size=(2, 4)).astype(np.float64)
    return model, note_ids, code_ids, targets
