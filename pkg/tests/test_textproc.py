"""Tokenization, vocabulary construction, and embedding pretraining."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_code, make_doc

from dualcoder.errors import DataError
from dualcoder.textproc import (
    PAD_ID,
    UNK_ID,
    SgnsConfig,
    Vocabulary,
    align_embeddings,
    build_vocab,
    init_embeddings,
    load_embeddings,
    pretrain_embeddings,
    save_embeddings,
    tokenize,
)


def test_tokenize_examples():
    assert tokenize("Acute MI, type 2") == ["acute", "mi", "type", "2"]
    assert tokenize("") == []
    assert tokenize("  ...  ") == []
    assert tokenize("A1c=7.2%") == ["a1c", "7", "2"]


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=60))
def test_tokenize_idempotent_and_clean(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens
    for token in tokens:
        assert token == token.lower()
        assert token.isalnum()


def test_vocabulary_round_trip():
    vocab = Vocabulary(["fever", "cough", "x2"])
    assert vocab.size == 5
    ids = vocab.encode(["cough", "fever", "unknownword"])
    assert ids.tolist() == [vocab.token_to_id["cough"], vocab.token_to_id["fever"], UNK_ID]
    assert vocab.decode([0, 1]) == ["<pad>", "<unk>"]
    assert "fever" in vocab and "zzz" not in vocab
    assert len(vocab) == 5


def test_vocabulary_rejects_bad_tokens():
    with pytest.raises(DataError):
        Vocabulary(["<pad>"])
    with pytest.raises(DataError):
        Vocabulary(["a", "a"])


def test_content_hash_tracks_content():
    a = Vocabulary(["x", "y"])
    b = Vocabulary(["x", "y"])
    c = Vocabulary(["y", "x"])
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()


def test_build_vocab_counts_and_registry():
    docs = [
        make_doc("a", "fever fever fever cough", {"C1"}),
        make_doc("b", "cough cough", {"C1"}, split="val"),  # val text not counted
    ]
    registry = [make_code("C1", "rare disorder")]
    vocab = build_vocab(docs, registry, min_count=2)
    assert "fever" in vocab
    assert "cough" not in vocab  # one train occurrence only
    assert "rare" not in vocab  # registry counted once, below min_count
    vocab_all = build_vocab(docs, registry, min_count=1)
    assert {"fever", "cough", "rare", "disorder"} <= set(vocab_all.id_to_token)
    # deterministic ordering: count desc, then token asc
    assert vocab_all.id_to_token[2] == "fever"


def test_init_embeddings_scale_and_pad():
    rng = np.random.default_rng(0)
    table = init_embeddings(50, 16, rng)
    assert table.shape == (50, 16)
    assert (table[PAD_ID] == 0.0).all()
    assert np.abs(table).max() <= 0.5 / 16


def sgns_corpus():
    """Toy text with block co-occurrence structure worth learning."""
    rng = np.random.default_rng(5)
    families = [[f"f{i}w{j}" for j in range(4)] for i in range(6)]
    docs = []
    for i in range(30):
        toks: list[str] = []
        for _ in range(6):
            block = list(families[rng.integers(0, 6)])
            rng.shuffle(block)
            toks.extend(block)
        docs.append(make_doc(f"d{i}", " ".join(toks), {"C1"}))
    registry = [make_code("C1", "something")]
    return docs, build_vocab(docs, registry, min_count=1)


def test_pretrain_embeddings_loss_and_determinism():
    docs, vocab = sgns_corpus()
    config = SgnsConfig(dim=16, epochs=3, seed=1)
    table1, losses1 = pretrain_embeddings(docs, vocab, config)
    table2, losses2 = pretrain_embeddings(docs, vocab, config)
    assert np.array_equal(table1, table2)
    assert losses1 == losses2
    assert table1.shape == (vocab.size, 16)
    assert (table1[PAD_ID] == 0.0).all()
    assert len(losses1) == 3
    for earlier, later in zip(losses1, losses1[1:]):
        assert later <= earlier + 1e-6


def test_pretrain_embeddings_requires_training_text():
    registry = [make_code("C1", "x")]
    docs = [make_doc("a", "one two", {"C1"}, split="test")]
    vocab = build_vocab(docs, registry, min_count=1)
    with pytest.raises(DataError):
        pretrain_embeddings(docs, vocab, SgnsConfig(dim=4))


def test_save_load_embeddings_round_trip(tmp_path):
    docs, vocab = sgns_corpus()
    rng = np.random.default_rng(2)
    table = init_embeddings(vocab.size, 8, rng)
    path = tmp_path / "emb.txt"
    save_embeddings(path, vocab, table)
    tokens, loaded = load_embeddings(path)
    assert tokens == list(vocab.id_to_token)
    np.testing.assert_allclose(loaded, table, atol=1e-6)
    with pytest.raises(DataError):
        save_embeddings(path, vocab, table[:-1])
    with pytest.raises(DataError):
        load_embeddings(tmp_path / "missing.txt")


def test_load_embeddings_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("3\n")
    with pytest.raises(DataError):
        load_embeddings(bad)
    bad.write_text("1 2\ntok 0.5\n")
    with pytest.raises(DataError):
        load_embeddings(bad)


def test_align_embeddings_mapping_and_coverage():
    vocab = Vocabulary(["alpha", "beta", "gamma"])
    file_tokens = ["<pad>", "<unk>", "beta", "alpha", "other"]
    table = np.arange(5 * 4, dtype=np.float32).reshape(5, 4)
    aligned = align_embeddings(vocab, file_tokens, table, seed=0)
    np.testing.assert_array_equal(aligned[vocab.token_to_id["alpha"]], table[3])
    np.testing.assert_array_equal(aligned[vocab.token_to_id["beta"]], table[2])
    assert (aligned[PAD_ID] == 0.0).all()
    # gamma missing -> fresh small init
    assert np.abs(aligned[vocab.token_to_id["gamma"]]).max() <= 0.5 / 4
    with pytest.raises(DataError):
        align_embeddings(vocab, ["unrelated"], table[:1], seed=0)
