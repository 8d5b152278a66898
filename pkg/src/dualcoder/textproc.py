"""Tokenization, vocabulary, and word-embedding pretraining.

Notes and code descriptions share one vocabulary and one 100-dimensional
embedding table. Embeddings are pretrained with skip-gram negative
sampling over the training-split note texts; tokens that never occur
there (e.g. description-only tokens) keep their random unit-scale
initialization. Row 0 (PAD) is always the zero vector.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DataError

if TYPE_CHECKING:
    from .corpus import CodeEntry, Document

_TOKEN_RE = re.compile(r"[a-z0-9]+")

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric word tokens; digits preserved."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bijective token<->id map with reserved PAD=0 and UNK=1."""

    def __init__(self, tokens: Sequence[str]):
        for special in (PAD_TOKEN, UNK_TOKEN):
            if special in tokens:
                raise DataError(f"reserved token {special!r} cannot appear in the vocabulary")
        if len(set(tokens)) != len(tokens):
            raise DataError("vocabulary tokens must be unique")
        self.id_to_token: tuple[str, ...] = (PAD_TOKEN, UNK_TOKEN, *tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.token_to_id.get(t, UNK_ID) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def content_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.id_to_token).encode("utf-8"))
        return digest.hexdigest()

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __len__(self) -> int:
        return self.size


def build_vocab(
    documents: Iterable["Document"],
    registry: Iterable["CodeEntry"],
    min_count: int = 3,
) -> Vocabulary:
    """Count tokens over train-split notes plus all code descriptions.

    Tokens below min_count map to UNK. Ordering is (count desc, token
    asc) so the same inputs always produce the same vocabulary.
    """
    counts: Counter[str] = Counter()
    for doc in documents:
        if doc.split == "train":
            counts.update(doc.tokens)
    for entry in registry:
        counts.update(entry.tokens)
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


@dataclass
class SgnsConfig:
    """Skip-gram-with-negative-sampling hyperparameters."""

    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 1
    lr: float = 0.025
    min_lr: float = 1e-4
    noise_power: float = 0.75
    seed: int = 0


def init_embeddings(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-scale uniform init in (-0.5/dim, 0.5/dim); PAD row zeroed."""
    table = (rng.random((vocab_size, dim), dtype=np.float64) - 0.5) / dim
    table[PAD_ID] = 0.0
    return table.astype(np.float32)


def pretrain_embeddings(
    documents: Iterable["Document"],
    vocab: Vocabulary,
    config: SgnsConfig | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Train skip-gram embeddings on training-split note texts.

    Returns the input-vector table (float32, PAD row zero) and the mean
    negative-sampling loss per epoch. Single-threaded and fully
    determined by the seed.
    """
    config = config or SgnsConfig()
    rng = np.random.default_rng(config.seed)
    sequences = [vocab.encode(doc.tokens) for doc in documents if doc.split == "train"]
    sequences = [s for s in sequences if s.size > 1]
    if not sequences:
        raise DataError("embedding pretraining requires non-empty training documents")

    counts = np.zeros(vocab.size, dtype=np.float64)
    for seq in sequences:
        np.add.at(counts, seq, 1.0)
    counts[PAD_ID] = 0.0
    noise = counts**config.noise_power
    if noise.sum() == 0:
        raise DataError("no countable tokens in training documents")
    noise /= noise.sum()

    w_in = init_embeddings(vocab.size, config.dim, rng).astype(np.float64)
    w_out = np.zeros((vocab.size, config.dim), dtype=np.float64)

    total_steps = config.epochs * sum(int(s.size) for s in sequences)
    step = 0
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        loss_sum = 0.0
        loss_n = 0
        for seq in sequences:
            n = seq.size
            for i in range(n):
                frac = step / max(total_steps, 1)
                lr = max(config.min_lr, config.lr * (1.0 - frac))
                step += 1
                b = int(rng.integers(1, config.window + 1))
                lo, hi = max(0, i - b), min(n, i + b + 1)
                context = np.concatenate([seq[lo:i], seq[i + 1 : hi]])
                if context.size == 0:
                    continue
                center = int(seq[i])
                negs = rng.choice(vocab.size, size=config.negatives * context.size, p=noise)
                # one positive row per context token, `negatives` noise rows each
                targets = np.concatenate([context, negs])
                labels = np.zeros(targets.size, dtype=np.float64)
                labels[: context.size] = 1.0
                vecs = w_out[targets]  # (k, dim)
                scores = vecs @ w_in[center]
                probs = 1.0 / (1.0 + np.exp(-scores))
                loss_sum += float(
                    -(
                        np.log(np.clip(probs[: context.size], 1e-12, None)).sum()
                        + np.log(np.clip(1.0 - probs[context.size :], 1e-12, None)).sum()
                    )
                )
                loss_n += targets.size
                grad = probs - labels  # d loss / d score
                grad_center = grad @ vecs
                np.add.at(w_out, targets, -lr * np.outer(grad, w_in[center]))
                w_in[center] -= lr * grad_center
        epoch_losses.append(loss_sum / max(loss_n, 1))

    w_in[PAD_ID] = 0.0
    return w_in.astype(np.float32), epoch_losses


def save_embeddings(path: str | Path, vocab: Vocabulary, table: np.ndarray) -> None:
    """Text format: first line `<vocab_size> <dim>`, then `token v1 ... vD`."""
    if table.shape[0] != vocab.size:
        raise DataError(f"table rows {table.shape[0]} != vocab size {vocab.size}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{vocab.size} {table.shape[1]}\n")
        for token, row in zip(vocab.id_to_token, table):
            fh.write(token + " " + " ".join(f"{v:.8g}" for v in row) + "\n")


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}:1: expected `<vocab_size> <dim>` header")
        n, dim = int(header[0]), int(header[1])
        tokens: list[str] = []
        rows = np.zeros((n, dim), dtype=np.float32)
        for lineno in range(n):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise DataError(f"{path}:{lineno + 2}: expected token plus {dim} values")
            tokens.append(parts[0])
            rows[lineno] = np.array(parts[1:], dtype=np.float32)
    return tokens, rows


def align_embeddings(
    vocab: Vocabulary,
    tokens: Sequence[str],
    table: np.ndarray,
    seed: int = 0,
    min_coverage: float = 0.5,
) -> np.ndarray:
    """Map a loaded embedding table onto `vocab` order.

    Vocabulary tokens missing from the file get a fresh unit-scale init;
    coverage below `min_coverage` of the non-special vocabulary is
    treated as a wrong-file mistake and rejected.
    """
    rng = np.random.default_rng(seed)
    out = init_embeddings(vocab.size, table.shape[1], rng)
    index = {t: i for i, t in enumerate(tokens)}
    hits = 0
    for vid, token in enumerate(vocab.id_to_token):
        row = index.get(token)
        if row is not None:
            out[vid] = table[row]
            if vid > UNK_ID:
                hits += 1
    real = vocab.size - 2
    if real > 0 and hits / real < min_coverage:
        raise DataError(
            f"embedding file covers only {hits}/{real} vocabulary tokens; "
            "it was probably built from a different corpus"
        )
    out[PAD_ID] = 0.0
    return out
