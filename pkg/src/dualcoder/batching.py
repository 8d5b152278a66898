"""Version-pure batches over a dynamic, per-batch label space.

Each batch draws its label space fresh: the union of the batch's gold
codes (deduplicated) plus uniform negatives sampled without replacement
from the rest of that version's registry, padded to a fixed size. Batches
never mix versions, but batch order within an epoch is globally shuffled
so optimization interleaves versions.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .corpus import CodeEntry, Document
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelSpace:
    """Code ids scored by one batch, all from a single version."""

    codes: tuple[str, ...]
    version: str
    pos_count: int
    neg_count: int

    def __len__(self) -> int:
        return len(self.codes)


@dataclass(frozen=True)
class Batch:
    documents: tuple[Document, ...]
    label_space: LabelSpace
    targets: np.ndarray  # float32 (len(documents), len(label_space))


def build_label_space(
    documents: Sequence[Document],
    version_codes: Sequence[str],
    size: int,
    rng: np.random.Generator,
) -> LabelSpace:
    """Batch gold codes plus uniform negatives from the version pool."""
    versions = {d.version for d in documents}
    if len(versions) != 1:
        raise DataError(f"batch mixes versions {sorted(versions)}")
    version = next(iter(versions))
    positives = sorted(set().union(*(d.gold_codes for d in documents)))
    if len(positives) > size:
        raise DataError(
            f"batch has {len(positives)} distinct gold codes but the label "
            f"space holds {size}; raise label_space_size or shrink the batch"
        )
    pool = sorted(set(version_codes) - set(positives))
    missing = set().union(*(d.gold_codes for d in documents)) - set(version_codes)
    if missing:
        raise DataError(f"gold codes missing from version pool: {sorted(missing)[:5]}")
    n_neg = size - len(positives)
    if n_neg > len(pool):
        warnings.warn(
            f"version {version} has only {len(positives) + len(pool)} codes; "
            f"shrinking label space from {size}",
            stacklevel=2,
        )
        n_neg = len(pool)
    negatives = [pool[i] for i in rng.choice(len(pool), size=n_neg, replace=False)] if n_neg else []
    codes = np.array(positives + negatives, dtype=object)
    rng.shuffle(codes)
    return LabelSpace(
        codes=tuple(codes.tolist()),
        version=version,
        pos_count=len(positives),
        neg_count=n_neg,
    )


def make_targets(documents: Sequence[Document], label_space: LabelSpace) -> np.ndarray:
    """Multi-hot float32 matrix aligned with the label space columns."""
    col = {code: j for j, code in enumerate(label_space.codes)}
    targets = np.zeros((len(documents), len(label_space)), dtype=np.float32)
    for i, doc in enumerate(documents):
        for code in doc.gold_codes:
            j = col.get(code)
            if j is not None:
                targets[i, j] = 1.0
    return targets


def _version_pools(registry: Sequence[CodeEntry]) -> dict[str, list[str]]:
    pools: dict[str, list[str]] = {}
    for entry in registry:
        pools.setdefault(entry.version, []).append(entry.code_id)
    return {v: sorted(codes) for v, codes in pools.items()}


def epoch_batches(
    documents: Sequence[Document],
    registry: Sequence[CodeEntry],
    batch_size: int,
    label_space_size: int,
    rng: np.random.Generator,
) -> Iterator[Batch]:
    """Shuffled version-pure batches covering every document exactly once.

    Documents are shuffled within each version and chunked (the trailing
    partial chunk is kept), then the combined chunk order is shuffled so
    versions interleave. Label spaces are sampled lazily as batches are
    consumed, all from the generator passed in, so one seeded generator
    reproduces an epoch exactly.
    """
    if batch_size <= 0:
        raise ConfigError("batch_size must be positive")
    if label_space_size <= 0:
        raise ConfigError("label_space_size must be positive")
    if not documents:
        raise DataError("epoch_batches requires at least one document")
    pools = _version_pools(registry)
    by_version: dict[str, list[Document]] = {}
    for doc in documents:
        if doc.version not in pools:
            raise DataError(f"document {doc.doc_id} has version {doc.version} absent from registry")
        by_version.setdefault(doc.version, []).append(doc)

    chunks: list[tuple[Document, ...]] = []
    for version in sorted(by_version):
        docs = sorted(by_version[version], key=lambda d: d.doc_id)
        order = rng.permutation(len(docs))
        shuffled = [docs[i] for i in order]
        for start in range(0, len(shuffled), batch_size):
            chunks.append(tuple(shuffled[start : start + batch_size]))
    rng.shuffle(chunks)

    for chunk in chunks:
        version = chunk[0].version
        space = build_label_space(chunk, pools[version], label_space_size, rng)
        yield Batch(documents=chunk, label_space=space, targets=make_targets(chunk, space))


def count_epoch_batches(documents: Sequence[Document], batch_size: int) -> int:
    by_version: dict[str, int] = {}
    for doc in documents:
        by_version[doc.version] = by_version.get(doc.version, 0) + 1
    return sum(-(-n // batch_size) for n in by_version.values())
