"""Corpus and code-registry domain model.

Datasets are line-delimited JSON records (one note per line) with an
adjacent tab-separated code-description registry:

corpus.jsonl:  {"doc_id": str, "text": str, "codes": [str],
                "version": "V9"|"V10", "split": "train"|"val"|"test"}
codes.tsv:     version<TAB>code_id<TAB>description

Version tags are free-form short strings; "V9" and "V10" are the
conventional values for ICD-9/ICD-10 style code sets, but any tag is
accepted so that registries for unseen code systems can be scored.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .textproc import tokenize

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class CodeEntry:
    """One code: opaque id, version tag, and its textual description."""

    code_id: str
    version: str
    description: str
    tokens: tuple[str, ...]

    @property
    def key(self) -> tuple[str, str]:
        return (self.code_id, self.version)


@dataclass(frozen=True)
class Document:
    """A note with its gold code set. All gold codes share `version`."""

    doc_id: str
    text: str
    tokens: tuple[str, ...]
    gold_codes: frozenset[str]
    version: str
    split: str


@dataclass(frozen=True)
class CodeStratum:
    """Frequency-based partition of one corpus's code set.

    `frequent` holds codes occurring at least `threshold` times across
    all splits of the corpus, `rare` the rest. Codes present in a
    registry but never occurring count as rare only when passed in via
    `registry_codes` at construction.
    """

    frequent: frozenset[str]
    rare: frozenset[str]
    threshold: int
    counts: Mapping[str, int] = field(repr=False)

    @property
    def full(self) -> frozenset[str]:
        return self.frequent | self.rare

    def codes_for(self, which: str) -> frozenset[str]:
        if which == "frequent":
            return self.frequent
        if which == "rare":
            return self.rare
        if which == "full":
            return self.full
        raise ValueError(f"unknown stratum {which!r}; expected frequent|rare|full")


@dataclass
class CorpusSchema:
    """Field limits and registry location for dataset loading."""

    max_note_tokens: int = 4000
    max_code_tokens: int = 48
    registry_path: str | Path | None = None  # default: codes.tsv next to the corpus


def load_registry(path: str | Path, max_code_tokens: int = 48) -> list[CodeEntry]:
    """Read a codes.tsv registry, sorted by (version, code_id)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"registry file not found: {path}")
    entries: dict[tuple[str, str], CodeEntry] = {}
    empty_desc: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected version<TAB>code<TAB>description")
            version, code_id, description = parts
            if not version or not code_id:
                raise DataError(f"{path}:{lineno}: empty version or code id")
            tokens = tuple(tokenize(description)[:max_code_tokens])
            if not tokens:
                empty_desc.append(f"{code_id} ({version})")
                continue
            entry = CodeEntry(code_id=code_id, version=version, description=description, tokens=tokens)
            if entry.key in entries:
                raise DataError(f"{path}:{lineno}: duplicate code {code_id} for version {version}")
            entries[entry.key] = entry
    if empty_desc:
        raise DataError(
            "codes with empty description after tokenization: " + ", ".join(sorted(empty_desc))
        )
    return sorted(entries.values(), key=lambda e: (e.version, e.code_id))


def load_corpus(
    path: str | Path,
    schema: CorpusSchema | None = None,
) -> tuple[list[Document], list[CodeEntry]]:
    """Load a corpus.jsonl plus its registry.

    Every referenced code must have a registry entry under the
    document's version; violations are a hard error naming the codes.
    Documents come back sorted by doc_id.
    """
    schema = schema or CorpusSchema()
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    registry_path = Path(schema.registry_path) if schema.registry_path else path.parent / "codes.tsv"
    registry = load_registry(registry_path, max_code_tokens=schema.max_code_tokens)
    known = {entry.key for entry in registry}

    documents: dict[str, Document] = {}
    missing: set[tuple[str, str]] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            try:
                doc = _record_to_document(record, schema)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if doc.doc_id in documents:
                raise DataError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
            for code in doc.gold_codes:
                if (code, doc.version) not in known:
                    missing.add((code, doc.version))
            documents[doc.doc_id] = doc
    if missing:
        listing = ", ".join(f"{c} ({v})" for c, v in sorted(missing))
        raise DataError(f"codes referenced but missing from registry: {listing}")
    return sorted(documents.values(), key=lambda d: d.doc_id), registry


def _record_to_document(record: object, schema: CorpusSchema) -> Document:
    if not isinstance(record, dict):
        raise DataError("record is not a JSON object")
    for key in ("doc_id", "text", "codes", "version", "split"):
        if key not in record:
            raise DataError(f"missing field {key!r}")
    doc_id, text = str(record["doc_id"]), str(record["text"])
    version, split = str(record["version"]), str(record["split"])
    if split not in SPLITS:
        raise DataError(f"split must be one of {SPLITS}, got {split!r}")
    if not version:
        raise DataError("empty version tag")
    codes = record["codes"]
    if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
        raise DataError("codes must be a list of strings")
    gold = frozenset(codes)
    if split == "train" and not gold:
        raise DataError(f"training document {doc_id!r} has no gold codes")
    tokens = tuple(tokenize(text)[: schema.max_note_tokens])
    return Document(doc_id=doc_id, text=text, tokens=tokens, gold_codes=gold, version=version, split=split)


def save_corpus(
    documents: Iterable[Document],
    registry: Iterable[CodeEntry],
    corpus_path: str | Path,
    registry_path: str | Path | None = None,
) -> None:
    """Write corpus.jsonl and codes.tsv; inverse of load_corpus."""
    corpus_path = Path(corpus_path)
    registry_path = Path(registry_path) if registry_path else corpus_path.parent / "codes.tsv"
    corpus_path.parent.mkdir(parents=True, exist_ok=True)
    with corpus_path.open("w", encoding="utf-8") as fh:
        for doc in sorted(documents, key=lambda d: d.doc_id):
            record = {
                "doc_id": doc.doc_id,
                "text": doc.text,
                "codes": sorted(doc.gold_codes),
                "version": doc.version,
                "split": doc.split,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    with Path(registry_path).open("w", encoding="utf-8") as fh:
        for entry in sorted(registry, key=lambda e: (e.version, e.code_id)):
            if "\t" in entry.description or "\n" in entry.description:
                raise DataError(f"description of {entry.code_id} contains tab or newline")
            fh.write(f"{entry.version}\t{entry.code_id}\t{entry.description}\n")


def code_occurrence_counts(documents: Iterable[Document]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for doc in documents:
        counts.update(doc.gold_codes)
    return counts


def compute_strata(
    documents: Sequence[Document],
    threshold: int = 10,
    registry_codes: Iterable[str] | None = None,
) -> CodeStratum:
    """Partition codes into frequent (count >= threshold) and rare.

    Counts run over all splits of one corpus; mixing versions here would
    conflate code ids, so it is rejected. `registry_codes` optionally
    adds never-occurring codes, which land in the rare set.
    """
    if not documents:
        raise DataError("cannot compute strata over an empty document list")
    versions = {doc.version for doc in documents}
    if len(versions) > 1:
        raise DataError(f"strata must be computed per version, got {sorted(versions)}")
    counts = code_occurrence_counts(documents)
    full = set(counts)
    if registry_codes is not None:
        full.update(registry_codes)
    frequent = frozenset(c for c in full if counts.get(c, 0) >= threshold)
    rare = frozenset(full - frequent)
    return CodeStratum(frequent=frequent, rare=rare, threshold=threshold, counts=dict(counts))


@dataclass(frozen=True)
class StratumStats:
    """Codes-per-note summary after restricting gold sets to a stratum."""

    n_notes: int
    n_notes_with_code: int
    median: float
    iqr: tuple[float, float]
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {
            "n_notes": self.n_notes,
            "n_notes_with_code": self.n_notes_with_code,
            "median": self.median,
            "iqr": list(self.iqr),
            "mean": self.mean,
            "std": self.std,
        }


def stratum_stats(documents: Sequence[Document], stratum_codes: Iterable[str]) -> StratumStats:
    """Per-note code-count statistics within one stratum.

    Notes whose gold set becomes empty after restriction are excluded
    from the statistics but still counted in `n_notes`.
    """
    if not documents:
        raise DataError("cannot compute statistics over an empty document list")
    stratum = frozenset(stratum_codes)
    per_note = [len(doc.gold_codes & stratum) for doc in documents]
    nonzero = np.array([n for n in per_note if n > 0], dtype=np.float64)
    if nonzero.size == 0:
        return StratumStats(len(per_note), 0, 0.0, (0.0, 0.0), 0.0, 0.0)
    q25, q75 = np.percentile(nonzero, [25, 75])
    return StratumStats(
        n_notes=len(per_note),
        n_notes_with_code=int(nonzero.size),
        median=float(np.median(nonzero)),
        iqr=(float(q25), float(q75)),
        mean=float(nonzero.mean()),
        std=float(nonzero.std()),
    )
