"""Seeded two-version synthetic corpora with a long-tail code distribution.

The generator works at the level of latent concepts. Each concept owns a
small family of signal-token slots, where every slot has two
interchangeable surface forms; notes emit a random form per slot, so the
forms co-occur and land close together in pretrained embeddings. A
concept may be codable in one version or both; descriptions of the same
concept differ across versions by swapping a fraction of slots to the
alternate form. Cross-version transfer therefore has to travel through
token semantics, never through string-equal labels: shared concepts get
distinct code ids and reworded descriptions.

With a disjoint token space per version (the ablation control), every
concept emits version-prefixed tokens and fillers, cutting all lexical
overlap between versions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .attention import DualCoder, ModelConfig
from .corpus import CodeEntry, Document, compute_strata
from .errors import ConfigError, DataError
from .metrics import evaluate
from .textproc import SgnsConfig, Vocabulary, build_vocab, pretrain_embeddings, tokenize
from .training import TrainConfig, pooled_validation, train, tune_threshold

logger = logging.getLogger(__name__)

MAX_RESAMPLE_TRIES = 1000


@dataclass
class SynthConfig:
    """Knobs for corpus shape, overlap, and the ablation control.

    `shared_token_space=False` gives every version its own token
    universe (concept tokens and fillers both version-prefixed); combined
    with `overlap_fraction=0` this is the no-transfer control.
    """

    n_concepts: int = 150
    overlap_fraction: float = 0.25
    # steep enough that well over half the V2 codes land in the long
    # tail (occurring fewer than 10 times) at the default corpus size
    zipf_s: float = 1.4
    n_docs_v1: int = 600
    n_docs_v2: int = 200
    noise_rate: float = 0.3
    codes_per_note_mean: float = 14.0
    codes_per_note_std: float = 8.0
    signal_tokens_per_concept: int = 6
    description_tokens: int = 4
    rewording_fraction: float = 0.5
    n_filler_tokens: int = 200
    shared_token_space: bool = True
    split_fractions: tuple[float, float, float] = (0.73, 0.11, 0.16)
    versions: tuple[str, str] = ("V9", "V10")
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("overlap_fraction", "noise_rate", "rewording_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        for name in (
            "n_concepts",
            "n_docs_v1",
            "n_docs_v2",
            "signal_tokens_per_concept",
            "description_tokens",
            "n_filler_tokens",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.zipf_s < 0:
            raise ConfigError("zipf_s must be >= 0")
        if self.codes_per_note_mean < 1 or self.codes_per_note_std < 0:
            raise ConfigError("codes_per_note_mean must be >= 1 and std >= 0")
        if self.description_tokens > self.signal_tokens_per_concept:
            raise ConfigError("description_tokens cannot exceed signal_tokens_per_concept")
        self.split_fractions = tuple(self.split_fractions)
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise ConfigError("split_fractions must be three non-negative values")
        if self.split_fractions[0] <= 0:
            raise ConfigError("train split fraction must be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-6:
            raise ConfigError("split_fractions must sum to 1")
        self.versions = tuple(self.versions)
        if len(self.versions) != 2 or len(set(self.versions)) != 2 or not all(self.versions):
            raise ConfigError("versions must be two distinct non-empty tags")

    def to_dict(self) -> dict:
        return {
            "n_concepts": self.n_concepts,
            "overlap_fraction": self.overlap_fraction,
            "zipf_s": self.zipf_s,
            "n_docs_v1": self.n_docs_v1,
            "n_docs_v2": self.n_docs_v2,
            "noise_rate": self.noise_rate,
            "codes_per_note_mean": self.codes_per_note_mean,
            "codes_per_note_std": self.codes_per_note_std,
            "signal_tokens_per_concept": self.signal_tokens_per_concept,
            "description_tokens": self.description_tokens,
            "rewording_fraction": self.rewording_fraction,
            "n_filler_tokens": self.n_filler_tokens,
            "shared_token_space": self.shared_token_space,
            "split_fractions": list(self.split_fractions),
            "versions": list(self.versions),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ConceptSpec:
    """One latent concept: token slots, prevalence, per-version codes."""

    concept_id: int
    prevalence: float
    codes: dict  # version tag -> CodeEntry, only for codable versions
    slot_forms: dict  # version tag -> tuple of (form_a, form_b) per slot

    def code_for(self, version: str) -> CodeEntry | None:
        return self.codes.get(version)


def zipf_prevalences(n: int, s: float) -> np.ndarray:
    weights = np.arange(1, n + 1, dtype=np.float64) ** -s
    return weights / weights.sum()


def _slot_pair(concept_id: int, slot: int, version_prefix: str) -> tuple[str, str]:
    base = f"{version_prefix}c{concept_id:03d}w{slot}"
    return (base + "a", base + "b")


def _description(
    slot_forms: Sequence[tuple[str, str]], n_tokens: int, reworded_slots: frozenset[int]
) -> str:
    words = [slot_forms[j][1 if j in reworded_slots else 0] for j in range(n_tokens)]
    return " ".join(words)


def build_concepts(config: SynthConfig, rng: np.random.Generator) -> list[ConceptSpec]:
    """Assign versions, prevalences, token families, codes, descriptions."""
    v1, v2 = config.versions
    n = config.n_concepts
    prevalence = zipf_prevalences(n, config.zipf_s)

    n_shared = int(round(config.overlap_fraction * n))
    n_v1_only = (n - n_shared + 1) // 2
    assignment = rng.permutation(n)
    shared = set(assignment[:n_shared].tolist())
    v1_only = set(assignment[n_shared : n_shared + n_v1_only].tolist())

    n_reword = int(round(config.rewording_fraction * config.description_tokens))
    if config.rewording_fraction > 0:
        n_reword = max(1, n_reword)

    concepts: list[ConceptSpec] = []
    for i in range(n):
        if config.shared_token_space:
            family = tuple(
                _slot_pair(i, j, "") for j in range(config.signal_tokens_per_concept)
            )
            slot_forms = {v1: family, v2: family}
        else:
            slot_forms = {
                v: tuple(
                    _slot_pair(i, j, v.lower())
                    for j in range(config.signal_tokens_per_concept)
                )
                for v in (v1, v2)
            }
        reworded = frozenset(
            rng.choice(config.description_tokens, size=n_reword, replace=False).tolist()
            if n_reword
            else []
        )
        codable = (v1, v2) if i in shared else ((v1,) if i in v1_only else (v2,))
        codes = {}
        for version in codable:
            descr = _description(
                slot_forms[version],
                config.description_tokens,
                reworded if version == v2 else frozenset(),
            )
            codes[version] = CodeEntry(
                code_id=f"{version}-{i:04d}",
                version=version,
                description=descr,
                tokens=tuple(tokenize(descr)),
            )
        concepts.append(
            ConceptSpec(concept_id=i, prevalence=float(prevalence[i]), codes=codes, slot_forms=slot_forms)
        )
    return concepts


def _sample_note(
    config: SynthConfig,
    concepts: Sequence[ConceptSpec],
    prevalence: np.ndarray,
    version: str,
    rng: np.random.Generator,
) -> tuple[list[str], set[str], bool]:
    """One note's (tokens, gold codes, needed_resample).

    Concepts are drawn by prevalence from the full concept set; those
    without a code in `version` still emit tokens but contribute no gold.
    A draw with no codable concept at all is retried.
    """
    resampled = False
    for _ in range(MAX_RESAMPLE_TRIES):
        k = int(round(rng.normal(config.codes_per_note_mean, config.codes_per_note_std)))
        k = max(1, min(k, config.n_concepts))
        picked = rng.choice(config.n_concepts, size=k, replace=False, p=prevalence)
        gold = {
            concepts[i].codes[version].code_id
            for i in picked
            if version in concepts[i].codes
        }
        if not gold:
            resampled = True
            continue
        # Mentions stay contiguous: each concept emits its tokens as one
        # block, in shuffled slot order, mimicking how a clinical note
        # discusses one finding at a time. Block-local order is what
        # gives windowed co-occurrence its signal.
        n_signal = 0
        blocks: list[list[str]] = []
        for i in picked:
            forms = concepts[i].slot_forms[version]
            flips = rng.integers(0, 2, size=len(forms))
            block = [pair[flip] for pair, flip in zip(forms, flips)]
            rng.shuffle(block)
            blocks.append(block)
            n_signal += len(block)
        order = rng.permutation(len(blocks))
        n_fill = int(round(config.noise_rate * n_signal))
        prefix = "" if config.shared_token_space else version.lower()
        fillers = [
            f"{prefix}filler{j:03d}"
            for j in rng.integers(0, config.n_filler_tokens, size=n_fill)
        ]
        tokens: list[str] = []
        slots = rng.integers(0, len(blocks), size=n_fill)
        for pos in range(len(blocks)):
            tokens.extend(blocks[order[pos]])
            tokens.extend(f for f, s in zip(fillers, slots) if s == pos)
        return tokens, gold, resampled
    raise DataError(
        f"could not draw a note with gold codes for {version} after "
        f"{MAX_RESAMPLE_TRIES} tries; raise overlap_fraction or rebalance concepts"
    )


def _split_labels(n: int, fractions: Sequence[float], rng: np.random.Generator) -> list[str]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    order = rng.permutation(n)
    return [labels[order[i]] for i in range(n)]


def generate(config: SynthConfig) -> tuple[list[Document], list[CodeEntry]]:
    """Pure function of config: documents (both versions) and registry."""
    documents, registry, _ = generate_with_report(config)
    return documents, registry


def generate_with_report(config: SynthConfig) -> tuple[list[Document], list[CodeEntry], dict]:
    rng = np.random.default_rng(config.seed)
    concepts = build_concepts(config, rng)
    prevalence = np.array([c.prevalence for c in concepts])
    registry = sorted(
        (entry for c in concepts for entry in c.codes.values()),
        key=lambda e: (e.version, e.code_id),
    )
    v1, v2 = config.versions
    for version, n_docs in ((v1, config.n_docs_v1), (v2, config.n_docs_v2)):
        if not any(version in c.codes for c in concepts):
            raise DataError(f"no concept is codable in {version}; raise overlap_fraction")

    documents: list[Document] = []
    n_resampled = 0
    total_docs = config.n_docs_v1 + config.n_docs_v2
    for version, n_docs in ((v1, config.n_docs_v1), (v2, config.n_docs_v2)):
        drawn: list[tuple[list[str], set[str]]] = []
        for _ in range(n_docs):
            tokens, gold, resampled = _sample_note(config, concepts, prevalence, version, rng)
            n_resampled += int(resampled)
            drawn.append((tokens, gold))
        splits = _split_labels(n_docs, config.split_fractions, rng)
        for idx, ((tokens, gold), split) in enumerate(zip(drawn, splits)):
            documents.append(
                Document(
                    doc_id=f"note-{version.lower()}-{idx:05d}",
                    text=" ".join(tokens),
                    tokens=tuple(tokens),
                    gold_codes=frozenset(gold),
                    version=version,
                    split=split,
                )
            )
    if n_resampled > 0.05 * total_docs:
        raise DataError(
            f"{n_resampled}/{total_docs} documents drew empty gold sets; raise "
            "overlap_fraction, codes_per_note_mean, or n_concepts balance"
        )

    documents.sort(key=lambda d: d.doc_id)
    n_shared = sum(1 for c in concepts if len(c.codes) == 2)
    report = {
        "config": config.to_dict(),
        "n_documents": {v1: config.n_docs_v1, v2: config.n_docs_v2},
        "n_codes": {v: sum(1 for e in registry if e.version == v) for v in (v1, v2)},
        "n_shared_concepts": n_shared,
        "n_resampled_documents": n_resampled,
    }
    for version in (v1, v2):
        docs_v = [d for d in documents if d.version == version]
        codes_v = [e.code_id for e in registry if e.version == version]
        strata = compute_strata(docs_v, threshold=10, registry_codes=codes_v)
        report.setdefault("rare_code_fraction", {})[version] = len(strata.rare) / len(codes_v)
    return documents, registry, report


def _metric_triplet(report) -> dict:
    return {
        "micro_f1": report.f1.micro,
        "p_at_8": report.ranking.precision_at_k[8],
        "map": report.ranking.mean_average_precision,
    }


def _train_and_score(
    arm_name: str,
    train_docs: Sequence[Document],
    arm_registry: Sequence[CodeEntry],
    vocab: Vocabulary,
    embeddings: np.ndarray,
    v2_val: Sequence[Document],
    v2_test: Sequence[Document],
    v2_registry: Sequence[CodeEntry],
    strata,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
    workdir: Path,
) -> dict:
    torch.manual_seed(seed)
    model = DualCoder(vocab.size, model_config)
    model.load_embedding_table(embeddings)
    cfg = replace(train_config, seed=seed)
    train(
        model,
        vocab,
        train_docs,
        arm_registry,
        cfg,
        out_dir=workdir / f"{arm_name}-seed{seed}",
    )
    model.eval()
    val_targets, val_probs = pooled_validation(model, vocab, v2_val, v2_registry)
    threshold, _ = tune_threshold(val_targets, val_probs)
    reports = evaluate(model, vocab, v2_test, v2_registry, threshold=threshold, stratum=strata)
    missing = {"rare", "frequent"} - set(reports)
    if missing:
        raise DataError(
            f"strata {sorted(missing)} produced no evaluable notes; the corpus "
            "config is too small for the experiment"
        )
    return {name: _metric_triplet(reports[name]) for name in ("rare", "frequent", "full")}


def mixing_experiment(
    synth_config: SynthConfig,
    seeds: Sequence[int],
    model_config: ModelConfig,
    train_config: TrainConfig,
    sgns_config: SgnsConfig,
    workdir: Path | str,
    min_count: int = 1,
    rare_threshold: int = 10,
) -> dict:
    """Contrast training on V2 alone against training on V1+V2.

    The corpus is generated once from `synth_config`; `seeds` vary model
    initialization, batching, and dropout. Both arms are scored on the
    V2 test split, stratified by V2 code frequency, with the decision
    threshold tuned per arm on the V2 validation split. Reports per-seed
    and mean/std deltas (mixed minus V2-only) for micro F1, P@8, and MAP.
    """
    if not seeds:
        raise ConfigError("mixing_experiment needs at least one seed")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    documents, registry = generate(synth_config)
    _, v2 = synth_config.versions

    v2_docs = [d for d in documents if d.version == v2]
    v2_registry = [e for e in registry if e.version == v2]
    v2_val = [d for d in v2_docs if d.split == "val"]
    v2_test = [d for d in v2_docs if d.split == "test"]
    if not v2_val or not v2_test:
        raise DataError("V2 corpus too small to hold val and test splits")
    strata = compute_strata(
        v2_docs, threshold=rare_threshold, registry_codes=[e.code_id for e in v2_registry]
    )

    arms = {
        "v2_only": ([d for d in documents if d.version == v2 and d.split == "train"], v2_registry),
        "mixed": ([d for d in documents if d.split == "train"], registry),
    }
    prepared = {}
    for name, (train_docs, arm_registry) in arms.items():
        vocab = build_vocab(train_docs, arm_registry, min_count=min_count)
        embeddings, _ = pretrain_embeddings(train_docs, vocab, sgns_config)
        prepared[name] = (train_docs, arm_registry, vocab, embeddings)
        logger.info("arm %s: %d train docs, vocab %d", name, len(train_docs), vocab.size)

    per_seed = []
    for seed in seeds:
        row = {"seed": int(seed)}
        for name, (train_docs, arm_registry, vocab, embeddings) in prepared.items():
            row[name] = _train_and_score(
                name,
                train_docs,
                arm_registry,
                vocab,
                embeddings,
                v2_val,
                v2_test,
                v2_registry,
                strata,
                model_config,
                train_config,
                seed,
                workdir,
            )
        row["delta"] = {
            stratum: {
                metric: row["mixed"][stratum][metric] - row["v2_only"][stratum][metric]
                for metric in row["mixed"][stratum]
            }
            for stratum in row["mixed"]
        }
        logger.info("seed %d rare micro F1 delta: %+.4f", seed, row["delta"]["rare"]["micro_f1"])
        per_seed.append(row)

    strata_names = list(per_seed[0]["delta"])
    metric_names = list(per_seed[0]["delta"][strata_names[0]])
    mean_delta = {}
    std_delta = {}
    for stratum in strata_names:
        values = {m: np.array([r["delta"][stratum][m] for r in per_seed]) for m in metric_names}
        mean_delta[stratum] = {m: float(v.mean()) for m, v in values.items()}
        std_delta[stratum] = {m: float(v.std(ddof=1)) if len(v) > 1 else 0.0 for m, v in values.items()}

    return {
        "synth_config": synth_config.to_dict(),
        "seeds": [int(s) for s in seeds],
        "n_rare_codes": len(strata.rare),
        "n_frequent_codes": len(strata.frequent),
        "per_seed": per_seed,
        "mean_delta": mean_delta,
        "std_delta": std_delta,
    }
