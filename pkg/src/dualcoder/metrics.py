"""Multi-label evaluation: F1, AUC-ROC, and ranking quality per stratum.

All metrics operate on a dense score matrix (notes x codes) and a binary
target matrix of the same shape. Macro averages skip codes that cannot
contribute (no gold and no predictions for F1; single-class columns for
AUC). Ranking metrics skip notes with no gold codes in the evaluated
stratum and report how many were skipped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import CodeEntry, CodeStratum, Document
from .errors import DataError
from .textproc import Vocabulary

logger = logging.getLogger(__name__)


def binarize(scores: np.ndarray, threshold: float) -> np.ndarray:
    return (scores >= threshold).astype(np.int8)


@dataclass(frozen=True)
class F1Result:
    micro: float
    macro: float | None
    n_macro_codes: int  # codes with at least one gold or predicted positive


def f1_scores(targets: np.ndarray, predictions: np.ndarray) -> F1Result:
    """Micro and macro F1 over a binary prediction matrix."""
    targets = np.asarray(targets, dtype=bool)
    predictions = np.asarray(predictions, dtype=bool)
    if targets.shape != predictions.shape:
        raise DataError(f"shape mismatch {targets.shape} vs {predictions.shape}")
    tp = (targets & predictions).sum(axis=0).astype(np.float64)
    fp = (~targets & predictions).sum(axis=0).astype(np.float64)
    fn = (targets & ~predictions).sum(axis=0).astype(np.float64)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = float(2 * tp.sum() / denom) if denom > 0 else 0.0
    active = (tp + fp + fn) > 0
    if not active.any():
        return F1Result(micro=micro, macro=None, n_macro_codes=0)
    per_code = 2 * tp[active] / (2 * tp[active] + fp[active] + fn[active])
    return F1Result(micro=micro, macro=float(per_code.mean()), n_macro_codes=int(active.sum()))


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ascending 1-based ranks, ties receiving their group's mean rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    bounds = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1], True])
    ranks = np.empty(values.size, dtype=np.float64)
    for start, stop in zip(bounds[:-1], bounds[1:]):
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
    return ranks


def binary_auc(labels: np.ndarray, scores: np.ndarray) -> float | None:
    """Mann-Whitney AUC with midrank tie handling; None if single-class."""
    labels = np.asarray(labels, dtype=bool).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass(frozen=True)
class AucResult:
    micro: float | None
    macro: float | None
    n_macro_codes: int  # codes with both a positive and a negative


def auc_scores(targets: np.ndarray, scores: np.ndarray) -> AucResult:
    """Micro AUC pools all note-code pairs; macro averages per-code AUC."""
    targets = np.asarray(targets, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if targets.shape != scores.shape:
        raise DataError(f"shape mismatch {targets.shape} vs {scores.shape}")
    micro = binary_auc(targets.ravel(), scores.ravel())
    per_code = [binary_auc(targets[:, j], scores[:, j]) for j in range(targets.shape[1])]
    usable = [a for a in per_code if a is not None]
    macro = float(np.mean(usable)) if usable else None
    return AucResult(micro=micro, macro=macro, n_macro_codes=len(usable))


def rank_columns(score_row: np.ndarray) -> np.ndarray:
    """Column indices from best to worst, ties broken by lower column."""
    return np.lexsort((np.arange(score_row.size), -score_row))


@dataclass(frozen=True)
class RankingResult:
    precision_at_k: Mapping[int, float]
    r_precision: float
    mean_average_precision: float
    n_ranked: int
    n_skipped: int  # notes with no gold in the evaluated stratum


def ranking_scores(
    targets: np.ndarray, scores: np.ndarray, ks: Sequence[int] = (8, 15)
) -> RankingResult:
    """Precision@k (literal k denominator), R-precision, and MAP.

    Each metric is averaged over notes that have at least one gold code;
    the rest are skipped and counted. With fewer columns than k, the
    numerator can only cover the columns that exist while the denominator
    stays k.
    """
    targets = np.asarray(targets, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if targets.shape != scores.shape:
        raise DataError(f"shape mismatch {targets.shape} vs {scores.shape}")
    if any(k <= 0 for k in ks):
        raise DataError("ranking cutoffs must be positive")
    p_at_k: dict[int, list[float]] = {k: [] for k in ks}
    r_precisions: list[float] = []
    average_precisions: list[float] = []
    n_skipped = 0
    for i in range(targets.shape[0]):
        n_gold = int(targets[i].sum())
        if n_gold == 0:
            n_skipped += 1
            continue
        order = rank_columns(scores[i])
        hits = targets[i, order]
        for k in ks:
            p_at_k[k].append(float(hits[:k].sum()) / k)
        r_precisions.append(float(hits[:n_gold].sum()) / n_gold)
        gold_ranks = np.flatnonzero(hits) + 1  # 1-based ranks of every gold code
        precision_at_gold = np.arange(1, n_gold + 1) / gold_ranks
        average_precisions.append(float(precision_at_gold.mean()))
    n_ranked = targets.shape[0] - n_skipped
    if n_ranked == 0:
        raise DataError("no notes with gold codes to rank")
    return RankingResult(
        precision_at_k={k: float(np.mean(v)) for k, v in p_at_k.items()},
        r_precision=float(np.mean(r_precisions)),
        mean_average_precision=float(np.mean(average_precisions)),
        n_ranked=n_ranked,
        n_skipped=n_skipped,
    )


@dataclass(frozen=True)
class EvalReport:
    """All metrics for one stratum of one version's test notes."""

    stratum: str
    version: str
    n_notes: int
    n_codes: int
    threshold: float
    f1: F1Result
    auc: AucResult
    ranking: RankingResult

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "version": self.version,
            "n_notes": self.n_notes,
            "n_codes": self.n_codes,
            "threshold": self.threshold,
            "micro_f1": self.f1.micro,
            "macro_f1": self.f1.macro,
            "micro_auc": self.auc.micro,
            "macro_auc": self.auc.macro,
            "precision_at_k": {str(k): v for k, v in self.ranking.precision_at_k.items()},
            "r_precision": self.ranking.r_precision,
            "mean_average_precision": self.ranking.mean_average_precision,
            "n_ranked_notes": self.ranking.n_ranked,
            "n_notes_without_gold": self.ranking.n_skipped,
        }

    def format_text(self) -> str:
        def fmt(x: float | None) -> str:
            return "n/a" if x is None else f"{x:.4f}"

        lines = [
            f"[{self.version} {self.stratum}] {self.n_notes} notes x {self.n_codes} codes "
            f"(threshold {self.threshold:.4f})",
            f"  micro F1 {fmt(self.f1.micro)}   macro F1 {fmt(self.f1.macro)}",
            f"  micro AUC {fmt(self.auc.micro)}  macro AUC {fmt(self.auc.macro)}",
        ]
        pk = "  ".join(f"P@{k} {v:.4f}" for k, v in sorted(self.ranking.precision_at_k.items()))
        lines.append(f"  {pk}")
        lines.append(
            f"  R-precision {self.ranking.r_precision:.4f}   "
            f"MAP {self.ranking.mean_average_precision:.4f}   "
            f"ranked {self.ranking.n_ranked}/{self.n_notes}"
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class StratumSpec:
    name: str
    codes: frozenset[str] | None  # None means "all evaluated codes"


def strata_specs(stratum: CodeStratum | None) -> list[StratumSpec]:
    if stratum is None:
        return [StratumSpec("full", None)]
    return [
        StratumSpec("full", stratum.full),
        StratumSpec("frequent", stratum.frequent),
        StratumSpec("rare", stratum.rare),
    ]


def evaluate_matrix(
    probabilities: np.ndarray,
    documents: Sequence[Document],
    code_ids: Sequence[str],
    version: str,
    threshold: float,
    stratum: CodeStratum | None = None,
    ks: Sequence[int] = (8, 15),
) -> dict[str, EvalReport]:
    """Score a precomputed probability matrix against gold codes.

    `code_ids` names the matrix columns. Classification metrics use every
    note; ranking metrics use notes with gold inside the stratum.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.shape != (len(documents), len(code_ids)):
        raise DataError(
            f"probability matrix {probabilities.shape} does not match "
            f"{len(documents)} notes x {len(code_ids)} codes"
        )
    col = {code: j for j, code in enumerate(code_ids)}
    full_targets = np.zeros(probabilities.shape, dtype=bool)
    for i, doc in enumerate(documents):
        for code in doc.gold_codes:
            j = col.get(code)
            if j is None:
                raise DataError(f"gold code {code} absent from evaluated code set")
            full_targets[i, j] = True

    reports: dict[str, EvalReport] = {}
    for spec in strata_specs(stratum):
        if spec.codes is not None:
            keep = np.array([code in spec.codes for code in code_ids], dtype=bool)
            if not keep.any():
                logger.warning("stratum %s has no codes in the evaluated set, omitted", spec.name)
                continue
        else:
            keep = np.ones(len(code_ids), dtype=bool)
        t = full_targets[:, keep]
        p = probabilities[:, keep]
        if not t.any():
            logger.warning("stratum %s never occurs in these notes, omitted", spec.name)
            continue
        reports[spec.name] = EvalReport(
            stratum=spec.name,
            version=version,
            n_notes=len(documents),
            n_codes=int(keep.sum()),
            threshold=threshold,
            f1=f1_scores(t, binarize(p, threshold)),
            auc=auc_scores(t, p),
            ranking=ranking_scores(t, p, ks=ks),
        )
    return reports


def evaluate(
    model,
    vocab: Vocabulary,
    documents: Sequence[Document],
    registry: Sequence[CodeEntry],
    threshold: float = 0.5,
    stratum: CodeStratum | None = None,
    ks: Sequence[int] = (8, 15),
    note_batch: int = 64,
) -> dict[str, EvalReport]:
    """Run the model over single-version notes and score every stratum.

    The label space is the full registry for the notes' version, columns
    ordered by code id.
    """
    from .attention import predict_matrix

    if not documents:
        raise DataError("evaluate requires at least one document")
    versions = {d.version for d in documents}
    if len(versions) != 1:
        raise DataError(f"evaluate requires single-version documents, got {sorted(versions)}")
    version = next(iter(versions))
    entries = sorted(
        (e for e in registry if e.version == version), key=lambda e: e.code_id
    )
    if not entries:
        raise DataError(f"registry has no codes for version {version}")
    probabilities = predict_matrix(
        model,
        vocab,
        [d.tokens for d in documents],
        entries,
        note_batch=note_batch,
    )
    return evaluate_matrix(
        probabilities,
        documents,
        [e.code_id for e in entries],
        version,
        threshold,
        stratum=stratum,
        ks=ks,
    )
