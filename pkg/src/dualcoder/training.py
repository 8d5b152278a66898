"""Training loop: warmup/decay schedule, checkpointing, exact resume.

Checkpoints are plain zip archives (numpy arrays plus a JSON manifest)
holding model parameters, optimizer moments, the vocabulary, and the
torch RNG state, so a resumed run continues bit-for-bit where the saved
one stopped. Batch order is derived per epoch from (seed, epoch), never
from a stateful generator, for the same reason.
"""

from __future__ import annotations

import io
import json
import logging
import time
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .attention import DualCoder, ModelConfig, encode_code_batch, encode_note_batch, predict_matrix
from .batching import count_epoch_batches, epoch_batches
from .corpus import CodeEntry, Document
from .errors import ConfigError, DataError, NumericalError
from .textproc import Vocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


@dataclass
class TrainConfig:
    lr: float = 1e-3
    warmup_steps: int = 2000
    batch_size: int = 32
    weight_decay: float = 0.0
    epochs: int = 10
    seed: int = 0
    label_space_size: int = 8192
    grad_clip: float = 5.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    deterministic: bool = True
    eval_note_batch: int = 64

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size <= 0:
            raise ConfigError("lr and batch_size must be positive")
        if self.epochs < 0:  # 0 = save an untrained checkpoint and stop
            raise ConfigError("epochs must be >= 0")
        if self.warmup_steps < 0 or self.grad_clip <= 0 or self.label_space_size <= 0:
            raise ConfigError("warmup_steps must be >= 0; grad_clip and label space positive")
        self.betas = tuple(self.betas)  # JSON round trips tuples as lists

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def lr_factor(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup then linear decay; `step` is 1-based.

    Rises to 1.0 at the warmup boundary and falls to 0.0 at `total_steps`.
    Warmup longer than the run is truncated to the run length.
    """
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    warm = min(warmup_steps, total_steps)
    if warm > 0 and step < warm:
        return step / warm
    if total_steps == warm:
        return 1.0
    return max(0.0, (total_steps - step) / (total_steps - warm))


def bce_loss(probabilities: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy on probabilities.

    Routed through logit space for stability; probabilities are clamped
    away from {0, 1} first so the logit is finite.
    """
    if torch.isnan(probabilities).any() or torch.isnan(targets).any():
        raise NumericalError("NaN input to binary cross entropy")
    p = probabilities.clamp(1e-7, 1 - 1e-7)
    return bce_from_logits(torch.logit(p), targets)


def bce_from_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Numerically stable mean binary cross entropy on logits."""
    loss = F.binary_cross_entropy_with_logits(logits, targets)
    if not torch.isfinite(loss):
        raise NumericalError("binary cross entropy produced a non-finite value")
    return loss


def tune_threshold(targets: np.ndarray, scores: np.ndarray) -> tuple[float, float]:
    """Threshold maximizing pooled micro F1 -> (threshold, best F1).

    Scans every distinct-score cut; returns the midpoint between the last
    included and first excluded score. With no positive targets the
    threshold is 1.0 (predict nothing).
    """
    t = np.asarray(targets, dtype=bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if t.shape != s.shape:
        raise DataError(f"shape mismatch {t.shape} vs {s.shape}")
    n_pos = int(t.sum())
    if n_pos == 0:
        above_max = np.nextafter(s.max(), np.inf) if s.size else 1.0
        return float(max(1.0, above_max)), 0.0
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    cum_tp = np.cumsum(t[order])
    f1 = 2.0 * cum_tp / (np.arange(1, s.size + 1) + n_pos)
    cut_ok = np.r_[s_sorted[1:] != s_sorted[:-1], True]  # cannot cut inside a tie group
    f1 = np.where(cut_ok, f1, -1.0)
    best = int(np.argmax(f1))
    if best + 1 < s.size:
        threshold = 0.5 * (s_sorted[best] + s_sorted[best + 1])
    else:
        threshold = s_sorted[best]  # everything predicted positive
    return float(threshold), float(f1[best])


def build_optimizer(model: DualCoder, config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=config.lr,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )


def registry_index(registry: Sequence[CodeEntry]) -> dict[tuple[str, str], CodeEntry]:
    return {entry.key: entry for entry in registry}


@dataclass(frozen=True)
class ParamReport:
    total: int
    by_component: dict[str, int]

    def format_text(self) -> str:
        lines = [f"total parameters: {self.total:,}"]
        for name, count in sorted(self.by_component.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name}: {count:,}")
        return "\n".join(lines)


def count_parameters(model: DualCoder) -> ParamReport:
    by_component: dict[str, int] = {}
    for name, param in model.named_parameters():
        component = name.split(".", 1)[0]
        by_component[component] = by_component.get(component, 0) + param.numel()
    return ParamReport(total=sum(by_component.values()), by_component=by_component)


def _npy_bytes(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, array)
    return buf.getvalue()


def _npy_from(zf: zipfile.ZipFile, name: str) -> np.ndarray:
    return np.load(io.BytesIO(zf.read(name)), allow_pickle=False)


def save_checkpoint(
    path: Path | str,
    model: DualCoder,
    vocab: Vocabulary,
    train_config: TrainConfig,
    counters: dict | None = None,
    optimizer: torch.optim.AdamW | None = None,
    threshold: float | None = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_FORMAT,
        "model_config": model.config.to_dict(),
        "vocab_size": model.vocab_size,
        "vocab_hash": vocab.content_hash(),
        "train_config": train_config.to_dict(),
        "counters": counters or {},
        "threshold": threshold,
    }
    optim_steps: dict[str, float] = {}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("vocab.txt", "\n".join(vocab.id_to_token[2:]))
        for name, param in model.named_parameters():
            zf.writestr(f"params/{name}.npy", _npy_bytes(param.detach().numpy()))
        if optimizer is not None:
            for name, param in model.named_parameters():
                state = optimizer.state.get(param)
                if not state:
                    continue
                optim_steps[name] = float(state["step"])
                zf.writestr(f"optim/{name}.exp_avg.npy", _npy_bytes(state["exp_avg"].numpy()))
                zf.writestr(
                    f"optim/{name}.exp_avg_sq.npy", _npy_bytes(state["exp_avg_sq"].numpy())
                )
            zf.writestr("optim/steps.json", json.dumps(optim_steps))
        zf.writestr("rng/torch.npy", _npy_bytes(torch.get_rng_state().numpy()))
        zf.writestr("meta.json", json.dumps(meta, indent=2))


@dataclass
class CheckpointBundle:
    model: DualCoder
    vocab: Vocabulary
    train_config: dict
    counters: dict
    threshold: float | None
    _zip_path: Path

    def restore_optimizer(
        self, optimizer: torch.optim.AdamW, model: DualCoder | None = None
    ) -> None:
        """Copy saved first/second moments and step counts into `optimizer`.

        `model` must be the model whose parameters `optimizer` manages;
        optimizer state is keyed by parameter object, so restoring against
        any other model's parameters would leave the real ones stateless.
        Defaults to the bundle's own reconstructed model.
        """
        target = model if model is not None else self.model
        with zipfile.ZipFile(self._zip_path) as zf:
            names = set(zf.namelist())
            if "optim/steps.json" not in names:
                raise DataError(f"{self._zip_path} has no optimizer state to resume from")
            steps = json.loads(zf.read("optim/steps.json"))
            for name, param in target.named_parameters():
                key = f"optim/{name}.exp_avg.npy"
                if key not in names:
                    continue
                optimizer.state[param] = {
                    "step": torch.tensor(steps[name]),
                    "exp_avg": torch.from_numpy(_npy_from(zf, key)),
                    "exp_avg_sq": torch.from_numpy(_npy_from(zf, f"optim/{name}.exp_avg_sq.npy")),
                }

    def restore_rng(self) -> None:
        with zipfile.ZipFile(self._zip_path) as zf:
            torch.set_rng_state(torch.from_numpy(_npy_from(zf, "rng/torch.npy")))


def load_checkpoint(path: Path | str) -> CheckpointBundle:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != CHECKPOINT_FORMAT:
            raise DataError(
                f"checkpoint format {meta.get('format_version')} unsupported "
                f"(expected {CHECKPOINT_FORMAT})"
            )
        vocab_text = zf.read("vocab.txt").decode("utf-8")
        vocab = Vocabulary(vocab_text.split("\n") if vocab_text else [])
        if vocab.content_hash() != meta["vocab_hash"]:
            raise DataError(f"vocabulary in {path} does not match its recorded hash")
        model = DualCoder(meta["vocab_size"], ModelConfig.from_dict(meta["model_config"]))
        with torch.no_grad():
            for name, param in model.named_parameters():
                key = f"params/{name}.npy"
                try:
                    param.copy_(torch.from_numpy(_npy_from(zf, key)))
                except KeyError:
                    raise DataError(f"checkpoint missing parameter {name}") from None
    return CheckpointBundle(
        model=model,
        vocab=vocab,
        train_config=meta["train_config"],
        counters=meta["counters"],
        threshold=meta["threshold"],
        _zip_path=path,
    )


@dataclass
class TrainResult:
    epochs_run: int
    global_step: int
    epoch_losses: list[float]
    val_micro_f1: list[float | None]
    best_val_f1: float | None
    best_epoch: int | None
    threshold: float
    last_checkpoint: Path
    best_checkpoint: Path | None
    wall_time_sec: float = 0.0


def pooled_validation(
    model: DualCoder,
    vocab: Vocabulary,
    documents: Sequence[Document],
    registry: Sequence[CodeEntry],
    note_batch: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (targets, probabilities) pooled over every version present.

    Each version is scored against its own full registry; the flattened
    note x code grids are concatenated so micro statistics weigh every
    pair equally.
    """
    targets_parts: list[np.ndarray] = []
    prob_parts: list[np.ndarray] = []
    by_version: dict[str, list[Document]] = {}
    for doc in documents:
        by_version.setdefault(doc.version, []).append(doc)
    for version in sorted(by_version):
        docs = sorted(by_version[version], key=lambda d: d.doc_id)
        entries = sorted((e for e in registry if e.version == version), key=lambda e: e.code_id)
        if not entries:
            raise DataError(f"registry has no codes for version {version}")
        probs = predict_matrix(
            model, vocab, [d.tokens for d in docs], entries, note_batch=note_batch
        )
        col = {e.code_id: j for j, e in enumerate(entries)}
        t = np.zeros(probs.shape, dtype=bool)
        for i, doc in enumerate(docs):
            for code in doc.gold_codes:
                j = col.get(code)
                if j is None:
                    raise DataError(f"gold code {code} absent from version {version} registry")
                t[i, j] = True
        targets_parts.append(t.ravel())
        prob_parts.append(probs.ravel())
    return np.concatenate(targets_parts), np.concatenate(prob_parts)


def train(
    model: DualCoder,
    vocab: Vocabulary,
    train_docs: Sequence[Document],
    registry: Sequence[CodeEntry],
    config: TrainConfig,
    out_dir: Path | str,
    val_docs: Sequence[Document] = (),
    resume_from: Path | str | None = None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Run the full loop, keeping `last.ckpt` and the best-validation copy.

    Per-epoch lines (loss, validation micro F1, tuned threshold, learning
    rate) are appended to metrics.jsonl in `out_dir`. `stop_after_epoch`
    pauses the run after that (absolute) epoch without shortening the
    learning-rate horizon, leaving a checkpoint a later call can resume;
    the schedule is always laid out for the full `config.epochs`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not train_docs:
        raise DataError("train requires at least one training document")
    if stop_after_epoch is not None and stop_after_epoch < 1:
        raise ConfigError("stop_after_epoch must be >= 1")
    if config.deterministic:
        torch.set_num_threads(1)

    index = registry_index(registry)
    steps_per_epoch = count_epoch_batches(train_docs, config.batch_size)
    total_steps = steps_per_epoch * config.epochs

    start_epoch = 0
    global_step = 0
    best_val: float | None = None
    best_epoch: int | None = None
    threshold = 0.5
    epoch_losses: list[float] = []
    val_curve: list[float | None] = []

    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        if bundle.model.config.to_dict() != model.config.to_dict():
            raise ConfigError("resume checkpoint was trained with a different model config")
        if bundle.vocab.content_hash() != vocab.content_hash():
            raise DataError("resume checkpoint was trained with a different vocabulary")
        with torch.no_grad():
            for (_, dst), (_, src) in zip(
                model.named_parameters(), bundle.model.named_parameters()
            ):
                dst.copy_(src)
        counters = bundle.counters
        start_epoch = counters["epoch"]
        global_step = counters["global_step"]
        total_steps = counters["total_steps"]
        best_val = counters.get("best_val_f1")
        best_epoch = counters.get("best_epoch")
        epoch_losses = list(counters.get("epoch_losses", []))
        val_curve = list(counters.get("val_curve", []))
        threshold = bundle.threshold if bundle.threshold is not None else 0.5
        optimizer = build_optimizer(model, config)
        bundle.restore_optimizer(optimizer, model)
        bundle.restore_rng()
        logger.info("resumed from %s at epoch %d step %d", resume_from, start_epoch, global_step)
    else:
        torch.manual_seed(config.seed)
        optimizer = build_optimizer(model, config)

    last_path = out_dir / "last.ckpt"
    best_path = out_dir / "best.ckpt"
    metrics_path = out_dir / "metrics.jsonl"
    saved_any = last_path.exists()
    started = time.monotonic()
    logger.info("trainable parameters: %d", count_parameters(model).total)

    def fail_numeric(what: str) -> NumericalError:
        hint = f"; last good checkpoint: {last_path}" if saved_any else ""
        return NumericalError(f"{what} at step {global_step}{hint}")

    end_epoch = config.epochs
    if stop_after_epoch is not None:
        end_epoch = min(end_epoch, stop_after_epoch)

    if start_epoch >= end_epoch:  # nothing to run, still leave a checkpoint
        counters = {
            "epoch": start_epoch,
            "global_step": global_step,
            "total_steps": total_steps,
            "best_val_f1": best_val,
            "best_epoch": best_epoch,
            "epoch_losses": epoch_losses,
            "val_curve": val_curve,
        }
        save_checkpoint(
            last_path, model, vocab, config, counters, optimizer=optimizer, threshold=threshold
        )

    model.train()
    for epoch in range(start_epoch, end_epoch):
        rng = np.random.default_rng([config.seed, epoch])
        running = 0.0
        n_batches = 0
        for batch in epoch_batches(
            train_docs, registry, config.batch_size, config.label_space_size, rng
        ):
            global_step += 1
            current_lr = config.lr * lr_factor(global_step, total_steps, config.warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = current_lr
            note_ids = encode_note_batch(vocab, [d.tokens for d in batch.documents])
            entries = [index[(code, batch.label_space.version)] for code in batch.label_space.codes]
            code_ids = encode_code_batch(vocab, entries)
            logits = model(note_ids, code_ids)
            loss = F.binary_cross_entropy_with_logits(logits, torch.from_numpy(batch.targets))
            if not torch.isfinite(loss):
                raise fail_numeric("non-finite training loss")
            optimizer.zero_grad()
            loss.backward()
            total_norm = torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            if not torch.isfinite(total_norm):
                raise fail_numeric("non-finite gradient norm")
            if total_norm > config.grad_clip:
                logger.debug("step %d clipped gradient norm %.3f", global_step, float(total_norm))
            optimizer.step()
            running += float(loss.detach())
            n_batches += 1

        mean_loss = running / n_batches
        epoch_losses.append(mean_loss)

        val_f1: float | None = None
        if val_docs:
            model.eval()
            val_targets, val_probs = pooled_validation(
                model, vocab, val_docs, registry, note_batch=config.eval_note_batch
            )
            epoch_threshold, val_f1 = tune_threshold(val_targets, val_probs)
            model.train()
        val_curve.append(val_f1)

        counters = {
            "epoch": epoch + 1,
            "global_step": global_step,
            "total_steps": total_steps,
            "best_val_f1": best_val,
            "best_epoch": best_epoch,
            "epoch_losses": epoch_losses,
            "val_curve": val_curve,
        }
        if val_f1 is not None and (best_val is None or val_f1 > best_val):
            best_val = val_f1
            best_epoch = epoch + 1
            threshold = epoch_threshold
            counters["best_val_f1"] = best_val
            counters["best_epoch"] = best_epoch
            save_checkpoint(
                best_path, model, vocab, config, counters, optimizer=None, threshold=threshold
            )
        save_checkpoint(
            last_path, model, vocab, config, counters, optimizer=optimizer, threshold=threshold
        )
        saved_any = True

        with metrics_path.open("a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {
                        "epoch": epoch + 1,
                        "train_loss": mean_loss,
                        "val_micro_f1": val_f1,
                        "threshold": threshold if val_f1 is not None else None,
                        "lr": current_lr,
                        "global_step": global_step,
                    }
                )
                + "\n"
            )
        logger.info(
            "epoch %d/%d loss %.5f val_f1 %s",
            epoch + 1,
            config.epochs,
            mean_loss,
            "n/a" if val_f1 is None else f"{val_f1:.4f}",
        )

    wall_time = time.monotonic() - started
    logger.info("training wall time: %.1fs", wall_time)
    return TrainResult(
        epochs_run=max(0, end_epoch - start_epoch),
        global_step=global_step,
        epoch_losses=epoch_losses,
        val_micro_f1=val_curve,
        best_val_f1=best_val,
        best_epoch=best_epoch,
        threshold=threshold,
        last_checkpoint=last_path,
        best_checkpoint=best_path if best_path.exists() else None,
        wall_time_sec=wall_time,
    )
