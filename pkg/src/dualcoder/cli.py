"""Command line pipeline: generate, pretrain-embeddings, train, evaluate,
predict, mixing-experiment, params.

Configuration is layered: built-in defaults, then `--preset`, then a
JSON `--config` file, then explicit flags. The fully resolved
configuration is written next to every artifact the commands produce.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .attention import DualCoder, ModelConfig, predict_matrix
from .corpus import CodeEntry, CorpusSchema, Document, compute_strata, load_corpus, load_registry, save_corpus
from .encoders import EncoderConfig
from .errors import ConfigError, DataError, DualcoderError, NumericalError
from .metrics import evaluate, rank_columns
from .presets import BENCHMARK_VOCAB_SIZE, preset, resolve_weight_decay
from .synth import SynthConfig, generate_with_report, mixing_experiment
from .textproc import (
    SgnsConfig,
    align_embeddings,
    build_vocab,
    load_embeddings,
    pretrain_embeddings,
    save_embeddings,
    tokenize,
)
from .training import (
    TrainConfig,
    count_parameters,
    load_checkpoint,
    pooled_validation,
    train,
    tune_threshold,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse reports usage problems as exit code 2; remap to 1."""

    def error(self, message: str):  # noqa: D102 - argparse override
        raise ConfigError(message)


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _config_file_section(path: str | None, command: str) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: config file must hold a JSON object")
    section = data.get(command, data)
    if not isinstance(section, dict):
        raise ConfigError(f"{p}: section {command!r} must be a JSON object")
    return section


def _set_path(tree: dict, dotted: str, value) -> None:
    node = tree
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _explicit_tree(args: argparse.Namespace, flag_map: dict[str, str]) -> dict:
    tree: dict = {}
    for attr, dotted in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            _set_path(tree, dotted, value)
    return tree


def _resolve(command: str, args: argparse.Namespace, flag_map: dict[str, str], defaults: dict) -> dict:
    layers = [defaults]
    if getattr(args, "preset", None):
        layers.append(preset(args.preset))
    layers.append(_config_file_section(getattr(args, "config", None), command))
    layers.append(_explicit_tree(args, flag_map))
    merged: dict = {}
    for layer in layers:
        merged = _deep_merge(merged, layer)
    return merged


def _only_fields(d: dict, cls) -> dict:
    names = {f for f in cls.__dataclass_fields__}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} options: {sorted(unknown)}")
    return d


def _model_config(merged: dict) -> ModelConfig:
    section = merged.get("model", {})
    encoder = EncoderConfig(**_only_fields(section.get("encoder", {}), EncoderConfig))
    return ModelConfig(encoder=encoder, heads=section.get("heads", 1))


def _train_config(merged: dict, preset_name: str | None, encoder_kind: str) -> TrainConfig:
    section = dict(merged.get("train", {}))
    section.setdefault("weight_decay", resolve_weight_decay(preset_name, encoder_kind))
    return TrainConfig(**_only_fields(section, TrainConfig))


def _sgns_config(merged: dict, embed_dim: int) -> SgnsConfig:
    section = dict(merged.get("sgns", {}))
    section["dim"] = embed_dim
    section.setdefault("seed", merged.get("train", {}).get("seed", 0))
    return SgnsConfig(**_only_fields(section, SgnsConfig))


def _synth_config(merged: dict) -> SynthConfig:
    section = dict(merged.get("synth", {}))
    for key in ("split_fractions", "versions"):
        if key in section:
            section[key] = tuple(section[key])
    return SynthConfig(**_only_fields(section, SynthConfig))


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def load_sources(paths: Sequence[str | Path], schema: CorpusSchema | None = None) -> tuple[list[Document], list[CodeEntry]]:
    """Load and merge several corpus files; registries must agree."""
    if not paths:
        raise ConfigError("at least one corpus file is required")
    documents: dict[str, Document] = {}
    registry: dict[tuple[str, str], CodeEntry] = {}
    for path in paths:
        docs, entries = load_corpus(path, schema)
        for doc in docs:
            if doc.doc_id in documents:
                raise DataError(f"doc_id {doc.doc_id!r} appears in more than one source")
            documents[doc.doc_id] = doc
        for entry in entries:
            seen = registry.get(entry.key)
            if seen is not None and seen.description != entry.description:
                raise DataError(
                    f"code {entry.code_id} ({entry.version}) has conflicting "
                    "descriptions across registries"
                )
            registry[entry.key] = entry
    docs_out = sorted(documents.values(), key=lambda d: d.doc_id)
    registry_out = sorted(registry.values(), key=lambda e: (e.version, e.code_id))
    return docs_out, registry_out


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- generate

GENERATE_FLAGS = {
    "seed": "synth.seed",
    "n_concepts": "synth.n_concepts",
    "overlap_fraction": "synth.overlap_fraction",
    "zipf_s": "synth.zipf_s",
    "n_docs_v1": "synth.n_docs_v1",
    "n_docs_v2": "synth.n_docs_v2",
    "noise_rate": "synth.noise_rate",
    "codes_per_note_mean": "synth.codes_per_note_mean",
    "codes_per_note_std": "synth.codes_per_note_std",
    "rewording_fraction": "synth.rewording_fraction",
    "disjoint_token_space": "synth._disjoint",
}


def cmd_generate(args: argparse.Namespace) -> int:
    merged = _resolve("generate", args, GENERATE_FLAGS, {"synth": {}})
    if merged["synth"].pop("_disjoint", False):
        merged["synth"]["shared_token_space"] = False
    config = _synth_config(merged)
    documents, registry, report = generate_with_report(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for version in config.versions:
        docs_v = [d for d in documents if d.version == version]
        corpus_path = out / f"corpus_{version.lower()}.jsonl"
        save_corpus(docs_v, registry, corpus_path, registry_path=out / "codes.tsv")
        paths[version] = corpus_path
    _write_json(out / "generation.json", report)
    for version, path in paths.items():
        rare = report["rare_code_fraction"][version]
        print(
            f"{path}: {report['n_documents'][version]} notes, "
            f"{report['n_codes'][version]} codes, rare fraction {rare:.2f}"
        )
    print(f"{out / 'codes.tsv'}: registry for {' and '.join(config.versions)}")
    return 0


# ---------------------------------------------------- pretrain-embeddings

PRETRAIN_FLAGS = {
    "dim": "sgns.dim",
    "window": "sgns.window",
    "negatives": "sgns.negatives",
    "epochs": "sgns.epochs",
    "lr": "sgns.lr",
    "seed": "sgns.seed",
    "min_count": "vocab_min_count",
}


def cmd_pretrain_embeddings(args: argparse.Namespace) -> int:
    merged = _resolve("pretrain-embeddings", args, PRETRAIN_FLAGS, {"sgns": {}, "vocab_min_count": 3})
    documents, registry = load_sources(_split_list(args.sources))
    vocab = build_vocab(documents, registry, min_count=merged["vocab_min_count"])
    config = SgnsConfig(**_only_fields(merged["sgns"], SgnsConfig))
    table, losses = pretrain_embeddings(documents, vocab, config)
    save_embeddings(args.out, vocab, table)
    print(
        f"{args.out}: {vocab.size} tokens x {config.dim} dims, "
        f"final epoch loss {losses[-1]:.4f}"
    )
    return 0


# -------------------------------------------------------------------- train

TRAIN_FLAGS = {
    "encoder": "model.encoder.kind",
    "heads": "model.heads",
    "embed_dim": "model.encoder.embed_dim",
    "cnn_filters": "model.encoder.cnn_filters",
    "cnn_width": "model.encoder.cnn_width",
    "rnn_hidden": "model.encoder.rnn_hidden",
    "dropout": "model.encoder.dropout",
    "lr": "train.lr",
    "warmup_steps": "train.warmup_steps",
    "batch_size": "train.batch_size",
    "epochs": "train.epochs",
    "label_space_size": "train.label_space_size",
    "weight_decay": "train.weight_decay",
    "grad_clip": "train.grad_clip",
    "seed": "train.seed",
    "min_count": "vocab_min_count",
    "sgns_epochs": "sgns.epochs",
}

TRAIN_DEFAULTS = {"model": {"encoder": {}, "heads": 1}, "train": {}, "sgns": {}, "vocab_min_count": 3}


def cmd_train(args: argparse.Namespace) -> int:
    merged = _resolve("train", args, TRAIN_FLAGS, TRAIN_DEFAULTS)
    model_config = _model_config(merged)
    train_config = _train_config(merged, args.preset, model_config.encoder.kind)
    if args.embeddings and args.pretrain_embeddings:
        raise ConfigError("--embeddings and --pretrain-embeddings are mutually exclusive")
    documents, registry = load_sources(_split_list(args.sources))
    train_docs = [d for d in documents if d.split == "train"]
    val_docs = [d for d in documents if d.split == "val"]
    vocab = build_vocab(documents, registry, min_count=merged["vocab_min_count"])

    table: np.ndarray | None = None
    if args.embeddings:
        tokens, rows = load_embeddings(args.embeddings)
        if rows.shape[1] != model_config.encoder.embed_dim:
            raise ConfigError(
                f"embedding file has dim {rows.shape[1]} but the model expects "
                f"{model_config.encoder.embed_dim}"
            )
        table = align_embeddings(vocab, tokens, rows, seed=train_config.seed)
    elif args.pretrain_embeddings:
        sgns = _sgns_config(merged, model_config.encoder.embed_dim)
        table, _ = pretrain_embeddings(documents, vocab, sgns)

    torch.manual_seed(train_config.seed)
    model = DualCoder(vocab.size, model_config)
    if table is not None:
        model.load_embedding_table(table)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "run_config.json",
        {
            "command": "train",
            "sources": _split_list(args.sources),
            "preset": args.preset,
            "model": model_config.to_dict(),
            "train": train_config.to_dict(),
            "vocab_size": vocab.size,
            "vocab_min_count": merged["vocab_min_count"],
            "embeddings": args.embeddings or ("pretrained inline" if args.pretrain_embeddings else "random"),
        },
    )
    result = train(
        model,
        vocab,
        train_docs,
        registry,
        train_config,
        out_dir=out,
        val_docs=val_docs,
        resume_from=args.resume,
    )
    report = count_parameters(model)
    print(report.format_text())
    if result.best_val_f1 is not None:
        print(f"best val micro F1 {result.best_val_f1:.4f} at epoch {result.best_epoch}")
    print(f"checkpoint: {result.last_checkpoint}")
    return 0


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    bundle = load_checkpoint(args.checkpoint)
    model, vocab = bundle.model, bundle.vocab
    documents, registry = load_sources(_split_list(args.sources))
    wanted = _split_list(args.strata)
    bad = set(wanted) - {"frequent", "rare", "full"}
    if bad:
        raise ConfigError(f"unknown strata: {sorted(bad)}")
    eval_docs = [d for d in documents if d.split == args.split]
    if not eval_docs:
        raise DataError(f"no documents in split {args.split!r}")

    if args.threshold == "tuned":
        val_docs = [d for d in documents if d.split == "val"]
        if not val_docs:
            raise DataError("--threshold tuned needs a val split in the sources")
        targets, probs = pooled_validation(model, vocab, val_docs, registry)
        threshold, _ = tune_threshold(targets, probs)
    else:
        try:
            threshold = float(args.threshold)
        except ValueError:
            raise ConfigError(f"--threshold must be 'tuned' or a number, got {args.threshold!r}") from None

    ks = tuple(int(k) for k in _split_list(args.ks))
    payload: dict = {
        "checkpoint": str(args.checkpoint),
        "split": args.split,
        "threshold": threshold,
        "strata": wanted,
        "versions": {},
    }
    for version in sorted({d.version for d in eval_docs}):
        version_docs = [d for d in documents if d.version == version]
        stratum = compute_strata(
            version_docs,
            threshold=args.rare_threshold,
            registry_codes=[e.code_id for e in registry if e.version == version],
        )
        reports = evaluate(
            model,
            vocab,
            [d for d in eval_docs if d.version == version],
            registry,
            threshold=threshold,
            stratum=stratum,
            ks=ks,
        )
        payload["versions"][version] = {
            name: report.to_dict() for name, report in reports.items() if name in wanted
        }
        for name in ("full", "frequent", "rare"):
            if name in reports and name in wanted:
                print(reports[name].format_text())
    if args.out:
        _write_json(Path(args.out), payload)
        print(f"report: {args.out}")
    return 0


# ----------------------------------------------------------------- predict


def _read_notes(path: str | Path, max_tokens: int) -> list[tuple[str, list[str]]]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"notes file not found: {p}")
    notes: list[tuple[str, list[str]]] = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("{"):
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise DataError(f"{p}:{lineno}: invalid JSON ({exc.msg})") from exc
            if "text" not in record:
                raise DataError(f"{p}:{lineno}: record has no 'text' field")
            doc_id = str(record.get("doc_id", f"note-{lineno:05d}"))
            text = str(record["text"])
        else:
            doc_id = f"note-{lineno:05d}"
            text = stripped
        tokens = tokenize(text)[:max_tokens]
        if not tokens:
            raise DataError(f"{p}:{lineno}: note has no usable tokens")
        notes.append((doc_id, tokens))
    if not notes:
        raise DataError(f"{p}: no notes found")
    return notes


def cmd_predict(args: argparse.Namespace) -> int:
    bundle = load_checkpoint(args.checkpoint)
    model, vocab = bundle.model, bundle.vocab
    entries = load_registry(args.registry)
    entries.sort(key=lambda e: (e.code_id, e.version))  # ties in score break by code_id
    notes = _read_notes(args.notes, max_tokens=args.max_note_tokens)
    probs = predict_matrix(model, vocab, [tokens for _, tokens in notes], entries)
    top_k = min(args.top_k, len(entries))

    out_fh = Path(args.out).open("w", encoding="utf-8") if args.out else None
    try:
        for (doc_id, _), row in zip(notes, probs):
            order = rank_columns(row)[:top_k]
            ranking = [
                {
                    "code_id": entries[j].code_id,
                    "version": entries[j].version,
                    "probability": float(row[j]),
                }
                for j in order
            ]
            if out_fh is not None:
                out_fh.write(json.dumps({"doc_id": doc_id, "ranking": ranking}) + "\n")
            else:
                listing = "  ".join(
                    f"{r['code_id']}({r['version']})={r['probability']:.4f}" for r in ranking
                )
                print(f"{doc_id}: {listing}")
    finally:
        if out_fh is not None:
            out_fh.close()
            print(f"predictions: {args.out}")
    return 0


# ------------------------------------------------------- mixing-experiment

MIXING_FLAGS = dict(GENERATE_FLAGS) | {
    "encoder": "model.encoder.kind",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "label_space_size": "train.label_space_size",
}


def cmd_mixing_experiment(args: argparse.Namespace) -> int:
    merged = _resolve("mixing-experiment", args, MIXING_FLAGS, {"synth": {}, **TRAIN_DEFAULTS})
    if merged["synth"].pop("_disjoint", False):
        merged["synth"]["shared_token_space"] = False
    synth_config = _synth_config(merged)
    if args.control:
        synth_config = SynthConfig(
            **{**synth_config.to_dict(), "overlap_fraction": 0.0, "shared_token_space": False}
        )
    model_config = _model_config(merged)
    train_config = _train_config(merged, args.preset, model_config.encoder.kind)
    sgns_config = _sgns_config(merged, model_config.encoder.embed_dim)
    seeds = [int(s) for s in _split_list(args.seeds)]

    out = Path(args.out)
    report = mixing_experiment(
        synth_config,
        seeds,
        model_config,
        train_config,
        sgns_config,
        workdir=out / ("control" if args.control else "main"),
        min_count=merged["vocab_min_count"],
    )
    name = "control_report.json" if args.control else "mixing_report.json"
    _write_json(out / name, report)
    for row in report["per_seed"]:
        d = row["delta"]["rare"]
        print(
            f"seed {row['seed']}: rare delta micro F1 {d['micro_f1']:+.4f}  "
            f"P@8 {d['p_at_8']:+.4f}  MAP {d['map']:+.4f}"
        )
    mean = report["mean_delta"]["rare"]
    print(
        f"mean rare delta: micro F1 {mean['micro_f1']:+.4f}  "
        f"P@8 {mean['p_at_8']:+.4f}  MAP {mean['map']:+.4f}"
    )
    print(f"report: {out / name}")
    return 0


# ------------------------------------------------------------------ params

PARAMS_FLAGS = {
    "encoder": "model.encoder.kind",
    "heads": "model.heads",
    "embed_dim": "model.encoder.embed_dim",
}


def cmd_params(args: argparse.Namespace) -> int:
    merged = _resolve("params", args, PARAMS_FLAGS, TRAIN_DEFAULTS)
    model_config = _model_config(merged)
    vocab_size = args.vocab_size or merged.get("benchmark_vocab_size", BENCHMARK_VOCAB_SIZE)
    model = DualCoder(vocab_size, model_config)
    report = count_parameters(model)
    print(
        f"encoder {model_config.encoder.kind}  heads {model_config.heads}  "
        f"vocab {vocab_size}  embed dim {model_config.encoder.embed_dim}"
    )
    print(report.format_text())
    embedding = vocab_size * model_config.encoder.embed_dim
    print(
        f"embedding table holds {embedding:,} of {report.total:,} parameters "
        f"({embedding / report.total:.0%}); totals scale with vocabulary size"
    )
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="dualcoder", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser) -> None:
        p.add_argument("--preset", choices=["desk", "paper"], default=None)
        p.add_argument("--config", default=None, help="JSON config file (flags win)")

    p = sub.add_parser("generate", help="write a synthetic two-version corpus")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-concepts", type=int, default=None)
    p.add_argument("--overlap-fraction", "--overlap", type=float, default=None, dest="overlap_fraction")
    p.add_argument("--zipf-s", type=float, default=None)
    p.add_argument("--n-docs-v1", type=int, default=None)
    p.add_argument("--n-docs-v2", type=int, default=None)
    p.add_argument("--noise-rate", type=float, default=None)
    p.add_argument("--codes-per-note-mean", type=float, default=None)
    p.add_argument("--codes-per-note-std", type=float, default=None)
    p.add_argument("--rewording-fraction", type=float, default=None)
    p.add_argument("--disjoint-token-space", action="store_true", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain-embeddings", help="train skip-gram embeddings")
    common(p)
    p.add_argument("--sources", required=True, help="comma-separated corpus.jsonl files")
    p.add_argument("--out", required=True, help="embedding text file to write")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pretrain_embeddings)

    p = sub.add_parser("train", help="train a model on one or more corpora")
    common(p)
    p.add_argument("--sources", required=True, help="comma-separated corpus.jsonl files")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--embeddings", default=None, help="embedding text file to load")
    p.add_argument("--pretrain-embeddings", action="store_true", help="run skip-gram inline")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--encoder", choices=["cnn", "rnn"], default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--cnn-filters", type=int, default=None)
    p.add_argument("--cnn-width", type=int, default=None)
    p.add_argument("--rnn-hidden", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--warmup-steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--label-space-size", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-count", type=int, default=None)
    p.add_argument("--sgns-epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="stratified evaluation of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sources", required=True, help="comma-separated corpus.jsonl files")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--strata", default="full,frequent,rare")
    p.add_argument("--threshold", default="tuned", help="'tuned' or a number such as 0.5")
    p.add_argument("--rare-threshold", type=int, default=10)
    p.add_argument("--ks", default="8,15")
    p.add_argument("--out", default=None, help="JSON report file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="rank registry codes for raw notes")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--notes", required=True, help="text file: one note per line, or JSONL")
    p.add_argument("--registry", required=True, help="codes.tsv of any version")
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--max-note-tokens", type=int, default=4000)
    p.add_argument("--out", default=None, help="JSONL output (default: stdout text)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("mixing-experiment", help="V2-only vs V1+V2 contrast on V2 rare codes")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--control", action="store_true", help="overlap 0 + disjoint token spaces")
    p.add_argument("--seed", type=int, default=None, help="corpus generation seed")
    p.add_argument("--n-concepts", type=int, default=None)
    p.add_argument("--overlap-fraction", "--overlap", type=float, default=None, dest="overlap_fraction")
    p.add_argument("--zipf-s", type=float, default=None)
    p.add_argument("--n-docs-v1", type=int, default=None)
    p.add_argument("--n-docs-v2", type=int, default=None)
    p.add_argument("--noise-rate", type=float, default=None)
    p.add_argument("--codes-per-note-mean", type=float, default=None)
    p.add_argument("--codes-per-note-std", type=float, default=None)
    p.add_argument("--rewording-fraction", type=float, default=None)
    p.add_argument("--disjoint-token-space", action="store_true", default=None)
    p.add_argument("--encoder", choices=["cnn", "rnn"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--label-space-size", type=int, default=None)
    p.set_defaults(func=cmd_mixing_experiment)

    p = sub.add_parser("params", help="report trainable parameter counts")
    common(p)
    p.add_argument("--encoder", choices=["cnn", "rnn"], default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.set_defaults(func=cmd_params)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return args.func(args) or 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DualcoderError as exc:  # base class fallback
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
