"""Command line pipeline: exit codes, artifacts, config layering."""

import json

import pytest

from dualcoder.cli import main
from dualcoder.corpus import load_corpus
from dualcoder.textproc import load_embeddings
from dualcoder.training import load_checkpoint

pytestmark = pytest.mark.filterwarnings("ignore:version V")

TINY_GENERATE = [
    "--seed", "5",
    "--n-concepts", "12",
    "--n-docs-v1", "40",
    "--n-docs-v2", "30",
    "--zipf-s", "1.0",
    "--codes-per-note-mean", "4",
    "--codes-per-note-std", "2",
    "--noise-rate", "0.1",
]

TINY_MODEL = [
    "--encoder", "cnn",
    "--embed-dim", "16",
    "--cnn-filters", "16",
    "--cnn-width", "3",
    "--dropout", "0.0",
]

TINY_TRAIN = [
    "--epochs", "2",
    "--batch-size", "4",
    "--label-space-size", "32",
    "--warmup-steps", "5",
    "--min-count", "1",
    "--seed", "0",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Full generate -> pretrain -> train -> evaluate run, shared read-only."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    rcs = {}
    rcs["generate"] = main(["generate", "--out", str(corpus), *TINY_GENERATE])
    sources = f"{corpus / 'corpus_v9.jsonl'},{corpus / 'corpus_v10.jsonl'}"
    embeddings = root / "embeddings.txt"
    rcs["pretrain"] = main([
        "pretrain-embeddings", "--sources", sources, "--out", str(embeddings),
        "--dim", "16", "--window", "5", "--negatives", "3", "--epochs", "2",
        "--min-count", "1", "--seed", "0",
    ])
    run = root / "run"
    rcs["train"] = main([
        "train", "--sources", sources, "--out", str(run),
        "--embeddings", str(embeddings), *TINY_MODEL, *TINY_TRAIN,
    ])
    report = root / "report.json"
    rcs["evaluate"] = main([
        "evaluate", "--checkpoint", str(run / "last.ckpt"), "--sources", sources,
        "--split", "test", "--threshold", "tuned", "--out", str(report),
    ])
    return {
        "root": root,
        "corpus": corpus,
        "sources": sources,
        "embeddings": embeddings,
        "run": run,
        "report": report,
        "rcs": rcs,
    }


def test_generate_writes_corpus_files(pipeline):
    assert pipeline["rcs"]["generate"] == 0
    corpus = pipeline["corpus"]
    for name in ("corpus_v9.jsonl", "corpus_v10.jsonl", "codes.tsv", "generation.json"):
        assert (corpus / name).exists()
    docs, registry = load_corpus(corpus / "corpus_v9.jsonl")
    assert len(docs) == 40
    assert {e.version for e in registry} == {"V9", "V10"}
    report = json.loads((corpus / "generation.json").read_text())
    assert report["n_documents"] == {"V9": 40, "V10": 30}
    assert set(report["rare_code_fraction"]) == {"V9", "V10"}


def test_pretrain_embeddings_writes_loadable_table(pipeline):
    assert pipeline["rcs"]["pretrain"] == 0
    tokens, rows = load_embeddings(pipeline["embeddings"])
    assert rows.shape == (len(tokens), 16)


def test_train_produces_checkpoint_and_logs(pipeline):
    assert pipeline["rcs"]["train"] == 0
    run = pipeline["run"]
    assert (run / "last.ckpt").exists()
    assert (run / "best.ckpt").exists()
    config = json.loads((run / "run_config.json").read_text())
    assert config["model"]["encoder"]["kind"] == "cnn"
    assert config["train"]["epochs"] == 2
    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for line in lines:
        record = json.loads(line)
        assert {"epoch", "train_loss"} <= set(record)


def test_evaluate_writes_stratified_report(pipeline):
    assert pipeline["rcs"]["evaluate"] == 0
    payload = json.loads(pipeline["report"].read_text())
    assert isinstance(payload["threshold"], float)
    assert set(payload["versions"]) == {"V9", "V10"}
    for version_block in payload["versions"].values():
        assert "full" in version_block
        full = version_block["full"]
        assert 0.0 <= full["micro_f1"] <= 1.0
        assert full["n_notes"] > 0


def test_trained_model_beats_untrained_on_train_split(pipeline, tmp_path):
    """Two epochs on a tiny corpus must move train-split micro F1 up."""
    untrained = tmp_path / "run0"
    rc = main([
        "train", "--sources", pipeline["sources"], "--out", str(untrained),
        *TINY_MODEL, "--epochs", "0", "--batch-size", "4",
        "--label-space-size", "32", "--warmup-steps", "5",
        "--min-count", "1", "--seed", "0",
    ])
    assert rc == 0
    scores = {}
    for name, ckpt in (("trained", pipeline["run"]), ("untrained", untrained)):
        out = tmp_path / f"{name}.json"
        rc = main([
            "evaluate", "--checkpoint", str(ckpt / "last.ckpt"),
            "--sources", pipeline["sources"], "--split", "train",
            "--threshold", "tuned", "--strata", "full", "--out", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        scores[name] = min(
            block["full"]["micro_f1"] for block in payload["versions"].values()
        )
    assert scores["trained"] > scores["untrained"]


def test_resume_of_finished_run_is_a_no_op(pipeline, tmp_path):
    run2 = tmp_path / "resumed"
    rc = main([
        "train", "--sources", pipeline["sources"], "--out", str(run2),
        "--resume", str(pipeline["run"] / "last.ckpt"), *TINY_MODEL, *TINY_TRAIN,
    ])
    assert rc == 0
    before = load_checkpoint(pipeline["run"] / "last.ckpt")
    after = load_checkpoint(run2 / "last.ckpt")
    assert after.counters["epoch"] == before.counters["epoch"] == 2
    for (name, p), (name2, p2) in zip(
        before.model.named_parameters(), after.model.named_parameters()
    ):
        assert name == name2
        assert (p == p2).all(), f"{name} changed during no-op resume"


def test_predict_ranks_registry_codes(pipeline, tmp_path, capsys):
    notes = tmp_path / "notes.txt"
    notes.write_text(
        "c000w0a c000w1a c001w2b filler003\n"
        + json.dumps({"doc_id": "my-note", "text": "c002w0a c002w1b"})
        + "\n"
    )
    out = tmp_path / "preds.jsonl"
    rc = main([
        "predict", "--checkpoint", str(pipeline["run"] / "last.ckpt"),
        "--notes", str(notes), "--registry", str(pipeline["corpus"] / "codes.tsv"),
        "--top-k", "5", "--out", str(out),
    ])
    assert rc == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert [r["doc_id"] for r in lines] == ["note-00001", "my-note"]
    for record in lines:
        probs = [r["probability"] for r in record["ranking"]]
        assert len(probs) == 5
        assert all(0.0 < p < 1.0 for p in probs)
        assert probs == sorted(probs, reverse=True)
    rc = main([
        "predict", "--checkpoint", str(pipeline["run"] / "last.ckpt"),
        "--notes", str(notes), "--registry", str(pipeline["corpus"] / "codes.tsv"),
        "--top-k", "3",
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "note-00001:" in stdout and "my-note:" in stdout


def test_untrained_checkpoint_scores_at_chance(tmp_path):
    """A zero-epoch checkpoint is valid and evaluates near AUC 0.5."""
    corpus = tmp_path / "corpus"
    assert main(["generate", "--out", str(corpus), "--seed", "0"]) == 0
    sources = f"{corpus / 'corpus_v9.jsonl'},{corpus / 'corpus_v10.jsonl'}"
    run = tmp_path / "run0"
    rc = main([
        "train", "--sources", sources, "--out", str(run),
        *TINY_MODEL, "--epochs", "0", "--batch-size", "4",
        "--label-space-size", "32", "--warmup-steps", "5",
        "--min-count", "1", "--seed", "0",
    ])
    assert rc == 0
    bundle = load_checkpoint(run / "last.ckpt")
    assert bundle.counters["epoch"] == 0
    report = tmp_path / "rep.json"
    rc = main([
        "evaluate", "--checkpoint", str(run / "last.ckpt"), "--sources", sources,
        "--split", "test", "--threshold", "0.5", "--strata", "full",
        "--out", str(report),
    ])
    assert rc == 0
    payload = json.loads(report.read_text())
    for version, block in payload["versions"].items():
        assert block["full"]["micro_auc"] == pytest.approx(0.5, abs=0.05), version


def test_mixing_experiment_cli_smoke(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "synth": {
            "n_concepts": 12, "n_docs_v1": 40, "n_docs_v2": 30, "zipf_s": 1.0,
            "codes_per_note_mean": 5.0, "codes_per_note_std": 2.0,
            "noise_rate": 0.1, "split_fractions": [0.6, 0.2, 0.2], "seed": 5,
        },
        "model": {"encoder": {"kind": "cnn", "embed_dim": 16, "cnn_filters": 16,
                              "cnn_width": 3, "dropout": 0.0}},
        "train": {"lr": 1e-3, "warmup_steps": 5, "batch_size": 4, "epochs": 1,
                  "label_space_size": 32, "grad_clip": 5.0},
        "sgns": {"window": 5, "negatives": 3, "epochs": 2},
    }))
    out = tmp_path / "mix"
    rc = main(["mixing-experiment", "--out", str(out), "--seeds", "0",
               "--config", str(config)])
    assert rc == 0
    report = json.loads((out / "mixing_report.json").read_text())
    assert report["seeds"] == [0]
    assert {"rare", "frequent", "full"} <= set(report["mean_delta"])
    rc = main(["mixing-experiment", "--out", str(out), "--seeds", "0",
               "--config", str(config), "--control"])
    assert rc == 0
    control = json.loads((out / "control_report.json").read_text())
    assert control["synth_config"]["overlap_fraction"] == 0.0
    assert control["synth_config"]["shared_token_space"] is False


def test_params_reports_counts(capsys):
    rc = main(["params", "--encoder", "cnn", "--embed-dim", "16",
               "--vocab-size", "1000"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "total parameters:" in stdout
    assert "embedding table holds 16,000" in stdout


def test_params_paper_preset_uses_benchmark_vocab(capsys):
    rc = main(["params", "--preset", "paper", "--encoder", "cnn"])
    assert rc == 0
    assert "vocab 130000" in capsys.readouterr().out


def test_config_file_layering(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"model": {"encoder": {"embed_dim": 24}}}))
    assert main(["params", "--config", str(config), "--vocab-size", "10"]) == 0
    assert "embed dim 24" in capsys.readouterr().out
    # explicit flags override the config file
    assert main(["params", "--config", str(config), "--vocab-size", "10",
                 "--embed-dim", "12"]) == 0
    assert "embed dim 12" in capsys.readouterr().out
    # sections may also be keyed by command name
    keyed = tmp_path / "keyed.json"
    keyed.write_text(json.dumps({"params": {"model": {"encoder": {"embed_dim": 20}}}}))
    assert main(["params", "--config", str(keyed), "--vocab-size", "10"]) == 0
    assert "embed dim 20" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["generate", "--out", "ignored", "--overlap-fraction", "1.5"],
        ["generate", "--out", "ignored", "--bogus-flag"],
        [],
        ["params", "--encoder", "transformer"],
        ["train", "--sources", "x", "--out", "y",
         "--embeddings", "e.txt", "--pretrain-embeddings"],
    ],
)
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_config_file_errors_exit_1(tmp_path):
    assert main(["params", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["params", "--config", str(bad)]) == 1
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    assert main(["params", "--config", str(listy)]) == 1
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"model": {"encoder": {"bogus": 3}}}))
    assert main(["params", "--config", str(unknown)]) == 1


def test_evaluate_usage_errors(pipeline, tmp_path):
    ckpt = str(pipeline["run"] / "last.ckpt")
    sources = pipeline["sources"]
    assert main(["evaluate", "--checkpoint", ckpt, "--sources", sources,
                 "--threshold", "bogus"]) == 1
    assert main(["evaluate", "--checkpoint", ckpt, "--sources", sources,
                 "--strata", "weird"]) == 1


def test_data_errors_exit_2(pipeline, tmp_path):
    sources = pipeline["sources"]
    ckpt = str(pipeline["run"] / "last.ckpt")
    assert main(["evaluate", "--checkpoint", str(tmp_path / "none.ckpt"),
                 "--sources", sources]) == 2
    first = sources.split(",")[0]
    assert main(["train", "--sources", f"{first},{first}",
                 "--out", str(tmp_path / "dup")]) == 2
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    assert main(["predict", "--checkpoint", ckpt, "--notes", str(empty),
                 "--registry", str(pipeline["corpus"] / "codes.tsv")]) == 2
    bad = tmp_path / "bad_notes.txt"
    bad.write_text('{"no_text_field": 1}\n')
    assert main(["predict", "--checkpoint", ckpt, "--notes", str(bad),
                 "--registry", str(pipeline["corpus"] / "codes.tsv")]) == 2
