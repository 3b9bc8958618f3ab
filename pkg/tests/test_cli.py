"""End-to-end command checks over a tiny corpus: each command writes real
artifacts that the next one consumes."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from soundloom.cli import main
from soundloom.corpus import (SyntheticCorpusSpec, generate_synthetic_corpus,
                              read_manifest)
from soundloom.models import (GanModel, SpecVae, TextCvae, TextCvaeConfig,
                              Vocabulary, load_triples, save_triples)
from soundloom.nn import new_generator
from soundloom.retrieval import build_index, load_index, save_index


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A synthetic corpus plus untrained checkpoints and a service config."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    spec = SyntheticCorpusSpec(
        compositions_per_family={"drone": 1, "keyboard": 1},
        clips_per_composition=3, lines_per_composition=5, seed=17)
    paths = generate_synthetic_corpus(spec, corpus)
    records = read_manifest(paths.manifest)

    vae = SpecVae(seed=0)
    vae.save(root / "spec.ckpt")
    texts = ["night air over slow water", "dark echo falls again",
             "slow light in the dark air"]
    vocab = Vocabulary.build(texts, min_freq=1)
    TextCvae(vocab, TextCvaeConfig(vocab_size=len(vocab), embed_dim=16,
                                   hidden=24, latent_dim=128, cond_dim=128),
             seed=1).save(root / "text.ckpt")
    GanModel(seed=2).save(root / "gan.ckpt")
    save_index(build_index(records, paths.root, vae, tau=1.0, seed=3),
               root / "clips.idx")

    config = {
        "session": {
            "manifest": str(paths.manifest),
            "corpus_root": str(paths.root),
            "spec_vae": str(root / "spec.ckpt"),
            "text_cvae": str(root / "text.ckpt"),
            "gan": str(root / "gan.ckpt"),
            "index": str(root / "clips.idx"),
            "feedback_log": str(root / "feedback.ldjson"),
        },
    }
    cfg_path = root / "service.json"
    cfg_path.write_text(json.dumps(config))
    return root, paths, records, cfg_path


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_help_lists_every_command():
    result = invoke("--help")
    assert result.exit_code == 0
    for name in ("corpus", "train-spec", "train-text", "train-gan",
                 "build-triples", "index", "run", "eval"):
        assert name in result.output
    result = invoke("eval", "--help")
    for name in ("precision", "impact", "pairs"):
        assert name in result.output


def test_corpus_synth_and_ingest(tmp_path):
    out = tmp_path / "synth"
    result = invoke("corpus", "synth", "--seed", "5", "--out", str(out),
                    "--comps-per-family", "1", "--clips-per-comp", "2",
                    "--lines-per-comp", "5")
    assert result.exit_code == 0
    records = read_manifest(out / "manifest.jsonl")
    assert len(records) > 0 and "wrote" in result.output

    re_out = tmp_path / "reingested"
    result = invoke("corpus", "ingest", "--in", str(out / "recordings"),
                    "--annotations", str(out / "annotations.json"),
                    "--out", str(re_out))
    assert result.exit_code == 0
    assert len(read_manifest(re_out / "manifest.jsonl")) == len(records)


def test_index_command_round_trips(workdir, tmp_path):
    root, paths, records, _ = workdir
    out = tmp_path / "cli.idx"
    result = invoke("index", "--manifest", str(paths.manifest),
                    "--spec-ckpt", str(root / "spec.ckpt"),
                    "--out", str(out), "--tau", "0.5", "--seed", "4")
    assert result.exit_code == 0
    index = load_index(out, records=records)
    assert sorted(index.clip_ids) == sorted(r.clip_id for r in records)


def test_train_spec_command(workdir, tmp_path):
    _, paths, records, _ = workdir
    out = tmp_path / "trained-spec.ckpt"
    result = invoke("train-spec", "--corpus", str(paths.root),
                    "--out", str(out), "--epochs", "1", "--batch", "3",
                    "--seed", "1")
    assert result.exit_code == 0, result.output
    assert "loss" in result.output
    model = SpecVae.load(out)
    assert model.config.latent_dim == 128


def test_train_text_command(workdir, tmp_path):
    root, paths, _, _ = workdir
    out = tmp_path / "trained-text.ckpt"
    result = invoke("train-text", "--aligned", str(paths.aligned),
                    "--spec-ckpt", str(root / "spec.ckpt"),
                    "--out", str(out), "--epochs", "1", "--batch", "4")
    assert result.exit_code == 0, result.output
    model = TextCvae.load(out)
    assert len(model.vocab) > 4


def test_build_triples_and_train_gan(workdir, tmp_path):
    root, paths, _, _ = workdir
    triples_path = tmp_path / "triples.bin"
    result = invoke("build-triples", "--corpus", str(paths.root),
                    "--spec-ckpt", str(root / "spec.ckpt"),
                    "--text-ckpt", str(root / "text.ckpt"),
                    "--out", str(triples_path))
    assert result.exit_code == 0, result.output
    triples = load_triples(triples_path)
    assert triples.shape[1:] == (3, 128)
    assert triples.shape[0] > 0

    out = tmp_path / "trained-gan.ckpt"
    result = invoke("train-gan", "--triples", str(triples_path),
                    "--out", str(out), "--fusion", "add",
                    "--epochs", "1", "--batch", str(min(4, len(triples))))
    assert result.exit_code == 0, result.output
    assert GanModel.load(out).config.fusion == "add"


def test_eval_precision_command(workdir, tmp_path):
    _, _, _, cfg_path = workdir
    report_path = tmp_path / "precision.json"
    result = invoke("eval", "precision", "--config", str(cfg_path),
                    "--sample", "4", "--out", str(report_path))
    assert result.exit_code == 0, result.output
    assert "P@1" in result.output and "random baseline" in result.output
    report = json.loads(report_path.read_text())
    assert report["overall_count"] == 4


def test_eval_impact_command(workdir, tmp_path):
    _, _, _, cfg_path = workdir
    report_path = tmp_path / "impact.json"
    result = invoke("eval", "impact", "--config", str(cfg_path),
                    "--per-category", "1", "--iterations", "3",
                    "--out", str(report_path))
    assert result.exit_code == 0, result.output
    assert "Impact@10" in result.output
    report = json.loads(report_path.read_text())
    assert report["iterations"] == 3


def test_eval_pairs_command(workdir, tmp_path):
    _, _, _, cfg_path = workdir
    out_dir = tmp_path / "pairs"
    result = invoke("eval", "pairs", "--config", str(cfg_path),
                    "--out-dir", str(out_dir), "--count", "2",
                    "--duration", "1.5")
    assert result.exit_code == 0, result.output
    assert len(list(out_dir.glob("*.wav"))) == 4
    key = json.loads((out_dir / "answer_key.json").read_text())
    assert len(key) == 2
