"""Command-line entry points: corpus preparation, model training, index
building, the evaluation protocols, and the serving loop."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import click

from .corpus import (SyntheticCorpusSpec, generate_synthetic_corpus,
                     ingest_recordings, load_spectrogram, read_aligned,
                     read_manifest)
from .nn import new_generator


@click.group()
@click.option("--verbose", is_flag=True, help="Debug-level logging.")
def main(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------- corpus

@main.group()
def corpus():
    """Build clip catalogues from recordings or from scratch."""


@corpus.command("ingest")
@click.option("--in", "in_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of source recordings (WAV).")
@click.option("--annotations", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON mapping recording id -> instrument tag list.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Corpus directory to write clips/spectrograms/manifest.")
@click.option("--window", default=10.0, show_default=True,
              help="Clip window length in seconds.")
def corpus_ingest(in_dir, annotations, out_dir, window):
    """Cut recordings into clips and write the manifest."""
    records = ingest_recordings(in_dir, annotations, out_dir,
                                window_s=window)
    click.echo(f"ingested {len(records)} clips into {out_dir}")


@corpus.command("synth")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--comps-per-family", default=None, type=int,
              help="Compositions per instrument family "
                   "(default: the full 576-clip catalogue).")
@click.option("--clips-per-comp", default=None, type=int)
@click.option("--lines-per-comp", default=None, type=int)
def corpus_synth(seed, out_dir, comps_per_family, clips_per_comp,
                 lines_per_comp):
    """Generate a synthetic corpus with recordings, lyrics, and manifest."""
    kw = {"seed": seed}
    if comps_per_family is not None:
        base = SyntheticCorpusSpec()
        kw["compositions_per_family"] = {
            fam: comps_per_family for fam in base.compositions_per_family}
    if clips_per_comp is not None:
        kw["clips_per_composition"] = clips_per_comp
    if lines_per_comp is not None:
        kw["lines_per_composition"] = lines_per_comp
    paths = generate_synthetic_corpus(SyntheticCorpusSpec(**kw), out_dir)
    records = read_manifest(paths.manifest)
    click.echo(f"wrote {len(records)} clips under {paths.root}")


# ---------------------------------------------------------------- training

def _load_corpus_spectrograms(corpus_root, records):
    root = Path(corpus_root)
    return [load_spectrogram(root / r.spectrogram_path).values
            for r in records]


@main.command("train-spec")
@click.option("--corpus", "corpus_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True, type=int)
@click.option("--batch", default=16, show_default=True, type=int)
@click.option("--lr", default=1e-4, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def train_spec(corpus_root, out_path, epochs, batch, lr, seed):
    """Train the clip autoencoder on a corpus's spectrograms."""
    from .models import SpecVae, SpecVaeTrainConfig, train_spec_vae

    records = read_manifest(os.path.join(corpus_root, "manifest.jsonl"))
    data = _load_corpus_spectrograms(corpus_root, records)
    model = SpecVae(seed=seed)
    cfg = SpecVaeTrainConfig(epochs=epochs, batch_size=batch, lr=lr,
                             seed=seed)
    trace = train_spec_vae(data, model, cfg, out_path=out_path)
    first, last = trace.epochs[0]["total"], trace.epochs[-1]["total"]
    click.echo(f"trained on {len(data)} spectrograms, "
               f"loss {first:.4f} -> {last:.4f}, saved {out_path}")
    if trace.aborted:
        raise click.ClickException("training aborted on a non-finite loss; "
                                   "checkpoint holds the last stable epoch")


@main.command("train-text")
@click.option("--aligned", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Line-delimited (clip_id, text) records.")
@click.option("--spec-ckpt", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--manifest", default=None, type=click.Path(),
              help="Clip manifest (default: manifest.jsonl next to "
                   "the aligned file).")
@click.option("--epochs", default=30, show_default=True, type=int)
@click.option("--batch", default=16, show_default=True, type=int)
@click.option("--min-freq", default=1, show_default=True, type=int,
              help="Minimum token frequency kept in the vocabulary.")
@click.option("--seed", default=0, show_default=True, type=int)
def train_text(aligned, spec_ckpt, out_path, manifest, epochs, batch,
               min_freq, seed):
    """Train the line generator on lyrics aligned to clips."""
    from .models import (SpecVae, TextCvae, TextCvaeConfig,
                         TextCvaeTrainConfig, Vocabulary, train_text_cvae)

    corpus_root = os.path.dirname(os.path.abspath(aligned))
    manifest = manifest or os.path.join(corpus_root, "manifest.jsonl")
    records = {r.clip_id: r for r in read_manifest(manifest)}
    pairs_raw = read_aligned(aligned)
    vocab = Vocabulary.build([text for _, text in pairs_raw],
                             min_freq=min_freq)
    spec_vae = SpecVae.load(spec_ckpt)
    pairs = []
    for clip_id, text in pairs_raw:
        if clip_id not in records:
            raise click.ClickException(
                f"aligned line references unknown clip {clip_id!r}")
        spec = load_spectrogram(
            os.path.join(corpus_root, records[clip_id].spectrogram_path))
        pairs.append((vocab.encode(text), spec.values))
    model = TextCvae(vocab, TextCvaeConfig(vocab_size=len(vocab)), seed=seed)
    cfg = TextCvaeTrainConfig(epochs=epochs, batch_size=batch, seed=seed)
    trace = train_text_cvae(pairs, spec_vae, model, cfg, out_path=out_path)
    click.echo(f"trained on {len(pairs)} lines, vocab {len(vocab)}, "
               f"saved {out_path}")
    if trace.aborted:
        raise click.ClickException("training aborted on a non-finite loss; "
                                   "checkpoint holds the last stable epoch")


@main.command("build-triples")
@click.option("--corpus", "corpus_root", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--spec-ckpt", required=True, type=click.Path(exists=True))
@click.option("--text-ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--tau", default=1.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def build_triples_cmd(corpus_root, spec_ckpt, text_ckpt, out_path, tau, seed):
    """Encode consecutive clip pairs + lines into alignment triples."""
    from .models import SpecVae, TextCvae, build_triples, save_triples

    records = read_manifest(os.path.join(corpus_root, "manifest.jsonl"))
    aligned = read_aligned(os.path.join(corpus_root, "aligned.jsonl"))
    triples = build_triples(records, aligned, corpus_root,
                            SpecVae.load(spec_ckpt), TextCvae.load(text_ckpt),
                            tau=tau, seed=seed)
    save_triples(out_path, triples)
    click.echo(f"wrote {triples.shape[0]} triples to {out_path}")


@main.command("train-gan")
@click.option("--triples", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fusion", default="add", show_default=True,
              type=click.Choice(["add", "hadamard", "weighted"]))
@click.option("--epochs", default=20, show_default=True, type=int)
@click.option("--batch", default=32, show_default=True, type=int)
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def train_gan_cmd(triples, out_path, fusion, epochs, batch, lr, seed):
    """Train the next-clip predictor on latent triples."""
    from .models import (GanConfig, GanModel, GanTrainConfig, load_triples,
                         train_gan)

    data = load_triples(triples)
    model = GanModel(GanConfig(fusion=fusion), seed=seed)
    cfg = GanTrainConfig(epochs=epochs, batch_size=batch, lr=lr, seed=seed)
    train_gan(data, model, cfg, out_path=out_path)
    click.echo(f"trained on {data.shape[0]} triples (fusion={fusion}), "
               f"saved {out_path}")


@main.command("index")
@click.option("--manifest", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--spec-ckpt", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--corpus-root", default=None, type=click.Path(),
              help="Root for spectrogram paths (default: manifest's "
                   "directory).")
@click.option("--tau", default=1.0, show_default=True, type=float,
              help="Latent sampling temperature; 0 stores posterior means.")
@click.option("--seed", default=0, show_default=True, type=int)
def index_cmd(manifest, spec_ckpt, out_path, corpus_root, tau, seed):
    """Encode every catalogue clip and write the retrieval index."""
    from .models import SpecVae
    from .retrieval import build_index, save_index

    records = read_manifest(manifest)
    root = corpus_root or os.path.dirname(os.path.abspath(manifest))
    index = build_index(records, root, SpecVae.load(spec_ckpt), tau=tau,
                        seed=seed)
    save_index(index, out_path)
    click.echo(f"indexed {len(index.clip_ids)} clips to {out_path}")


# ---------------------------------------------------------------- serving

@main.command("run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def run_cmd(config_path):
    """Serve the generation loop over TCP and HTTP."""
    from .service import ServiceConfig, serve

    cfg = ServiceConfig.from_file(config_path)
    click.echo(f"tcp 127.0.0.1:{cfg.tcp_port}  "
               f"http http://{cfg.http_host}:{cfg.http_port}  (ctrl-c stops)")
    try:
        serve(cfg)
    except KeyboardInterrupt:
        click.echo("stopped")


# ---------------------------------------------------------------- eval

@main.group("eval")
def eval_group():
    """Automatic evaluation protocols and listening-test export."""


def _runtime(config_path):
    from .service import ServiceConfig, load_runtime

    cfg = ServiceConfig.from_file(config_path)
    return cfg, load_runtime(cfg)


@eval_group.command("precision")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", default=0, show_default=True, type=int,
              help="Evaluate this many random conditioning clips "
                   "(0 = the whole catalogue).")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Also write the report as JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
def eval_precision_cmd(config_path, sample, out_path, seed):
    """Same-composition precision of predicted rankings."""
    from .evalsuite import eval_precision

    _, rt = _runtime(config_path)
    ids = list(rt.index.clip_ids)
    if sample and sample < len(ids):
        rng = new_generator(seed)
        ids = [ids[i] for i in rng.choice(len(ids), sample, replace=False)]
    report = eval_precision(rt.index, rt.records, rt.text_cvae, rt.gan,
                            conditioning_clip_ids=ids, seed=seed)
    click.echo(report.to_table())
    if out_path:
        Path(out_path).write_text(report.to_json() + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")


@eval_group.command("impact")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--per-category", default=7, show_default=True, type=int,
              help="Fixed conditioning clips sampled per instrument tag.")
@click.option("--iterations", default=10, show_default=True, type=int)
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
def eval_impact_cmd(config_path, per_category, iterations, out_path, seed):
    """Ranking churn caused by varying only the lyric line."""
    from .evalsuite import eval_impact

    _, rt = _runtime(config_path)
    rng = new_generator(seed)
    by_tag: dict[str, list[str]] = {}
    for r in rt.records:
        for tag in r.instrument_tags:
            by_tag.setdefault(tag, []).append(r.clip_id)
    fixed: list[str] = []
    for tag in sorted(by_tag):
        pool = by_tag[tag]
        take = min(per_category, len(pool))
        picks = rng.choice(len(pool), take, replace=False)
        fixed.extend(pool[i] for i in picks)
    fixed = list(dict.fromkeys(fixed))   # de-dup, order preserved
    report = eval_impact(rt.index, rt.records, rt.text_cvae, rt.gan,
                         fixed_clip_ids=fixed, iterations=iterations,
                         seed=seed)
    click.echo(report.to_table())
    if out_path:
        Path(out_path).write_text(report.to_json() + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")


@eval_group.command("pairs")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--count", default=30, show_default=True, type=int)
@click.option("--duration", default=60.0, show_default=True, type=float,
              help="Segment length in seconds.")
@click.option("--seed", default=0, show_default=True, type=int)
def eval_pairs_cmd(config_path, out_dir, count, duration, seed):
    """Export paired loop-vs-random segments plus the answer key."""
    from .evalsuite import export_listening_pairs

    cfg, rt = _runtime(config_path)
    key = export_listening_pairs(rt.session, rt.records,
                                 cfg.session.corpus_root, out_dir,
                                 count=count, duration_s=duration, seed=seed)
    click.echo(f"wrote {2 * len(key)} segments + answer_key.json "
               f"under {out_dir}")


if __name__ == "__main__":
    main()
