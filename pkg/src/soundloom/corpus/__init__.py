"""Corpus tools: audio segmentation, mel spectrograms, manifests, and the
deterministic synthetic catalogue generator."""

from __future__ import annotations

import json
import logging
import os

from .audio import AudioClip, load_wav, save_wav, segment_recording
from .manifest import (INSTRUMENT_TAGS, ClipRecord, ManifestError,
                       build_manifest, clip_file_name, read_manifest,
                       write_manifest)
from .mel import (MelSpectrogram, SpectroConfig, compute_mel_spectrogram,
                  linear_band_energy, load_spectrogram, mel_band_centers,
                  mel_filterbank, save_spectrogram)
from .synth import (CorpusPaths, SyntheticCorpusSpec, generate_synthetic_corpus,
                    read_aligned)

log = logging.getLogger(__name__)

__all__ = [
    "AudioClip", "load_wav", "save_wav", "segment_recording",
    "INSTRUMENT_TAGS", "ClipRecord", "ManifestError", "build_manifest",
    "clip_file_name", "read_manifest", "write_manifest",
    "MelSpectrogram", "SpectroConfig", "compute_mel_spectrogram",
    "linear_band_energy", "load_spectrogram", "mel_band_centers",
    "mel_filterbank", "save_spectrogram",
    "CorpusPaths", "SyntheticCorpusSpec", "generate_synthetic_corpus",
    "read_aligned", "ingest_recordings",
]


def ingest_recordings(recordings_dir, annotations_path, out_dir,
                      cfg: SpectroConfig | None = None,
                      window_s: float = 10.0,
                      stride_s: float | None = None) -> list[ClipRecord]:
    """Cut every WAV under recordings_dir into fixed windows, compute and
    store spectrograms, and write the clip manifest.

    Annotations file maps recording id to its instrument tag list; a
    recording without an entry aborts the ingest.
    """
    cfg = cfg or SpectroConfig()
    stride_s = window_s if stride_s is None else stride_s
    out_dir = str(out_dir)
    clips_dir = os.path.join(out_dir, "clips")
    spectro_dir = os.path.join(out_dir, "spectrograms")
    os.makedirs(clips_dir, exist_ok=True)
    os.makedirs(spectro_dir, exist_ok=True)

    with open(annotations_path, encoding="utf-8") as fh:
        annotations = json.load(fh)

    names = sorted(n for n in os.listdir(str(recordings_dir))
                   if n.lower().endswith(".wav"))
    if not names:
        raise ManifestError(f"no recordings found under {recordings_dir}")
    n_clips = 0
    for name in names:
        rid = os.path.splitext(name)[0]
        recording = load_wav(os.path.join(str(recordings_dir), name),
                             recording_id=rid)
        if recording.sample_rate != cfg.sample_rate:
            raise ManifestError(
                f"recording {rid} has rate {recording.sample_rate}, "
                f"pipeline expects {cfg.sample_rate}")
        for clip in segment_recording(recording, window_s, stride_s):
            stem = clip_file_name(rid, clip.offset_s)
            save_wav(os.path.join(clips_dir, stem + ".wav"),
                     clip.samples, cfg.sample_rate)
            save_spectrogram(os.path.join(spectro_dir, stem + ".mel"),
                             compute_mel_spectrogram(clip, cfg))
            n_clips += 1
    log.info("ingested %d clips from %d recordings", n_clips, len(names))

    records = build_manifest(clips_dir, annotations)
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records
