"""Deterministic synthetic corpus: three instrument families with paired
template lyric lines, so cross-modal structure exists by construction.

This is a documented stand-in for a real studio-session catalogue: the
family vocabularies are correlated with the audio families, which is what
makes text-audio alignment learnable at desk scale.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..nn.rng import new_generator
from .audio import AudioClip, save_wav, segment_recording
from .manifest import ClipRecord, build_manifest, clip_file_name, write_manifest
from .mel import SpectroConfig, compute_mel_spectrogram, save_spectrogram

FAMILIES = ("drone", "percussion", "keyboard")

# Scrambled chromatic walk so consecutive compositions land in distant keys.
DEFAULT_KEYS = (0, 7, 2, 9, 4, 11, 6, 1, 8, 3, 10, 5)

MOOD_BANKS = {
    "drone": ["hollow", "dark", "endless", "drifting", "slow", "deep", "cold",
              "shadow", "fog", "silence", "void", "humming", "eternal",
              "beneath", "grey", "weight"],
    "percussion": ["pulse", "strike", "rattle", "burn", "sharp", "kick",
                   "fracture", "spark", "metal", "clatter", "rush", "jolt",
                   "snap", "grit", "thunder", "break"],
    "keyboard": ["glass", "bright", "rising", "chiming", "bloom", "light",
                 "crystal", "morning", "dance", "shimmer", "golden", "open",
                 "sweet", "clear", "ring", "sky"],
}
FILLER_WORDS = ["the", "a", "in", "of", "we", "and", "through", "my", "your",
                "night", "air", "sound", "dream", "echo", "falls", "comes"]


@dataclass
class SyntheticCorpusSpec:
    compositions_per_family: dict[str, int] = field(
        default_factory=lambda: {f: 12 for f in FAMILIES})
    clips_per_composition: int = 16
    lines_per_composition: int = 8
    seed: int = 0
    keys: dict[str, list[int]] | None = None  # semitone offsets per family

    def __post_init__(self):
        unknown = set(self.compositions_per_family) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown families {unknown}")
        if not 5 <= self.lines_per_composition <= 20:
            raise ValueError("lines_per_composition must be in [5, 20]")

    def key_for(self, family: str, index: int) -> int:
        if self.keys and family in self.keys:
            ks = self.keys[family]
            return ks[index % len(ks)]
        return DEFAULT_KEYS[index % len(DEFAULT_KEYS)]


@dataclass
class CorpusPaths:
    root: str
    manifest: str
    aligned: str
    annotations: str
    recordings_dir: str
    clips_dir: str
    spectrograms_dir: str


def _comp_rng(seed: int, family: str, index: int) -> np.random.Generator:
    fam_idx = FAMILIES.index(family)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((seed, fam_idx, index))))


def _normalize(y: np.ndarray, peak: float = 0.7) -> np.ndarray:
    m = np.abs(y).max()
    return y * (peak / m) if m > 0 else y


def _render_drone(rng, key: int, duration_s: float, sr: int) -> np.ndarray:
    """Slowly modulated stack of harmonics over a low fundamental."""
    t = np.arange(int(duration_s * sr)) / sr
    f0 = 55.0 * 2.0 ** (key / 12.0)
    alpha = rng.uniform(0.9, 1.5)
    y = np.zeros_like(t)
    for h in range(1, 7):
        amp = 1.0 / h ** alpha
        detune = 1.0 + rng.uniform(-0.003, 0.003)
        lfo_rate = rng.uniform(0.03, 0.12)
        lfo_depth = rng.uniform(0.2, 0.5)
        lfo_phase = rng.uniform(0, 2 * np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        lfo = 1.0 + lfo_depth * np.sin(2 * np.pi * lfo_rate * t + lfo_phase)
        y += amp * lfo * np.sin(2 * np.pi * f0 * h * detune * t + phase)
    return _normalize(y)


def _render_percussion(rng, key: int, duration_s: float, sr: int) -> np.ndarray:
    """Band-filtered noise bursts on a tempo grid."""
    n = int(duration_s * sr)
    tempo = rng.uniform(90.0, 150.0)
    interval = 60.0 / tempo
    center = 400.0 * 2.0 ** (key / 12.0)
    width = center * rng.uniform(0.25, 0.6)
    tau = rng.uniform(0.04, 0.12)
    burst_len = int(0.25 * sr)
    tb = np.arange(burst_len) / sr
    noise = rng.standard_normal(burst_len) * np.exp(-tb / tau)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(burst_len, 1.0 / sr)
    spec *= np.exp(-0.5 * ((freqs - center) / width) ** 2)
    burst = np.fft.irfft(spec, burst_len)
    burst /= max(np.abs(burst).max(), 1e-9)
    accents = rng.uniform(0.4, 1.0, size=4)
    accents[0] = 1.0
    y = np.zeros(n)
    beat = 0
    while True:
        start = int(round(beat * interval * sr))
        if start >= n:
            break
        end = min(start + burst_len, n)
        y[start:end] += accents[beat % 4] * burst[:end - start]
        beat += 1
    return _normalize(y)


def _render_keyboard(rng, key: int, duration_s: float, sr: int) -> np.ndarray:
    """Arpeggiated major triad in the composition's key."""
    n = int(duration_s * sr)
    tempo = rng.uniform(80.0, 140.0)
    step = 60.0 / tempo / 2.0  # eighth notes
    root = 220.0 * 2.0 ** (key / 12.0)
    degrees = [0, 4, 7, 12]
    pattern = [degrees[i] for i in rng.integers(0, len(degrees), size=8)]
    pattern[0] = 0  # always restate the root
    decay = rng.uniform(0.25, 0.5)
    note_len = int(step * 1.5 * sr)
    tn = np.arange(note_len) / sr
    env = np.minimum(tn / 0.005, 1.0) * np.exp(-tn / decay)
    y = np.zeros(n)
    i = 0
    while True:
        start = int(round(i * step * sr))
        if start >= n:
            break
        semis = pattern[i % len(pattern)]
        f = root * 2.0 ** (semis / 12.0)
        note = np.zeros(note_len)
        for h in range(1, 5):
            note += (1.0 / h ** 1.2) * np.sin(2 * np.pi * f * h * tn)
        end = min(start + note_len, n)
        y[start:end] += (note * env)[:end - start]
        i += 1
    return _normalize(y)


_RENDERERS = {
    "drone": _render_drone,
    "percussion": _render_percussion,
    "keyboard": _render_keyboard,
}


def _make_lines(rng, family: str, count: int) -> list[str]:
    bank = MOOD_BANKS[family]
    lines = []
    for _ in range(count):
        length = int(rng.integers(4, 10))
        words = []
        for pos in range(length):
            # Roughly one filler for every two mood words, filler-led.
            if pos % 3 == 0:
                words.append(FILLER_WORDS[int(rng.integers(0, len(FILLER_WORDS)))])
            else:
                words.append(bank[int(rng.integers(0, len(bank)))])
        lines.append(" ".join(words))
    return lines


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir,
                              cfg: SpectroConfig | None = None) -> CorpusPaths:
    """Render recordings, cut clips, compute spectrograms, and emit the
    manifest plus the aligned (clip_id, text) lyric corpus.

    Fully deterministic for a fixed spec: run twice, get byte-identical
    manifests and aligned files.
    """
    cfg = cfg or SpectroConfig()
    out_dir = str(out_dir)
    paths = CorpusPaths(
        root=out_dir,
        manifest=os.path.join(out_dir, "manifest.jsonl"),
        aligned=os.path.join(out_dir, "aligned.jsonl"),
        annotations=os.path.join(out_dir, "annotations.json"),
        recordings_dir=os.path.join(out_dir, "recordings"),
        clips_dir=os.path.join(out_dir, "clips"),
        spectrograms_dir=os.path.join(out_dir, "spectrograms"),
    )
    for d in (paths.recordings_dir, paths.clips_dir, paths.spectrograms_dir):
        os.makedirs(d, exist_ok=True)

    window_s = 10.0
    annotations: dict[str, list[str]] = {}
    comp_lines: dict[str, list[str]] = {}
    for family in FAMILIES:
        n_comps = spec.compositions_per_family.get(family, 0)
        for j in range(n_comps):
            rng = _comp_rng(spec.seed, family, j)
            rid = f"{family}{j:02d}"
            key = spec.key_for(family, j)
            duration = spec.clips_per_composition * window_s
            y = _RENDERERS[family](rng, key, duration, cfg.sample_rate)
            save_wav(os.path.join(paths.recordings_dir, rid + ".wav"),
                     y, cfg.sample_rate)
            recording = AudioClip(samples=y.astype(np.float32),
                                  sample_rate=cfg.sample_rate, recording_id=rid)
            for clip in segment_recording(recording, window_s, window_s):
                stem = clip_file_name(rid, clip.offset_s)
                save_wav(os.path.join(paths.clips_dir, stem + ".wav"),
                         clip.samples, cfg.sample_rate)
                save_spectrogram(
                    os.path.join(paths.spectrograms_dir, stem + ".mel"),
                    compute_mel_spectrogram(clip, cfg))
            annotations[rid] = [family]
            comp_lines[rid] = _make_lines(rng, family, spec.lines_per_composition)

    with open(paths.annotations, "w", encoding="utf-8") as fh:
        json.dump(annotations, fh, indent=2, sort_keys=True)

    records = build_manifest(paths.clips_dir, annotations)
    write_manifest(paths.manifest, records)

    # Every clip gets a line from its composition, reused round-robin.
    by_comp: dict[str, list[ClipRecord]] = {}
    for rec in records:
        by_comp.setdefault(rec.composition_id, []).append(rec)
    with open(paths.aligned, "w", encoding="utf-8") as fh:
        for comp_id in sorted(by_comp):
            clips = sorted(by_comp[comp_id], key=lambda r: r.offset_s)
            lines = comp_lines[comp_id]
            for i, rec in enumerate(clips):
                fh.write(json.dumps(
                    {"clip_id": rec.clip_id, "text": lines[i % len(lines)]},
                    sort_keys=True) + "\n")
    return paths


def read_aligned(path) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                pairs.append((obj["clip_id"], obj["text"]))
    return pairs
