"""Mel-spectrogram computation and the on-disk spectrogram format.

Values are log-power mel energies relative to the clip's loudest cell,
clamped at a dB floor and mapped affinely onto [0, 1] so they can feed a
binary cross-entropy reconstruction loss. Digital silence maps to all-zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal.windows import hann

from .audio import AudioClip


@dataclass(frozen=True)
class SpectroConfig:
    sample_rate: int = 22050
    fft_size: int = 1024
    hop_size: int = 256
    n_mels: int = 64
    n_frames: int = 64
    log_floor_db: float = -80.0

    @property
    def config_id(self) -> str:
        return (f"sr{self.sample_rate}_fft{self.fft_size}_hop{self.hop_size}"
                f"_m{self.n_mels}_f{self.n_frames}_fl{int(-self.log_floor_db)}")


@dataclass
class MelSpectrogram:
    values: np.ndarray      # [n_mels, n_frames], float32 in [0, 1]
    config_id: str

    @property
    def shape(self):
        return self.values.shape


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: SpectroConfig) -> np.ndarray:
    """Triangular mel filters, [n_mels, fft_size//2 + 1]."""
    n_bins = cfg.fft_size // 2 + 1
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / cfg.sample_rate)
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(cfg.sample_rate / 2.0),
                                   cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - left) / max(center - left, 1e-9)
        falling = (right - freqs) / max(right - center, 1e-9)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_band_centers(cfg: SpectroConfig) -> np.ndarray:
    """Center frequency (Hz) of each mel band."""
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(cfg.sample_rate / 2.0),
                                   cfg.n_mels + 2))
    return edges[1:-1]


def _stft_power(samples: np.ndarray, cfg: SpectroConfig) -> np.ndarray:
    n = len(samples)
    if n < cfg.fft_size:
        raise ValueError(f"clip of {n} samples shorter than one FFT frame")
    n_raw = 1 + (n - cfg.fft_size) // cfg.hop_size
    idx = (np.arange(n_raw)[:, None] * cfg.hop_size + np.arange(cfg.fft_size)[None, :])
    frames = samples[idx].astype(np.float64) * hann(cfg.fft_size, sym=False)
    spec = np.fft.rfft(frames, axis=1)
    return (spec.real ** 2 + spec.imag ** 2)  # [n_raw, n_bins]


def compute_mel_spectrogram(clip: AudioClip, cfg: SpectroConfig) -> MelSpectrogram:
    """Deterministic mel spectrogram of a clip, shaped [n_mels, n_frames]."""
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} != config rate {cfg.sample_rate} "
            f"(recording {clip.recording_id} @ {clip.offset_s}s)")
    if not clip.is_finite():
        bad = int((~np.isfinite(clip.samples)).sum())
        raise ValueError(
            f"clip has {bad} non-finite samples "
            f"(recording {clip.recording_id} @ {clip.offset_s}s)")
    power = _stft_power(clip.samples, cfg)
    fb = mel_filterbank(cfg)
    mel_power = power @ fb.T  # [n_raw, n_mels]
    n_raw = mel_power.shape[0]
    if n_raw < cfg.n_frames:
        raise ValueError(
            f"clip yields {n_raw} frames < configured {cfg.n_frames}; too short")
    # Pool raw frames into n_frames contiguous groups (mean power per group).
    pooled = np.stack([seg.mean(axis=0)
                       for seg in np.array_split(mel_power, cfg.n_frames, axis=0)])
    pooled = pooled.T  # [n_mels, n_frames]
    p_max = pooled.max()
    if p_max <= 0.0:
        values = np.zeros((cfg.n_mels, cfg.n_frames), dtype=np.float32)
    else:
        floor_power = p_max * 10.0 ** (cfg.log_floor_db / 10.0)
        db = 10.0 * np.log10(np.maximum(pooled, floor_power) / p_max)
        values = ((db - cfg.log_floor_db) / -cfg.log_floor_db).astype(np.float32)
    return MelSpectrogram(values=values, config_id=cfg.config_id)


def linear_band_energy(spec: MelSpectrogram, floor_db: float) -> np.ndarray:
    """Undo the log/affine mapping back to relative linear power.

    A cell at the floor (value 0) maps to the floor power, not to zero,
    which is negligible for energy-ratio purposes.
    """
    db = spec.values.astype(np.float64) * -floor_db + floor_db
    return 10.0 ** (db / 10.0)


# ------------------------------------------------------------ file format
# 8-byte header: n_mels, n_frames as little-endian u32, then the float32
# cells in row-major order.

def save_spectrogram(path, spec: MelSpectrogram) -> None:
    n_mels, n_frames = spec.values.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", n_mels, n_frames))
        fh.write(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())


def load_spectrogram(path, config_id: str = "") -> MelSpectrogram:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated spectrogram header")
        n_mels, n_frames = struct.unpack("<II", header)
        payload = fh.read(4 * n_mels * n_frames)
    values = np.frombuffer(payload, dtype="<f4").reshape(n_mels, n_frames).copy()
    return MelSpectrogram(values=values, config_id=config_id)
