"""WAV loading and clip segmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)


@dataclass
class AudioClip:
    """A mono float window of a source recording, samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    recording_id: str
    offset_s: float = 0.0
    duration_s: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError(f"clip samples must be mono 1-D, got {self.samples.shape}")
        if self.duration_s is None:
            self.duration_s = len(self.samples) / self.sample_rate
        expected = len(self.samples) / self.sample_rate
        if abs(self.duration_s - expected) > 1.0 / self.sample_rate:
            raise ValueError(
                f"duration_s={self.duration_s} inconsistent with "
                f"{len(self.samples)} samples at {self.sample_rate} Hz")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.samples).all())


def load_wav(path, recording_id: str | None = None) -> AudioClip:
    """Read a PCM16/PCM32/float32 WAV; multi-channel input is downmixed to mono."""
    rate, data = wavfile.read(path)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        scale = float(np.iinfo(data.dtype).max)
        data = data.astype(np.float32) / scale
    else:
        data = data.astype(np.float32)
    rid = recording_id if recording_id is not None else _stem(path)
    return AudioClip(samples=data, sample_rate=int(rate), recording_id=rid)


def save_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, sample_rate, (clipped * 32767.0).astype(np.int16))


def _stem(path) -> str:
    import os
    return os.path.splitext(os.path.basename(str(path)))[0]


def segment_recording(recording: AudioClip, window_s: float,
                      stride_s: float) -> list[AudioClip]:
    """Cut a recording into fixed windows at a fixed stride.

    Offsets run 0, stride, 2*stride, ...; a trailing remainder shorter than
    the window is dropped. A recording shorter than the window yields an
    empty list with a warning rather than an error.
    """
    if window_s <= 0 or stride_s <= 0:
        raise ValueError("window_s and stride_s must be positive")
    win = int(round(window_s * recording.sample_rate))
    stride = int(round(stride_s * recording.sample_rate))
    if len(recording.samples) < win:
        log.warning("recording %s (%.2fs) shorter than window %.2fs; no clips",
                    recording.recording_id, recording.duration_s, window_s)
        return []
    clips = []
    start = 0
    i = 0
    while start + win <= len(recording.samples):
        clips.append(AudioClip(
            samples=recording.samples[start:start + win],
            sample_rate=recording.sample_rate,
            recording_id=recording.recording_id,
            offset_s=recording.offset_s + i * stride_s,
            duration_s=window_s,
        ))
        i += 1
        start = i * stride
    return clips
