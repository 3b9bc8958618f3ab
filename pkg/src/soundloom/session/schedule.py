"""Stream scheduling: randomized clip durations, equal-power crossfades,
and an offline mixer used by tests and exports.

Clips are indexed as fixed 10 s windows, but playback draws a duration from
a configurable range and keeps reading the source recording past the clip's
offset; looping a 10 s window would be audible, extending the source is not.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DURATION_RANGE = (10.0, 40.0)
CROSSFADE_RANGE = (2.0, 6.0)


@dataclass(frozen=True)
class ScheduleEntry:
    """One playback region: read duration_s of the source recording starting
    at offset_s, fading in/out over the stated spans.

    Durations sit in the configured range unless the source recording runs
    out first (truncation wins; a too-short tail clip is better than a skip).
    """
    clip_id: str
    recording_id: str
    offset_s: float
    duration_s: float
    crossfade_in_s: float
    crossfade_out_s: float

    def __post_init__(self):
        if not 0.0 < self.duration_s <= DURATION_RANGE[1]:
            raise ValueError(f"duration {self.duration_s} outside "
                             f"(0, {DURATION_RANGE[1]}]")
        for name in ("crossfade_in_s", "crossfade_out_s"):
            fade = getattr(self, name)
            if fade < 0.0:
                raise ValueError(f"{name} must be >= 0, got {fade}")
            # A fade spans only audio inside this entry; in and out fades
            # must never overlap each other.
            if fade > self.duration_s / 2 + 1e-9:
                raise ValueError(f"{name} {fade} exceeds half the duration "
                                 f"{self.duration_s}")

    def to_dict(self) -> dict:
        return {"clip_id": self.clip_id, "recording_id": self.recording_id,
                "offset_s": self.offset_s, "duration_s": self.duration_s,
                "crossfade_in_s": self.crossfade_in_s,
                "crossfade_out_s": self.crossfade_out_s}


def draw_schedule(clip, available_s: float, rng: np.random.Generator,
                  duration_range: tuple = DURATION_RANGE,
                  crossfade_range: tuple = CROSSFADE_RANGE) -> ScheduleEntry:
    """Duration ~ Uniform over the range, truncated to the audio remaining
    after the clip's offset; fades ~ Uniform over their range, capped at
    half the realized duration."""
    lo, hi = duration_range
    if not 0 < lo <= hi:
        raise ValueError(f"bad duration range {duration_range}")
    if available_s <= 0:
        raise ValueError(
            f"clip {clip.clip_id}: no audio left at offset {clip.offset_s}")
    duration = min(float(rng.uniform(lo, hi)), available_s)
    f_lo, f_hi = crossfade_range
    if not 0 <= f_lo <= f_hi:
        raise ValueError(f"bad crossfade range {crossfade_range}")
    cap = duration / 2
    fade_in = min(float(rng.uniform(f_lo, f_hi)), cap)
    fade_out = min(float(rng.uniform(f_lo, f_hi)), cap)
    return ScheduleEntry(clip_id=clip.clip_id,
                         recording_id=clip.recording_id,
                         offset_s=clip.offset_s, duration_s=duration,
                         crossfade_in_s=fade_in, crossfade_out_s=fade_out)


def crossfade_gains(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-power gain ramps over n samples: g_out = cos(theta),
    g_in = sin(theta), theta sweeping 0 -> pi/2. g_in^2 + g_out^2 == 1 at
    every sample up to float rounding."""
    if n < 1:
        raise ValueError(f"crossfade needs at least 1 sample, got {n}")
    theta = np.linspace(0.0, math.pi / 2, n)
    return np.cos(theta), np.sin(theta)


def mix_stream(segments: list[tuple[np.ndarray, ScheduleEntry]],
               sample_rate: int) -> np.ndarray:
    """Overlap-add a clip sequence into one waveform.

    Consecutive clips overlap by the incoming entry's crossfade_in_s; the
    outgoing tail takes the cos ramp and the incoming head the sin ramp.
    The first clip starts dry and the last ends dry (the live stream never
    ends; offline renders just stop).
    """
    if not segments:
        raise ValueError("cannot mix an empty schedule")
    lens = []
    for samples, entry in segments:
        want = int(round(entry.duration_s * sample_rate))
        if samples.ndim != 1:
            raise ValueError(f"clip {entry.clip_id}: expected mono samples")
        if samples.shape[0] < want:
            raise ValueError(f"clip {entry.clip_id}: {samples.shape[0]} "
                             f"samples < scheduled {want}")
        lens.append(want)

    starts = [0]
    for i in range(1, len(segments)):
        overlap = int(round(segments[i][1].crossfade_in_s * sample_rate))
        overlap = min(overlap, lens[i - 1], lens[i])
        starts.append(starts[i - 1] + lens[i - 1] - overlap)
    total = starts[-1] + lens[-1]
    out = np.zeros(total, dtype=np.float64)

    for i, ((samples, entry), start, n) in enumerate(
            zip(segments, starts, lens)):
        seg = samples[:n].astype(np.float64)
        if i > 0:
            overlap = starts[i - 1] + lens[i - 1] - start
            if overlap > 0:
                _, g_in = crossfade_gains(overlap)
                seg = seg.copy()
                seg[:overlap] *= g_in
        if i + 1 < len(segments):
            overlap = start + n - starts[i + 1]
            if overlap > 0:
                g_out, _ = crossfade_gains(overlap)
                seg = seg.copy()
                seg[n - overlap:] *= g_out
        out[start:start + n] += seg
    return out.astype(np.float32)
