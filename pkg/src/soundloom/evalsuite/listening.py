"""Listening-test export: paired one-minute segments where one side comes
from the generation loop and the other from uniform-random clip picks,
shuffled within each pair, with the answer key written separately."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..corpus import load_wav, save_wav
from ..nn import new_generator
from ..session import (Session, ScheduleEntry, draw_schedule, mix_stream,
                       probe_recording_durations)


class _RecordingCache:
    """Keeps decoded recordings around while one export runs."""

    def __init__(self, recordings_dir):
        self.dir = Path(recordings_dir)
        self._cache: dict[str, object] = {}

    def get(self, recording_id: str):
        if recording_id not in self._cache:
            self._cache[recording_id] = load_wav(
                self.dir / f"{recording_id}.wav", recording_id=recording_id)
        return self._cache[recording_id]


def _cut(cache: _RecordingCache, entry: ScheduleEntry) -> tuple[np.ndarray, int]:
    rec = cache.get(entry.recording_id)
    rate = rec.sample_rate
    start = int(round(entry.offset_s * rate))
    want = int(round(entry.duration_s * rate))
    piece = rec.samples[start:start + want]
    if piece.shape[0] < want:
        # A schedule can overshoot the file tail by rounding; silence-pad
        # rather than rejecting the whole export.
        piece = np.concatenate(
            [piece, np.zeros(want - piece.shape[0], np.float32)])
    return piece, rate


def _rendered_samples(lens: list[int], overlaps: list[int]) -> int:
    return sum(lens) - sum(overlaps)


def render_segment(entries: list[ScheduleEntry], cache: _RecordingCache,
                   duration_s: float) -> tuple[np.ndarray, int]:
    """Mix a schedule and cut it to exactly duration_s."""
    segments = []
    rate = None
    for entry in entries:
        piece, r = _cut(cache, entry)
        if rate is None:
            rate = r
        elif r != rate:
            raise ValueError(f"sample-rate mismatch: {r} vs {rate}")
        segments.append((piece, entry))
    mixed = mix_stream(segments, rate)
    want = int(round(duration_s * rate))
    if mixed.shape[0] < want:
        raise ValueError(f"segment too short: {mixed.shape[0]} < {want}")
    return mixed[:want], rate


def _segment_lengths(entries: list[ScheduleEntry], rate: int) -> int:
    lens = [int(round(e.duration_s * rate)) for e in entries]
    total = 0
    for i, n in enumerate(lens):
        if i == 0:
            total = n
            continue
        overlap = min(int(round(entries[i].crossfade_in_s * rate)),
                      lens[i - 1], n)
        total += n - overlap
    return total


def _collect_loop_entries(session: Session, cache: _RecordingCache,
                          duration_s: float) -> list[ScheduleEntry]:
    entries: list[ScheduleEntry] = []
    rate = None
    while True:
        result = session.step()
        entries.append(result.entry)
        if rate is None:
            rate = cache.get(result.entry.recording_id).sample_rate
        if _segment_lengths(entries, rate) >= int(round(duration_s * rate)):
            return entries


def _collect_random_entries(records, durations, rng, rate_probe,
                            duration_s: float) -> list[ScheduleEntry]:
    entries: list[ScheduleEntry] = []
    rate = None
    while True:
        clip = records[int(rng.integers(len(records)))]
        available = durations.get(clip.recording_id)
        available = (available - clip.offset_s if available is not None
                     else None)
        entries.append(draw_schedule(
            clip, available if available is not None else 40.0, rng))
        if rate is None:
            rate = rate_probe.get(entries[0].recording_id).sample_rate
        if _segment_lengths(entries, rate) >= int(round(duration_s * rate)):
            return entries


def export_listening_pairs(session: Session, records, corpus_root,
                           out_dir, count: int = 30,
                           duration_s: float = 60.0,
                           seed: int = 0) -> list[dict]:
    """Write count pairs (2 * count WAVs) plus answer_key.json.

    Side "test" renders consecutive windows of the loop's own stream;
    side "control" renders uniform-random clip picks with the same
    schedule-drawing rules. Which side lands in file _a is a fair coin
    per pair; the key records where the loop's segment went.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recordings_dir = Path(corpus_root) / "recordings"
    cache = _RecordingCache(recordings_dir)
    durations = probe_recording_durations(recordings_dir)
    rng = new_generator(seed)

    key = []
    for i in range(count):
        test_entries = _collect_loop_entries(session, cache, duration_s)
        control_entries = _collect_random_entries(records, durations, rng,
                                                  cache, duration_s)
        test_audio, rate = render_segment(test_entries, cache, duration_s)
        control_audio, c_rate = render_segment(control_entries, cache,
                                               duration_s)
        if c_rate != rate:
            raise ValueError(f"pair {i}: rate mismatch {c_rate} vs {rate}")
        test_slot = "a" if rng.integers(2) == 0 else "b"
        sides = {test_slot: test_audio,
                 ("b" if test_slot == "a" else "a"): control_audio}
        files = {}
        for slot in ("a", "b"):
            name = f"pair{i:02d}_{slot}.wav"
            save_wav(out / name, sides[slot], rate)
            files[slot] = name
        key.append({"pair": i, "test": test_slot, "files": files})

    with open(out / "answer_key.json", "w", encoding="utf-8") as fh:
        json.dump(key, fh, indent=2)
        fh.write("\n")
    return key
