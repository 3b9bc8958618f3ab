"""The self-perpetuating generation loop.

Each step turns the current clip into a lyric line and the line back into
the next clip: condition the line decoder on the clip's latent code, rank
100 candidates and keep one of the top 10, encode it, fuse with the clip
code, let the predictor propose the next clip latent, and retrieve the
nearest catalogue clip under the active instrument mask.

Overrides. A pinned clip replaces the conditioning code until unpinned. A
submitted user line replaces candidate generation for exactly one step. A
live-captured clip replaces the conditioning code for exactly one step and
wins over a pin. Precedence per step: live > pinned > previous clip.

The loop itself is synchronous and single-owner; the hosting service calls
step() one clip ahead of the playback deadline so inference latency hides
under the current clip's tail.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..corpus import AudioClip, ClipRecord, SpectroConfig, compute_mel_spectrogram
from ..models import LatentCode, LyricLine, line_from_text
from ..models.text_cvae import default_heuristic_ranker, rank_and_select
from ..nn import new_generator
from ..retrieval import (DiversityController, IndexError_, next_k, rank,
                         select)
from .feedback import append_feedback
from .schedule import (CROSSFADE_RANGE, DURATION_RANGE, ScheduleEntry,
                       draw_schedule)

log = logging.getLogger(__name__)

MODES = ("autonomous", "live")


@dataclass
class SessionConfig:
    """Artifact paths plus the loop's tunable knobs; JSON on disk."""
    spec_vae: str = "spec_vae.ckpt"
    text_cvae: str = "text_cvae.ckpt"
    gan: str = "gan.ckpt"
    index: str = "catalogue.idx"
    manifest: str = "manifest.ldjson"
    corpus_root: str = "."
    feedback_log: str = "feedback.ldjson"
    seed: int = 0
    mode: str = "autonomous"
    candidates: int = 100
    line_top_k: int = 10
    k_min: int = 1
    k_max: int = 20
    noise_frequency: float = 0.05
    duration_range: tuple = DURATION_RANGE
    crossfade_range: tuple = CROSSFADE_RANGE
    sample_tau: float = 1.0
    step_budget_s: float = 2.0

    FIELDS = ("spec_vae", "text_cvae", "gan", "index", "manifest",
              "corpus_root", "feedback_log", "seed", "mode", "candidates",
              "line_top_k", "k_min", "k_max", "noise_frequency",
              "duration_range", "crossfade_range", "sample_tau",
              "step_budget_s")

    @staticmethod
    def from_file(path) -> "SessionConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(SessionConfig.FIELDS)
        if unknown:
            raise ValueError(f"unknown session config keys {sorted(unknown)}")
        cfg = SessionConfig(**data)
        cfg.duration_range = tuple(cfg.duration_range)
        cfg.crossfade_range = tuple(cfg.crossfade_range)
        return cfg

    def to_file(self, path) -> None:
        data = {k: getattr(self, k) for k in self.FIELDS}
        data["duration_range"] = list(self.duration_range)
        data["crossfade_range"] = list(self.crossfade_range)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class HistoryRecord:
    seq: int
    ts: float
    line_id: str
    clip_id: str
    line_text: str
    line_source: str
    conditioning_clip_id: str
    k: int
    similarity: float | None
    schedule: ScheduleEntry

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "line_id": self.line_id,
                "clip_id": self.clip_id, "line_text": self.line_text,
                "line_source": self.line_source,
                "conditioning_clip_id": self.conditioning_clip_id,
                "k": self.k, "similarity": self.similarity,
                "schedule": self.schedule.to_dict()}


@dataclass
class StepResult:
    line: LyricLine
    clip: ClipRecord
    entry: ScheduleEntry
    record: HistoryRecord
    events: list = field(default_factory=list)    # error/timeout dicts
    elapsed_s: float = 0.0


class Session:
    """Owns all loop state; exactly one caller drives it at a time."""

    def __init__(self, records: list[ClipRecord], index, spec_vae, text_cvae,
                 gan, controller: DiversityController | None = None,
                 seed: int = 0, mode: str = "autonomous",
                 candidates: int = 100, line_top_k: int = 10,
                 duration_range: tuple = DURATION_RANGE,
                 crossfade_range: tuple = CROSSFADE_RANGE,
                 recording_durations: dict | None = None,
                 sample_tau: float = 1.0, step_budget_s: float = 2.0,
                 feedback_log: str | None = None, clock=time.time):
        if not records:
            raise ValueError("session needs a non-empty catalogue")
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; pick from {MODES}")
        missing = {r.clip_id for r in records} - set(index.clip_ids)
        if missing:
            raise ValueError(f"index missing {len(missing)} manifest clips, "
                             f"e.g. {sorted(missing)[:3]}")
        self.records_by_id = {r.clip_id: r for r in records}
        self.index = index
        self.spec_vae = spec_vae
        self.text_cvae = text_cvae
        self.gan = gan
        self.controller = controller or DiversityController()
        self.mode = mode
        self.candidates = candidates
        self.line_top_k = line_top_k
        self.duration_range = tuple(duration_range)
        self.crossfade_range = tuple(crossfade_range)
        self.recording_durations = dict(recording_durations or {})
        self.sample_tau = sample_tau
        self.step_budget_s = step_budget_s
        self.feedback_log = feedback_log
        self.clock = clock
        self.rng = new_generator(seed)
        self._code_pos = {cid: i for i, cid in enumerate(index.clip_ids)}

        self.pinned_clip: ClipRecord | None = None
        self.pending_user_line: LyricLine | None = None
        self._live_code: LatentCode | None = None
        self._selected_clip: ClipRecord | None = None
        self.disabled_tags: set[str] = set()
        self.history: list[HistoryRecord] = []
        self.step_no = 0

        # The loop seeds itself with a random catalogue clip.
        seed_id = index.clip_ids[int(self.rng.integers(len(index.clip_ids)))]
        self.current_clip = self.records_by_id.get(seed_id)
        if self.current_clip is None:
            raise ValueError(f"index clip {seed_id!r} missing from manifest")

    # ------------------------------------------------------------- commands

    def set_mode(self, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; pick from {MODES}")
        self.mode = mode
        if mode == "autonomous":
            self._live_code = None  # stale captures must not leak back in

    def pin_clip(self, clip_id: str | None) -> None:
        if clip_id is None:
            self.pinned_clip = None
            return
        rec = self.records_by_id.get(clip_id)
        if rec is None:
            raise KeyError(f"unknown clip {clip_id!r}")
        self.pinned_clip = rec

    def submit_line(self, text: str) -> LyricLine:
        """Queue a user line; it replaces generation for the next step only.
        A second submission before that step replaces the first."""
        line = line_from_text(text, self.text_cvae.vocab, source="user")
        self.pending_user_line = line
        return line

    def toggle_instrument(self, tag: str, enabled: bool) -> None:
        from ..corpus.manifest import INSTRUMENT_TAGS
        if tag not in INSTRUMENT_TAGS:
            raise ValueError(f"unknown instrument tag {tag!r}")
        if enabled:
            self.disabled_tags.discard(tag)
        else:
            self.disabled_tags.add(tag)

    def set_diversity(self, mode: str, k: int | None = None) -> None:
        if mode == "manual":
            if k is None:
                raise ValueError("manual diversity needs k")
            self.controller = replace(self.controller, mode="manual",
                                      manual_k=int(k))
        elif mode == "auto-perlin":
            self.controller = replace(self.controller, mode="auto-perlin")
        else:
            raise ValueError(f"unknown diversity mode {mode!r}")

    def select_past_clip(self, clip_id: str) -> None:
        """Queue a previously played clip to replace the next predicted
        clip. The lyric step still runs; only retrieval is bypassed."""
        if not any(r.clip_id == clip_id for r in self.history):
            raise KeyError(f"clip {clip_id!r} was never played")
        self._selected_clip = self.records_by_id[clip_id]

    def like_line(self, line_id: str) -> dict:
        """Persist a liked line with its conditioning clip before returning."""
        for rec in reversed(self.history):
            if rec.line_id == line_id:
                if self.feedback_log is None:
                    raise ValueError("session has no feedback log configured")
                return append_feedback(self.feedback_log, rec.line_text,
                                       rec.conditioning_clip_id,
                                       ts=self.clock(), line_id=line_id)
        raise KeyError(f"unknown line id {line_id!r}")

    # ------------------------------------------------------------- live mode

    def ingest_live_clip(self, audio: AudioClip) -> LatentCode:
        """Encode a captured clip; its code conditions the next step."""
        if self.mode != "live":
            raise ValueError("live clips are only accepted in live mode")
        duration = audio.samples.shape[0] / audio.sample_rate
        if not 5.0 <= duration <= 15.0:
            raise ValueError(f"live capture should be a ten-second window, "
                             f"got {duration:.1f}s")
        spec = compute_mel_spectrogram(audio, SpectroConfig())
        dist = self.spec_vae.encode_spectrogram(spec)
        code = LatentCode(z=dist.mean.copy(), origin="spec") \
            if self.sample_tau == 0.0 else \
            self._sample(dist, origin="spec")
        self._live_code = code
        return code

    def _sample(self, dist, origin: str) -> LatentCode:
        from ..models import sample_latent
        return sample_latent(dist, self.sample_tau, self.rng, origin=origin)

    # ------------------------------------------------------------- the loop

    def clip_code(self, clip_id: str) -> LatentCode:
        pos = self._code_pos.get(clip_id)
        if pos is None:
            raise KeyError(f"clip {clip_id!r} not in the index")
        return LatentCode(z=self.index.codes[pos].copy(), origin="spec")

    def _conditioning(self) -> tuple[str, LatentCode]:
        """live > pinned > previous; at most one override per step."""
        if self._live_code is not None:
            code = self._live_code
            self._live_code = None
            return "live", code
        if self.pinned_clip is not None:
            return self.pinned_clip.clip_id, self.clip_code(
                self.pinned_clip.clip_id)
        return self.current_clip.clip_id, self.clip_code(
            self.current_clip.clip_id)

    def step(self) -> StepResult:
        t0 = time.perf_counter()
        events: list[dict] = []
        cond_id, cond_code = self._conditioning()

        if self.pending_user_line is not None:
            line = replace(self.pending_user_line, conditioning_clip_id=cond_id)
            self.pending_user_line = None
        else:
            lines = self.text_cvae.generate_lines(
                cond_code, count=self.candidates, rng=self.rng,
                conditioning_clip_id=cond_id)
            line = rank_and_select(lines, default_heuristic_ranker,
                                   k=self.line_top_k, rng=self.rng)

        z_t = self._sample(self.text_cvae.encode_line(line, cond_code),
                           origin="text")
        z_hat = self.gan.predict_next(cond_code, z_t)

        k = next_k(self.controller, self.step_no)
        if self._selected_clip is not None:
            # A user-selected past clip overrides the prediction once.
            clip, similarity = self._selected_clip, None
            self._selected_clip = None
        else:
            try:
                ranked = rank(z_hat, self.index,
                              exclude_tags=self.disabled_tags)
                chosen_id = select(ranked, k, "topK", self.rng)
                similarity = dict(ranked)[chosen_id]
                clip = self.records_by_id[chosen_id]
            except IndexError_ as exc:
                # Never starve the stream: keep the current clip and tell
                # the UI.
                events.append({"kind": "error", "text": str(exc)})
                clip, similarity = self.current_clip, None

        entry = draw_schedule(
            clip, self._available_s(clip), self.rng,
            duration_range=self.duration_range,
            crossfade_range=self.crossfade_range)

        self.current_clip = clip
        seq = self.step_no
        record = HistoryRecord(
            seq=seq, ts=self.clock(), line_id=f"line-{seq:06d}",
            clip_id=clip.clip_id, line_text=line.text,
            line_source=line.source, conditioning_clip_id=cond_id,
            k=k, similarity=similarity, schedule=entry)
        self.history.append(record)
        self.step_no += 1

        elapsed = time.perf_counter() - t0
        if elapsed > self.step_budget_s:
            log.warning("step %d took %.2fs (budget %.2fs)", seq, elapsed,
                        self.step_budget_s)
            events.append({"kind": "timeout", "seq": seq,
                           "elapsed_s": elapsed})
        return StepResult(line=line, clip=clip, entry=entry, record=record,
                          events=events, elapsed_s=elapsed)

    def _available_s(self, clip: ClipRecord) -> float:
        total = self.recording_durations.get(clip.recording_id)
        if total is None:
            return self.duration_range[1]  # no source metadata: allow a full draw
        return total - clip.offset_s


def probe_recording_durations(recordings_dir) -> dict[str, float]:
    """Seconds of audio per recording id, from WAV headers (mmap, no data
    read)."""
    from scipy.io import wavfile
    out: dict[str, float] = {}
    root = Path(recordings_dir)
    for path in sorted(root.glob("*.wav")):
        rate, data = wavfile.read(path, mmap=True)
        out[path.stem] = data.shape[0] / rate
    return out
