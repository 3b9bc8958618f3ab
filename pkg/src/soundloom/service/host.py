"""Hosts one generation loop for many concurrent clients.

The loop task owns the Session exclusively. Commands from every connection
funnel into one queue and are applied only between steps, so no session
state is ever touched concurrently; step() itself runs in a worker thread
to keep acks and HTTP traffic responsive while inference runs.

Every connection gets one outbound queue carrying its command replies and
the shared event broadcasts; enqueue order fixes the per-connection seq
order. A new subscriber atomically receives history_snapshot + now_playing
before any later broadcast, which is the documented handshake.
"""

from __future__ import annotations

import asyncio
import base64
import logging
import time

import numpy as np

from ..corpus import AudioClip
from ..session import Session, StepResult
from .messages import COMMAND_KINDS, CommandMessage, EventMessage

log = logging.getLogger(__name__)

PACING_MODES = ("interval", "schedule")


class SessionHost:
    def __init__(self, session: Session, step_interval_s: float = 0.5,
                 pacing: str = "interval"):
        if pacing not in PACING_MODES:
            raise ValueError(f"unknown pacing {pacing!r}; "
                             f"pick from {PACING_MODES}")
        self.session = session
        self.step_interval_s = step_interval_s
        self.pacing = pacing
        self._commands: asyncio.Queue = asyncio.Queue()
        self._subscribers: set[asyncio.Queue] = set()
        self._event_seq = 0
        self._history_cache: list[dict] = []
        self._now_playing: dict | None = None
        self._stopping = False
        self._primed = False
        self.steps_done = 0

    # ------------------------------------------------------------ events

    def _make_event(self, kind: str, **fields) -> EventMessage:
        self._event_seq += 1
        return EventMessage(seq=self._event_seq, kind=kind, ts=time.time(),
                            **fields)

    def _broadcast(self, kind: str, **fields) -> None:
        for q in self._subscribers:
            q.put_nowait(self._make_event(kind, **fields))

    def reply(self, out: asyncio.Queue, kind: str, **fields) -> None:
        """Queue an ack or error for one connection."""
        out.put_nowait(self._make_event(kind, **fields))

    def subscribe(self) -> asyncio.Queue:
        """Register a connection; its queue starts with the handshake pair.
        No awaits: the handshake and registration are atomic on the loop."""
        q: asyncio.Queue = asyncio.Queue()
        self._subscribers.add(q)
        q.put_nowait(self._make_event("history_snapshot",
                                      history=list(self._history_cache)))
        if self._now_playing is not None:
            q.put_nowait(self._make_event("now_playing", **self._now_playing))
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        self._subscribers.discard(q)

    def history_snapshot(self) -> list[dict]:
        return list(self._history_cache)

    # ------------------------------------------------------------ stepping

    def _publish_step(self, result: StepResult) -> None:
        record = result.record
        self._history_cache.append(record.to_dict())
        self._now_playing = {
            "clip_id": result.clip.clip_id,
            "instruments": list(result.clip.instrument_tags),
            "schedule": result.entry.to_dict(),
        }
        for ev in result.events:
            text = ev.get("text") or f"step {ev.get('seq')} exceeded the " \
                                     f"latency budget"
            self._broadcast("error", text=text)
        self._broadcast("lyric_line", line_id=record.line_id,
                        text=record.line_text)
        self._broadcast("now_playing", **self._now_playing)
        self.steps_done += 1

    def prime(self) -> None:
        """Run the first step before serving so now_playing always exists."""
        if not self._primed:
            self._publish_step(self.session.step())
            self._primed = True

    def _interval_after(self, result: StepResult) -> float:
        if self.pacing == "interval":
            return self.step_interval_s
        # Realtime pacing: the next clip must be ready when this one starts
        # fading out; step early by the fade span plus a safety margin.
        entry = result.entry
        return max(0.5, entry.duration_s - entry.crossfade_out_s - 1.0)

    async def run(self) -> None:
        """Apply queued commands between steps; step when the pacer says."""
        self.prime()
        due = time.monotonic() + self._interval_after_last()
        while not self._stopping:
            timeout = max(0.0, due - time.monotonic())
            try:
                item = await asyncio.wait_for(self._commands.get(), timeout)
            except asyncio.TimeoutError:
                result = await asyncio.to_thread(self.session.step)
                self._publish_step(result)
                due = time.monotonic() + self._interval_after(result)
                continue
            if item is None:      # stop sentinel
                break
            await self._apply(*item)

    def _interval_after_last(self) -> float:
        if self.pacing == "interval" or not self.session.history:
            return self.step_interval_s
        entry = self.session.history[-1].schedule
        return max(0.5, entry.duration_s - entry.crossfade_out_s - 1.0)

    async def stop(self) -> None:
        self._stopping = True
        self._commands.put_nowait(None)

    # ------------------------------------------------------------ commands

    async def submit(self, cmd: CommandMessage, out: asyncio.Queue,
                     audio: AudioClip | None = None) -> None:
        await self._commands.put((cmd, out, audio))

    async def _apply(self, cmd: CommandMessage, out: asyncio.Queue,
                     audio: AudioClip | None) -> None:
        try:
            if cmd.kind == "set_mode":
                self.session.set_mode(cmd.mode)
            elif cmd.kind == "set_diversity":
                mode = {"auto": "auto-perlin", "manual": "manual"}.get(cmd.mode)
                if mode is None:
                    raise ValueError(
                        f"diversity mode must be auto or manual, "
                        f"got {cmd.mode!r}")
                self.session.set_diversity(mode, cmd.k)
            elif cmd.kind == "toggle_instrument":
                if cmd.tag is None or cmd.on is None:
                    raise ValueError("toggle_instrument needs tag and on")
                self.session.toggle_instrument(cmd.tag, cmd.on)
            elif cmd.kind == "pin_clip":
                self.session.pin_clip(cmd.clip_id)
            elif cmd.kind == "submit_line":
                if not cmd.text:
                    raise ValueError("submit_line needs text")
                self.session.submit_line(cmd.text)
            elif cmd.kind == "select_past_clip":
                if cmd.clip_id is None:
                    raise ValueError("select_past_clip needs clip_id")
                self.session.select_past_clip(cmd.clip_id)
            elif cmd.kind == "like_line":
                if cmd.line_id is None:
                    raise ValueError("like_line needs line_id")
                # Durable append happens inside; the ack below follows it.
                await asyncio.to_thread(self.session.like_line, cmd.line_id)
            elif cmd.kind == "live_audio_chunk":
                if audio is None:
                    raise ValueError("live_audio_chunk carried no audio")
                await asyncio.to_thread(self.session.ingest_live_clip, audio)
            else:
                raise ValueError(f"unknown command kind {cmd.kind!r}")
        except (ValueError, KeyError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            self.reply(out, "error", text=str(msg), request_id=cmd.request_id)
            return
        self.reply(out, "ack", request_id=cmd.request_id)


def decode_pcm_chunk(cmd: CommandMessage) -> AudioClip:
    """Base64 little-endian int16 mono -> AudioClip in [-1, 1]."""
    if cmd.pcm is None or cmd.seq is None:
        raise ValueError("live_audio_chunk needs seq and pcm")
    try:
        raw = base64.b64decode(cmd.pcm, validate=True)
    except Exception as exc:
        raise ValueError(f"pcm is not valid base64: {exc}") from exc
    if len(raw) % 2 != 0:
        raise ValueError("pcm byte count is odd; expected 16-bit samples")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return AudioClip(samples=samples, sample_rate=cmd.sample_rate,
                     recording_id=f"live-{cmd.seq}")


class Connection:
    """Transport-agnostic protocol logic shared by TCP and WebSocket."""

    def __init__(self, host: SessionHost):
        self.host = host
        self.out = host.subscribe()
        self.last_live_seq: int | None = None

    def close(self) -> None:
        self.host.unsubscribe(self.out)

    async def handle_payload(self, payload: dict) -> None:
        request_id = payload.get("request_id")
        request_id = request_id if isinstance(request_id, str) else None
        try:
            cmd = CommandMessage(**payload)
        except Exception as exc:
            self.host.reply(self.out, "error",
                            text=f"malformed command: {exc}",
                            request_id=request_id)
            return
        if cmd.kind not in COMMAND_KINDS:
            self.host.reply(self.out, "error",
                            text=f"unknown command kind {cmd.kind!r}",
                            request_id=cmd.request_id)
            return
        audio = None
        if cmd.kind == "live_audio_chunk":
            try:
                audio = decode_pcm_chunk(cmd)
                if self.last_live_seq is not None \
                        and cmd.seq <= self.last_live_seq:
                    raise ValueError(
                        f"live chunk seq {cmd.seq} is not after "
                        f"{self.last_live_seq}")
                self.last_live_seq = cmd.seq
            except ValueError as exc:
                self.host.reply(self.out, "error", text=str(exc),
                                request_id=cmd.request_id)
                return
        await self.host.submit(cmd, self.out, audio)


def event_to_wire(event: EventMessage) -> dict:
    """Drop null fields so frames stay small and kind-specific."""
    return {k: v for k, v in event.model_dump().items() if v is not None}
