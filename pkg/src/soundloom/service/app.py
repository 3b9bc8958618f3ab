"""HTTP surface: catalogue manifest, clip audio with Range support, session
history, plus a WebSocket carrying the same command/event messages as the
TCP channel (browsers cannot open raw sockets; WebSocket framing replaces
the length prefix, one JSON message per text frame)."""

from __future__ import annotations

import io
import logging
from collections import OrderedDict
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect

from .host import Connection, SessionHost, event_to_wire

log = logging.getLogger(__name__)

AUDIO_CACHE_ENTRIES = 32


class ClipAudioStore:
    """Renders scheduled playback regions out of the source recordings.

    A clip indexes a fixed 10 s window, but schedules may play up to 40 s
    starting at the clip's offset, so audio is cut from the recording, not
    from the clip file."""

    def __init__(self, records, corpus_root):
        self.records = {r.clip_id: r for r in records}
        self.recordings_dir = Path(corpus_root) / "recordings"
        self._cache: OrderedDict[tuple, bytes] = OrderedDict()

    def render(self, clip_id: str, duration_s: float | None) -> bytes:
        from scipy.io import wavfile

        rec = self.records.get(clip_id)
        if rec is None:
            raise KeyError(f"unknown clip {clip_id!r}")
        if duration_s is None:
            duration_s = 10.0
        if not 0.0 < duration_s <= 40.0:
            raise ValueError(f"duration_s {duration_s} outside (0, 40]")
        key = (clip_id, round(duration_s * 1000))
        cached = self._cache.get(key)
        if cached is not None:
            self._cache.move_to_end(key)
            return cached
        path = self.recordings_dir / f"{rec.recording_id}.wav"
        if not path.exists():
            raise FileNotFoundError(f"recording {rec.recording_id!r} missing")
        rate, data = wavfile.read(path, mmap=True)
        start = int(round(rec.offset_s * rate))
        stop = min(start + int(round(duration_s * rate)), data.shape[0])
        if start >= data.shape[0]:
            raise ValueError(f"clip {clip_id!r} starts past the recording")
        buf = io.BytesIO()
        wavfile.write(buf, rate, np.ascontiguousarray(data[start:stop]))
        body = buf.getvalue()
        self._cache[key] = body
        while len(self._cache) > AUDIO_CACHE_ENTRIES:
            self._cache.popitem(last=False)
        return body


def parse_range(header: str, total: int) -> tuple[int, int] | None:
    """First byte range of a 'bytes=' header, or None if unsatisfiable.
    Multi-range requests fall back to the first range (single-part reply)."""
    if not header.startswith("bytes="):
        return None
    spec = header[len("bytes="):].split(",")[0].strip()
    if "-" not in spec:
        return None
    start_s, _, end_s = spec.partition("-")
    try:
        if start_s == "":
            suffix = int(end_s)
            if suffix <= 0:
                return None
            return max(0, total - suffix), total - 1
        start = int(start_s)
        end = int(end_s) if end_s else total - 1
    except ValueError:
        return None
    end = min(end, total - 1)
    if start > end or start >= total:
        return None
    return start, end


def build_app(host: SessionHost, records, corpus_root) -> FastAPI:
    app = FastAPI(title="soundloom", docs_url=None, redoc_url=None)
    store = ClipAudioStore(records, corpus_root)

    @app.get("/manifest")
    def manifest() -> dict:
        return {"clips": [asdict(r) for r in records]}

    @app.get("/history")
    def history() -> dict:
        return {"history": host.history_snapshot()}

    @app.get("/clips/{clip_id}.wav")
    def clip_audio(clip_id: str, request: Request,
                   duration_s: float | None = None) -> Response:
        try:
            body = store.render(clip_id, duration_s)
        except KeyError:
            return Response(status_code=404, content=f"no clip {clip_id!r}")
        except (ValueError, FileNotFoundError) as exc:
            return Response(status_code=422, content=str(exc))
        total = len(body)
        base = {"Accept-Ranges": "bytes"}
        range_header = request.headers.get("range")
        if range_header is None:
            return Response(content=body, media_type="audio/wav",
                            headers=base)
        span = parse_range(range_header, total)
        if span is None:
            return Response(status_code=416,
                            headers={**base,
                                     "Content-Range": f"bytes */{total}"})
        start, end = span
        return Response(
            content=body[start:end + 1], status_code=206,
            media_type="audio/wav",
            headers={**base,
                     "Content-Range": f"bytes {start}-{end}/{total}"})

    @app.websocket("/ws")
    async def ws_channel(ws: WebSocket) -> None:
        import asyncio
        import json

        await ws.accept()
        conn = Connection(host)

        async def pump_events():
            while True:
                event = await conn.out.get()
                await ws.send_text(json.dumps(event_to_wire(event),
                                              sort_keys=True))

        sender = asyncio.ensure_future(pump_events())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    payload = json.loads(raw)
                    if not isinstance(payload, dict):
                        raise ValueError("message must be a JSON object")
                except ValueError as exc:
                    host.reply(conn.out, "error",
                               text=f"malformed frame: {exc}")
                    continue
                await conn.handle_payload(payload)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            conn.close()

    return app
