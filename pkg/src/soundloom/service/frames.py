"""Length-prefixed JSON framing for the duplex TCP channel.

Each frame is a 4-byte big-endian byte length followed by that many bytes
of UTF-8 JSON. The prefix caps frames at 16 MiB; a 10 s PCM chunk encodes
to ~0.6 MiB of base64, so the cap leaves a wide margin without letting a
corrupt prefix allocate gigabytes.
"""

from __future__ import annotations

import asyncio
import json
import struct

MAX_FRAME_BYTES = 16 * 1024 * 1024


class FrameError(ValueError):
    """Malformed frame: oversized, truncated, or not a JSON object."""


def encode_frame(payload: dict) -> bytes:
    data = json.dumps(payload, sort_keys=True).encode("utf-8")
    if len(data) > MAX_FRAME_BYTES:
        raise FrameError(f"frame of {len(data)} bytes exceeds the "
                         f"{MAX_FRAME_BYTES} cap")
    return struct.pack(">I", len(data)) + data


def decode_payload(data: bytes) -> dict:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"frame is not UTF-8 JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FrameError("frame must be a JSON object")
    return payload


async def read_frame(reader: asyncio.StreamReader) -> dict | None:
    """Next frame, or None on a clean EOF at a frame boundary."""
    try:
        prefix = await reader.readexactly(4)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise FrameError("connection closed mid-prefix") from exc
    (length,) = struct.unpack(">I", prefix)
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"frame length {length} exceeds the "
                         f"{MAX_FRAME_BYTES} cap")
    try:
        data = await reader.readexactly(length)
    except asyncio.IncompleteReadError as exc:
        raise FrameError("connection closed mid-frame") from exc
    return decode_payload(data)


async def write_frame(writer: asyncio.StreamWriter, payload: dict) -> None:
    writer.write(encode_frame(payload))
    await writer.drain()
