"""Wire message schemas.

One flat JSON object per frame in both directions. Commands carry a
client-chosen request_id echoed back on exactly one ack or error reply;
events carry a per-connection monotone seq.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

COMMAND_KINDS = ("set_mode", "set_diversity", "toggle_instrument",
                 "pin_clip", "submit_line", "select_past_clip", "like_line",
                 "live_audio_chunk")
EVENT_KINDS = ("now_playing", "lyric_line", "history_snapshot", "error",
               "ack")


class CommandMessage(BaseModel):
    """Client -> server. Payload fields are kind-specific; the rest stay
    null."""
    model_config = ConfigDict(extra="forbid")

    kind: str
    request_id: str
    mode: Optional[str] = None        # set_mode: autonomous|live;
                                      # set_diversity: auto|manual
    k: Optional[int] = None           # set_diversity manual value
    tag: Optional[str] = None         # toggle_instrument
    on: Optional[bool] = None         # toggle_instrument
    clip_id: Optional[str] = None     # pin_clip (null unpins),
                                      # select_past_clip
    text: Optional[str] = None        # submit_line
    line_id: Optional[str] = None     # like_line
    seq: Optional[int] = None         # live_audio_chunk, strictly increasing
    pcm: Optional[str] = None         # base64 little-endian int16 mono
    sample_rate: int = 22050


class EventMessage(BaseModel):
    """Server -> client; seq strictly increases per connection."""
    model_config = ConfigDict(extra="forbid")

    seq: int
    kind: str
    ts: float
    clip_id: Optional[str] = None            # now_playing
    instruments: Optional[list] = None       # now_playing
    schedule: Optional[dict] = None          # now_playing
    line_id: Optional[str] = None            # lyric_line
    text: Optional[str] = None               # lyric_line, error
    history: Optional[list] = None           # history_snapshot
    request_id: Optional[str] = None         # ack, error (when replying)
