"""Network boundary: duplex command/event channel, HTTP catalogue + audio,
and the hosted generation loop."""

from .app import ClipAudioStore, build_app, parse_range
from .frames import (FrameError, MAX_FRAME_BYTES, decode_payload,
                     encode_frame, read_frame, write_frame)
from .host import (Connection, SessionHost, decode_pcm_chunk, event_to_wire)
from .messages import (COMMAND_KINDS, EVENT_KINDS, CommandMessage,
                       EventMessage)
from .runtime import (ENV_OVERRIDES, Runtime, ServiceConfig, load_runtime,
                      serve, serve_async, tcp_connection)

__all__ = [
    "ClipAudioStore", "build_app", "parse_range",
    "FrameError", "MAX_FRAME_BYTES", "decode_payload", "encode_frame",
    "read_frame", "write_frame",
    "Connection", "SessionHost", "decode_pcm_chunk", "event_to_wire",
    "COMMAND_KINDS", "EVENT_KINDS", "CommandMessage", "EventMessage",
    "ENV_OVERRIDES", "Runtime", "ServiceConfig", "load_runtime", "serve",
    "serve_async", "tcp_connection",
]
