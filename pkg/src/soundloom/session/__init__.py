"""Generation loop, stream scheduling, and feedback logging."""

from .engine import (
    MODES,
    HistoryRecord,
    Session,
    SessionConfig,
    StepResult,
    probe_recording_durations,
)
from .feedback import append_feedback, read_feedback
from .schedule import (
    CROSSFADE_RANGE,
    DURATION_RANGE,
    ScheduleEntry,
    crossfade_gains,
    draw_schedule,
    mix_stream,
)

__all__ = [
    "MODES",
    "HistoryRecord",
    "Session",
    "SessionConfig",
    "StepResult",
    "probe_recording_durations",
    "append_feedback",
    "read_feedback",
    "CROSSFADE_RANGE",
    "DURATION_RANGE",
    "ScheduleEntry",
    "crossfade_gains",
    "draw_schedule",
    "mix_stream",
]
