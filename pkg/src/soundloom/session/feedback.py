"""Append-only feedback log: one JSON object per line.

Liked lines are flushed and fsynced before the caller acknowledges them;
losing a like on a crash would silently bias any later fine-tuning corpus.
"""

from __future__ import annotations

import json
import os
import time


def append_feedback(path, line_text: str, clip_id: str | None,
                    ts: float | None = None, line_id: str | None = None) -> dict:
    record = {"ts": time.time() if ts is None else ts,
              "line": line_text, "clip_id": clip_id}
    if line_id is not None:
        record["line_id"] = line_id
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    return record


def read_feedback(path) -> list[dict]:
    if not os.path.exists(path):
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
