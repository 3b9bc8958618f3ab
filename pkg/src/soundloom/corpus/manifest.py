"""Catalogue manifest: one ClipRecord per clip, line-delimited JSON."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

INSTRUMENT_TAGS = ("drone", "percussion", "keyboard", "guitar")


class ManifestError(ValueError):
    pass


@dataclass
class ClipRecord:
    clip_id: str
    composition_id: str
    instrument_tags: list[str]
    recording_id: str
    offset_s: float
    spectrogram_path: str

    def __post_init__(self):
        if not self.instrument_tags:
            raise ManifestError(f"clip {self.clip_id}: instrument_tags empty")
        bad = [t for t in self.instrument_tags if t not in INSTRUMENT_TAGS]
        if bad:
            raise ManifestError(f"clip {self.clip_id}: unknown instrument tags {bad}")


def clip_file_name(recording_id: str, offset_s: float) -> str:
    return f"{recording_id}__{int(round(offset_s * 1000)):09d}"


def build_manifest(clip_dir, annotations: dict[str, list[str]]) -> list[ClipRecord]:
    """Scan a directory of clip WAVs and attach composition-level annotations.

    Clip files are named ``<recording_id>__<offset_ms>.wav``; the composition
    id equals the recording id. A recording without an annotation is a hard
    error, as is a duplicate clip id.
    """
    records: list[ClipRecord] = []
    seen: set[str] = set()
    names = sorted(n for n in os.listdir(clip_dir) if n.endswith(".wav"))
    for name in names:
        stem = name[:-4]
        if stem in seen:
            raise ManifestError(f"duplicate clip id {stem!r}")
        seen.add(stem)
        if "__" not in stem:
            raise ManifestError(f"clip file {name!r} not named <recording>__<offset_ms>.wav")
        recording_id, offset_part = stem.rsplit("__", 1)
        try:
            offset_s = int(offset_part) / 1000.0
        except ValueError:
            raise ManifestError(f"clip file {name!r}: bad offset field {offset_part!r}")
        if recording_id not in annotations:
            raise ManifestError(
                f"composition {recording_id!r} has no instrument annotation")
        records.append(ClipRecord(
            clip_id=stem,
            composition_id=recording_id,
            instrument_tags=list(annotations[recording_id]),
            recording_id=recording_id,
            offset_s=offset_s,
            spectrogram_path=os.path.join("spectrograms", stem + ".mel"),
        ))
    return records


def write_manifest(path, records: list[ClipRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_manifest(path) -> list[ClipRecord]:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = ClipRecord(**json.loads(line))
            if rec.clip_id in seen:
                raise ManifestError(f"duplicate clip id {rec.clip_id!r} in manifest")
            seen.add(rec.clip_id)
            records.append(rec)
    return records
