"""Exact cosine retrieval over the clip catalogue.

One latent code per clip, sampled from the audio model's posterior once at
build time (tau=0 stores the posterior means for fully deterministic
indexes). Search is an exact scan: catalogue sizes here (hundreds to tens
of thousands of 128-dim vectors) need no approximate structures, and
exactness is what makes the brute-force equivalence property testable.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from ..models.latents import LATENT_DIM, LatentCode
from ..nn import new_generator

log = logging.getLogger(__name__)

SELECT_STRATEGIES = ("argmax", "topK")


class IndexError_(Exception):
    """Raised for malformed index files and over-restrictive filters."""


class LatentIndex:
    """Immutable (clip_id, code) catalogue with unit-normalized copies."""

    def __init__(self, clip_ids: list[str], codes: np.ndarray,
                 tags_by_clip: dict[str, tuple] | None = None):
        codes = np.asarray(codes, dtype=np.float32)
        if codes.ndim != 2 or codes.shape[0] != len(clip_ids):
            raise ValueError(
                f"codes {codes.shape} do not match {len(clip_ids)} clip ids")
        if not np.all(np.isfinite(codes)):
            raise ValueError("index codes must be finite")
        if len(set(clip_ids)) != len(clip_ids):
            raise ValueError("duplicate clip ids in index")
        self.clip_ids = list(clip_ids)
        self.codes = codes
        norms = np.linalg.norm(codes, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            zero = clip_ids[int(np.argmin(norms))]
            raise ValueError(f"clip {zero!r} has a zero latent code")
        self.unit = codes / norms
        self.tags_by_clip = {cid: tuple(tags_by_clip.get(cid, ()))
                             for cid in clip_ids} if tags_by_clip else \
            {cid: () for cid in clip_ids}
        # Sort clip ids once; ranking ties break by ascending clip_id.
        self._id_order = np.array(
            sorted(range(len(clip_ids)), key=lambda i: clip_ids[i]))

    def __len__(self) -> int:
        return len(self.clip_ids)

    def attach_tags(self, records) -> None:
        """Adopt instrument tags from manifest records (needed after loading
        an index file, which stores codes only)."""
        by_id = {r.clip_id: tuple(r.instrument_tags) for r in records}
        self.tags_by_clip = {cid: by_id.get(cid, ()) for cid in self.clip_ids}


def build_index(records, corpus_root, spec_vae, tau: float = 1.0,
                seed: int = 0) -> LatentIndex:
    """Encode every manifest clip and sample its latent once."""
    from ..corpus import load_spectrogram

    root = Path(corpus_root)
    rng = new_generator(seed)
    clip_ids, codes, tags = [], [], {}
    for rec in records:
        spec = load_spectrogram(root / rec.spectrogram_path)
        dist = spec_vae.encode_spectrogram(spec)
        if tau == 0.0:
            z = dist.mean.copy()
        else:
            eps = rng.standard_normal(dist.mean.shape).astype(dist.mean.dtype)
            z = dist.mean + tau * eps * np.exp(dist.log_sigma)
        clip_ids.append(rec.clip_id)
        codes.append(z)
        tags[rec.clip_id] = tuple(rec.instrument_tags)
    if not clip_ids:
        raise ValueError("cannot build an index from an empty manifest")
    return LatentIndex(clip_ids, np.stack(codes), tags)


def rank(query, index: LatentIndex,
         exclude_tags=frozenset()) -> list[tuple[str, float]]:
    """All clips by descending cosine to the query; ties by ascending
    clip_id. Clips carrying any excluded instrument tag are dropped."""
    q = query.z if isinstance(query, LatentCode) else np.asarray(query)
    q = q.astype(np.float32, copy=False)
    if q.shape != (index.codes.shape[1],):
        raise ValueError(f"query shape {q.shape} vs index dim "
                         f"{index.codes.shape[1]}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query must be finite")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ValueError("query must be nonzero")
    excluded = frozenset(exclude_tags)
    if excluded:
        keep = np.array([not excluded.intersection(index.tags_by_clip[cid])
                         for cid in index.clip_ids])
        if not keep.any():
            raise IndexError_(
                f"instrument filter {sorted(excluded)} excludes every clip")
        idx = np.flatnonzero(keep)
    else:
        idx = np.arange(len(index.clip_ids))
    cos = index.unit[idx] @ (q / norm)
    ids = np.array([index.clip_ids[i] for i in idx])
    # lexsort: last key is primary -> descending cosine, then ascending id.
    order = np.lexsort((ids, -cos))
    return [(str(ids[i]), float(cos[i])) for i in order]


def select(ranked: list[tuple[str, float]], k: int, strategy: str,
           rng: np.random.Generator | None = None) -> str:
    """Pick a clip id from a ranked list: the top one, or uniformly from
    the top k."""
    if not ranked:
        raise ValueError("cannot select from an empty ranking")
    if strategy == "argmax":
        return ranked[0][0]
    if strategy != "topK":
        raise ValueError(f"unknown selection strategy {strategy!r}; "
                         f"pick from {SELECT_STRATEGIES}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(ranked):
        log.warning("top-K %d exceeds ranking size %d; clamping",
                    k, len(ranked))
        k = len(ranked)
    if k == 1:
        return ranked[0][0]
    if rng is None:
        raise ValueError("topK selection needs an RNG")
    return ranked[int(rng.integers(k))][0]


# ---------------------------------------------------------------- file format

def save_index(index: LatentIndex, path) -> None:
    """Count header (u32 LE), then per record: clip_id length (u16 LE),
    utf-8 bytes, and the raw 128-float32 LE code."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(index)))
        for cid, code in zip(index.clip_ids, index.codes):
            raw = cid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(code, dtype="<f4").tobytes())


def load_index(path, records=None) -> LatentIndex:
    """Read an index file; pass manifest records to restore instrument tags
    (the file stores codes only)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IndexError_(f"{path}: truncated index header")
    (count,) = struct.unpack_from("<I", raw)
    offset = 4
    clip_ids, codes = [], []
    vec_bytes = LATENT_DIM * 4
    for _ in range(count):
        if offset + 2 > len(raw):
            raise IndexError_(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(raw):
            raise IndexError_(f"{path}: truncated record body")
        clip_ids.append(raw[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        codes.append(np.frombuffer(raw, dtype="<f4", count=LATENT_DIM,
                                   offset=offset).copy())
        offset += vec_bytes
    if offset != len(raw):
        raise IndexError_(f"{path}: {len(raw) - offset} trailing bytes")
    index = LatentIndex(clip_ids, np.stack(codes) if codes else
                        np.zeros((0, LATENT_DIM), dtype=np.float32))
    if records is not None:
        index.attach_tags(records)
    return index
