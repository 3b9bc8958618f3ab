"""Binary checkpoint format.

Layout (all integers little-endian):
    magic            8 bytes  b"SNDLMCKP"
    version          u32
    kind             u16 length + UTF-8 tag
    meta             u32 length + UTF-8 JSON {"step", "rng_state", "config"}
    tensor count     u32
    per tensor       u16 name length + UTF-8 name
                     u8 ndim + ndim * u32 dims
                     float32 payload
Round trips are bit-exact: tensor order is preserved and the JSON dump is
canonical (sorted keys, no whitespace).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SNDLMCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    tensors: dict[str, np.ndarray]
    step: int = 0
    rng_state: dict | None = None
    config: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    meta = json.dumps(
        {"step": ckpt.step, "rng_state": ckpt.rng_state, "config": ckpt.config},
        sort_keys=True, separators=(",", ":"))
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    kind_b = ckpt.kind.encode("utf-8")
    chunks.append(struct.pack("<H", len(kind_b)) + kind_b)
    meta_b = meta.encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_b)) + meta_b)
    chunks.append(struct.pack("<I", len(ckpt.tensors)))
    for name, value in ckpt.tensors.items():
        # asarray keeps 0-d tensors 0-d; ascontiguousarray would lift to 1-d.
        arr = np.asarray(value, dtype=np.float32, order="C")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)) + name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f4").tobytes())
    data = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise CheckpointError(f"truncated checkpoint {path}")
        out = data[off:off + n]
        off += n
        return out

    if take(8) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (kind_len,) = struct.unpack("<H", take(2))
    kind = take(kind_len).decode("utf-8")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).copy()
        tensors[name] = arr
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return Checkpoint(kind=kind, tensors=tensors, step=meta["step"],
                      rng_state=meta["rng_state"], config=meta["config"])
