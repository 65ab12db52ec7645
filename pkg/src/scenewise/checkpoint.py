"""Flat binary parameter checkpoints.

Layout: magic, little-endian uint64 header length, canonical-JSON header,
then the parameters' float64 little-endian data concatenated in the
header's order (names sorted).  The header carries the caller's manifest
(model config, vocabulary hash, seed, config hash) alongside each
parameter's name and shape, so a checkpoint is self-describing and
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .ioutil import atomic_write_bytes, canonical_json

MAGIC = b"SWCKPT1\n"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray],
                    manifest: dict) -> None:
    names = sorted(params)
    header = {
        "format": 1,
        "manifest": manifest,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    header_bytes = canonical_json(header).encode("utf-8")
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for n in names:
        blob += np.ascontiguousarray(params[n], dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a scenewise checkpoint")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return params, header["manifest"]
