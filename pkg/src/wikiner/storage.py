"""Versioned binary container for snapshots and model checkpoints.

Layout: 8 magic bytes, a big-endian uint32 format version, then a
zlib-compressed UTF-8 JSON payload.  JSON floats round-trip exactly
(repr-based), which keeps checkpoints bit-stable at desk scale.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Any

import numpy as np


class StorageError(IOError):
    pass


def save_container(path: str | Path, magic: bytes, version: int, payload: Any) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    raw = json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack(">I", version))
        fh.write(zlib.compress(raw, level=6))


def load_container(path: str | Path, magic: bytes, max_version: int) -> tuple[int, Any]:
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head != magic:
            raise StorageError(f"{path}: bad magic {head!r}, expected {magic!r}")
        (version,) = struct.unpack(">I", fh.read(4))
        if version > max_version:
            raise StorageError(f"{path}: unsupported format version {version}")
        payload = json.loads(zlib.decompress(fh.read()).decode("utf-8"))
    return version, payload


def array_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def array_from_json(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=np.float64).reshape(obj["shape"])


def params_to_json(params: dict[str, np.ndarray]) -> dict:
    return {k: array_to_json(v) for k, v in params.items()}


def params_from_json(obj: dict) -> dict[str, np.ndarray]:
    return {k: array_from_json(v) for k, v in obj.items()}
