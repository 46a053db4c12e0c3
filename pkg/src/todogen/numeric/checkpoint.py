"""Versioned parameter container: JSON header line + raw float64 blobs.

Round-trips are bit-exact (values are written as little-endian binary), so
two runs with the same seed produce byte-identical checkpoint files.  The
header carries free-form ``meta`` (model config, seeds, init note) used by
the model loaders.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = "todogen-ckpt"
VERSION = 1


class CheckpointError(Exception):
    """Malformed or incompatible checkpoint file."""


def save_params(path, params: dict[str, Tensor | np.ndarray], meta: dict | None = None) -> None:
    """Write named parameters (insertion order preserved) plus metadata."""
    entries = []
    blobs = []
    for name, p in params.items():
        arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format": MAGIC,
        "version": VERSION,
        "meta": meta or {},
        "params": entries,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back: ({name: array}, meta)."""
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: bad header ({exc})") from exc
        if header.get("format") != MAGIC:
            raise CheckpointError(f"{path}: not a parameter checkpoint")
        if header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
        params: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"{path}: truncated blob for '{entry['name']}'")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return params, header.get("meta", {})
