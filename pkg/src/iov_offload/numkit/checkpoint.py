"""Single-file parameter checkpoints.

Layout (documented contract; bytes are stable across runs for identical
parameters and metadata):

    line 1:  b"NKC1\\n"                       magic + format version
    line 2:  JSON metadata object + b"\\n"    e.g. {"mixer": "kmarl", ...}
    then, for each parameter in ascending name order:
        JSON header [name, rows, cols] + b"\\n"
        rows*cols little-endian float64 values, row-major, raw

Reload is bit-identical: values round-trip through the raw float64 bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .autodiff import Param

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

_MAGIC = b"NKC1\n"


class CheckpointError(ValueError):
    """Malformed or unsupported checkpoint file."""


def save_checkpoint(path, params: Mapping[str, Param | np.ndarray], meta: dict) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        for name in sorted(params):
            p = params[name]
            v = p.value if isinstance(p, Param) else np.asarray(p, dtype=np.float64)
            if v.ndim != 2:
                raise CheckpointError(f"parameter {name!r} is not a matrix")
            fh.write(json.dumps([name, v.shape[0], v.shape[1]]).encode() + b"\n")
            fh.write(v.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (meta, {name: float64 matrix})."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path} is not a NKC1 checkpoint")
        meta = json.loads(fh.readline().decode())
        out: dict[str, np.ndarray] = {}
        while True:
            header = fh.readline()
            if not header:
                break
            name, rows, cols = json.loads(header.decode())
            raw = fh.read(rows * cols * 8)
            if len(raw) != rows * cols * 8:
                raise CheckpointError(f"truncated data for parameter {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols)
    return meta, out
