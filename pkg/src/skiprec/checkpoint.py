"""JSON checkpoints: version, config snapshot, activation and every parameter matrix.

Floats are written with ``repr`` precision (via ``json``), so a save/load
round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import MODES, PARAM_NAMES, ModelParams

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, params: ModelParams, config: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "mode": params.mode,
        "activation": params.activation,
        "d": params.d,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.arrays().items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load(path) -> tuple[ModelParams, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {doc.get('format_version') if isinstance(doc, dict) else None!r}")
    try:
        arrays = {}
        for name in PARAM_NAMES:
            entry = doc["params"][name]
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if not np.all(np.isfinite(arr)):
                raise CheckpointError(f"non-finite values in {name}")
            arrays[name] = arr
        mode, activation = doc["mode"], doc["activation"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupted checkpoint {path}: {exc!r}") from None
    if mode not in MODES:
        raise CheckpointError(f"unknown mode {mode!r}")
    return ModelParams(**arrays, mode=mode, activation=activation), doc.get("config", {})
