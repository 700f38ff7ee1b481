"""Parameter checkpoints: a JSON header plus raw float64 arrays in one ``.npz`` file."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from .core import ConfigError

FORMAT_VERSION = 1
_HEADER_KEY = "__header__"


def save_params(path, params: Mapping[str, np.ndarray], header: Mapping | None = None) -> Path:
    path = Path(path)
    meta = dict(header or {})
    meta["format_version"] = FORMAT_VERSION
    meta["shapes"] = {k: list(np.shape(v)) for k, v in params.items()}
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    arrays[_HEADER_KEY] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_params(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        if _HEADER_KEY not in data.files:
            raise ConfigError(f"{path}: not a checkpoint (missing header)")
        header = json.loads(bytes(data[_HEADER_KEY]).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {header.get('format_version')!r}")
        params = {k: data[k].copy() for k in data.files if k != _HEADER_KEY}
    for k, shape in header["shapes"].items():
        if list(params[k].shape) != shape:
            raise ConfigError(f"{path}: array {k} has shape {params[k].shape}, header says {shape}")
    return params, header


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
