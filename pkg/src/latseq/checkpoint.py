"""Parameter checkpoints: a zip archive of raw float64 blobs + manifest.

Each parameter is stored as `params/<name>.bin` holding row-major
little-endian doubles; `manifest.json` records shapes plus any model
configuration the caller supplies. Round-trips are bit-exact.
"""
from __future__ import annotations

import json
import zipfile

import numpy as np

from .autograd import ParameterStore

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


def save_checkpoint(path: str, store: ParameterStore, config: dict | None = None) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "parameters": [
            {"name": p.name, "shape": list(p.tensor.data.shape)} for p in store
        ],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True))
        for p in store:
            blob = np.ascontiguousarray(p.tensor.data, dtype="<f8").tobytes()
            zf.writestr(f"params/{p.name}.bin", blob)


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (config dict, parameter-name -> array)."""
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read(MANIFEST_NAME).decode())
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
        params: dict[str, np.ndarray] = {}
        for entry in manifest["parameters"]:
            name = entry["name"]
            shape = tuple(entry["shape"])
            blob = zf.read(f"params/{name}.bin")
            arr = np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(shape)
            params[name] = arr
    return manifest.get("config", {}), params
