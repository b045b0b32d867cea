"""Checkpoint persistence: a JSON manifest next to a raw float32 payload.

A checkpoint is a directory holding ``manifest.json`` and ``params.bin``.
The payload is every parameter, in manifest order, as little-endian
float32.  Files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .model import BinConvConfig, BinConvModel, VariantKind, parameter_shapes

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
PAYLOAD = "params.bin"
_LE_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save_checkpoint(model: BinConvModel, path, seed: int | None = None, epoch: int | None = None, extra=None) -> Path:
    path = Path(path)
    tensors, offset, chunks = [], 0, []
    for name, p in model.params.items():
        arr = np.ascontiguousarray(p.value, dtype=_LE_F32)
        tensors.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += arr.nbytes
        chunks.append(arr.tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "float32-le",
        "variant": model.kind.value,
        "config": model.config.to_dict(),
        "seed": seed,
        "epoch": epoch,
        "payload_bytes": offset,
        "tensors": tensors,
    }
    if extra:
        manifest["extra"] = extra
    atomic_write(path / PAYLOAD, b"".join(chunks))
    atomic_write(path / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    try:
        return json.loads((Path(path) / MANIFEST).read_text())
    except FileNotFoundError:
        raise CheckpointError(f"no {MANIFEST} in {path}") from None


def load_checkpoint(path, config: BinConvConfig | None = None) -> BinConvModel:
    """Rebuild a model.  If ``config`` is given it must agree with the
    stored tensor shapes."""
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"version mismatch: checkpoint has {manifest.get('format_version')}, reader expects {FORMAT_VERSION}")
    kind = VariantKind(manifest["variant"])
    if config is None:
        config = BinConvConfig(**manifest["config"])
    expected = parameter_shapes(config, kind)
    stored = {t["name"]: tuple(t["shape"]) for t in manifest["tensors"]}
    if list(stored) != list(expected) or any(stored[n] != expected[n] for n in expected):
        raise CheckpointError("shape mismatch between checkpoint manifest and model configuration")

    payload = (path / PAYLOAD).read_bytes()
    need = sum(int(np.prod(s)) for s in stored.values()) * _LE_F32.itemsize
    if len(payload) < need or manifest.get("payload_bytes", need) > len(payload):
        raise CheckpointError(f"truncated payload: {len(payload)} bytes, expected {need}")
    if len(payload) != need:
        raise CheckpointError(f"payload has {len(payload)} bytes, expected {need}")

    params = {}
    for t in manifest["tensors"]:
        n = int(np.prod(t["shape"]))
        arr = np.frombuffer(payload, dtype=_LE_F32, count=n, offset=t["offset"])
        params[t["name"]] = Parameter(arr.reshape(t["shape"]).astype(config.dtype))
    return BinConvModel(config, kind, params)
