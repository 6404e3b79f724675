"""Checkpoint directory: ``manifest.json`` + little-endian float32 ``tensors.bin``."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError
from .model import ModelConfig, RiskClassifier
from .train import TrainingConfig

VERSION = "xrisk-ckpt-1"
MANIFEST = "manifest.json"
BLOB = "tensors.bin"


def save_checkpoint(path, model: RiskClassifier, training_config: TrainingConfig | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().numpy().astype("<f4", copy=False).tobytes()
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset,
                        "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    manifest = {
        "version": VERSION,
        "dtype": "float32-le",
        "model_config": model.config.to_dict(),
        "training_config": training_config.to_dict() if training_config else None,
        "tensors": entries,
        "blob": BLOB,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    (path / BLOB).write_bytes(blob)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    try:
        manifest = json.loads((Path(path) / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint manifest in {path}: {exc}") from exc
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')!r}")
    return manifest


def load_checkpoint(path, model_config: ModelConfig | None = None
                    ) -> tuple[RiskClassifier, TrainingConfig | None]:
    """Rebuild the model from ``path``.

    With ``model_config`` given, the stored tensors must match the shapes that
    config produces; the first mismatch is reported by name.
    """
    path = Path(path)
    manifest = read_manifest(path)
    stored_config = ModelConfig.from_dict(manifest["model_config"])
    model = RiskClassifier(model_config or stored_config)
    expected = model.state_dict()
    entries = manifest["tensors"]
    try:
        blob = (path / manifest.get("blob", BLOB)).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read tensor blob: {exc}") from exc

    names = [e["name"] for e in entries]
    for name in expected:
        if name not in names:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
    loaded = {}
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name!r} in checkpoint")
        if tuple(expected[name].shape) != shape:
            raise CheckpointError(
                f"tensor {name!r}: checkpoint shape {shape} != model shape {tuple(expected[name].shape)}")
        count = int(np.prod(shape, dtype=np.int64))
        start, nbytes = entry["offset"], entry["nbytes"]
        if nbytes != 4 * count or start + nbytes > len(blob):
            raise CheckpointError(f"tensor {name!r}: byte range inconsistent with shape {shape}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(shape)
        loaded[name] = torch.from_numpy(arr.astype(np.float32))
    model.load_state_dict(loaded)
    model.eval()
    tc = manifest.get("training_config")
    return model, TrainingConfig(**tc) if tc else None


def tensor_bytes(path) -> bytes:
    return (Path(path) / BLOB).read_bytes()
