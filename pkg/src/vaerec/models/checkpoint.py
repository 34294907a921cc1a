"""Model checkpoints: a JSON manifest plus a flat little-endian float64 blob.

The manifest records the model kind, full config, catalog size, the epoch
and validation score the parameters came from, the item vocabulary (so a
checkpoint can serve recommendations on its own), and a per-tensor
name/shape/offset index into the blob. Files are written to a temp path and
renamed, so an interrupted save leaves no partial checkpoint behind.
"""

from __future__ import annotations

import json
import os

import numpy as np

from vaerec.models import build_model
from vaerec.models.config import ModelConfig

MANIFEST_SUFFIX = ".json"
PARAMS_SUFFIX = ".params"


def _atomic_write_bytes(path: str, blob: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def save_checkpoint(
    base_path: str | os.PathLike,
    model,
    vocab_raw_ids: list[str],
    vocabulary_digest: str,
    epoch: int,
    validation_score: float | None,
) -> None:
    base = str(base_path)
    tensors = []
    chunks = []
    offset = 0
    for name, p in model.store.items():
        flat = np.ascontiguousarray(p.data, dtype="<f8")
        tensors.append({"name": name, "shape": list(p.shape), "offset": offset,
                        "size": int(flat.size)})
        chunks.append(flat.tobytes())
        offset += flat.size
    manifest = {
        "format": "vaerec-checkpoint-v1",
        "model": model.kind,
        "config": model.config.to_dict(),
        "n_items": model.n_items,
        "n_users": getattr(model, "n_users", 0),
        "epoch": epoch,
        "validation_score": validation_score,
        "vocabulary": vocab_raw_ids,
        "vocabulary_digest": vocabulary_digest,
        "tensors": tensors,
    }
    # blob first: a manifest is the commit point, so a crash in between
    # leaves at most an orphaned blob, never a loadable half-checkpoint
    _atomic_write_bytes(base + PARAMS_SUFFIX, b"".join(chunks))
    _atomic_write_bytes(
        base + MANIFEST_SUFFIX,
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode(),
    )


def load_checkpoint(base_path: str | os.PathLike):
    """Rebuild the model with its saved parameters; returns (model, manifest)."""
    base = str(base_path)
    with open(base + MANIFEST_SUFFIX, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "vaerec-checkpoint-v1":
        raise ValueError(f"not a checkpoint manifest: {base + MANIFEST_SUFFIX}")
    config = ModelConfig.from_mapping(manifest["config"])
    model = build_model(
        manifest["model"], manifest["n_items"], config, n_users=manifest["n_users"]
    )
    blob = np.fromfile(base + PARAMS_SUFFIX, dtype="<f8")
    for entry in manifest["tensors"]:
        p = model.store[entry["name"]]
        values = blob[entry["offset"] : entry["offset"] + entry["size"]]
        if values.size != p.data.size:
            raise ValueError(f"checkpoint tensor {entry['name']} size mismatch")
        p.data[...] = values.reshape(entry["shape"])
    return model, manifest
