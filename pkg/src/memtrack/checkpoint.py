"""Flat parameter checkpoints.

Layout (all integers little-endian)::

    b"MEMTRACK\\x01"        9-byte magic
    uint64                  manifest length N
    N bytes                 UTF-8 JSON manifest
    raw float32 records     one per tensor, in manifest order

The manifest holds ``{"config": {...}, "tensors": [{"name", "shape",
"offset", "nbytes"}, ...], "meta": {...}}``; offsets are relative to the
start of the record area.
"""
import json
import struct
from collections import OrderedDict

import numpy as np
import torch

from .encoder import EncoderConfig, build_encoder

MAGIC = b"MEMTRACK\x01"


def save_checkpoint(path, model: torch.nn.Module, cfg: EncoderConfig, meta=None) -> None:
    records, tensors, offset = [], [], 0
    for name, t in model.state_dict().items():
        buf = t.detach().cpu().numpy().astype("<f4").tobytes()
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(buf)})
        records.append(buf)
        offset += len(buf)
    manifest = json.dumps({"config": cfg.to_dict(), "tensors": tensors, "meta": meta or {}},
                          sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for buf in records:
            fh.write(buf)


def read_checkpoint(path):
    """Returns (manifest, OrderedDict name -> float32 array)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a memtrack checkpoint")
        (n,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(n).decode("utf-8"))
        data = fh.read()
    arrays = OrderedDict()
    for rec in manifest["tensors"]:
        chunk = data[rec["offset"]:rec["offset"] + rec["nbytes"]]
        arrays[rec["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(rec["shape"]).copy()
    return manifest, arrays


def load_checkpoint(path):
    """Rebuild the encoder stored at ``path``; returns (model, config, meta)."""
    manifest, arrays = read_checkpoint(path)
    cfg = EncoderConfig(**manifest["config"])
    model = build_encoder(cfg)
    state = model.state_dict()
    missing = set(state) - set(arrays)
    if missing:
        raise ValueError(f"{path}: missing tensors {sorted(missing)}")
    model.load_state_dict({k: torch.from_numpy(arrays[k]).to(state[k].dtype) for k in state})
    model.eval()
    return model, cfg, manifest.get("meta", {})
