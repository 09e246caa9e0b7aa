"""Versioned binary checkpoint container.

Layout (all integers little-endian uint32, strings UTF-8):

    magic        8 bytes  b"SPPNETCK"
    version      uint32   currently 1
    config_len   uint32   followed by config_len bytes of ModelConfig JSON
    num_tensors  uint32
    per tensor:
        name_len uint32, name bytes
        ndim     uint32, ndim x uint32 dims
        data     float32 little-endian, C order

Tensors are the model state dict (parameters and buffers) in registration
order, so saving the same state twice produces byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import torch

from sppnet.errors import CheckpointError
from sppnet.network.model import ModelConfig, SPPNet, build_sppnet

MAGIC = b"SPPNETCK"
VERSION = 1


def save_checkpoint(path, config: ModelConfig, state_dict) -> None:
    path = Path(path)
    config_blob = json.dumps(dataclasses.asdict(config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(config_blob)))
        fh.write(config_blob)
        fh.write(struct.pack("<I", len(state_dict)))
        for name, tensor in state_dict.items():
            arr = np.ascontiguousarray(
                tensor.detach().cpu().to(torch.float32).numpy(), dtype="<f4"
            )
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"bad checkpoint magic in {path}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (config_len,) = struct.unpack("<I", _read_exact(fh, 4))
        config = ModelConfig(**json.loads(_read_exact(fh, config_len)))
        (num_tensors,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(num_tensors):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode()
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
            tensors[name] = data.reshape(shape).copy()
    return config, tensors


def load_model(path) -> tuple[SPPNet, ModelConfig]:
    """Rebuild the model a checkpoint was saved from and restore its weights."""
    config, tensors = load_checkpoint(path)
    model = build_sppnet(config)
    state = {name: torch.from_numpy(arr) for name, arr in tensors.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint does not match model: {exc}") from exc
    model.eval()
    return model, config
