"""Deterministic checkpoint archive: JSON header + raw little-endian tensors.

Byte layout: magic, 8-byte LE header length, header JSON, concatenated
tensor data (sorted by name). Identical tensors and config always produce
identical bytes, so save -> load -> save round-trips bit-exactly.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .mae import MaeConfig, MaeModel
from .vq import VqConfig, VqModel

MAGIC = b"GPCKPT1\n"
FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict, config: dict) -> None:
    names = sorted(tensors)
    entries = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        entries.append({"name": name, "dtype": str(arr.dtype),
                        "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"format_version": FORMAT_VERSION, "config": config,
                         "tensors": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a checkpoint archive")
        hlen = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        data = f.read()
    tensors = {}
    for e in header["tensors"]:
        raw = data[e["offset"]:e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(
            e["shape"]).copy()
    return tensors, header["config"]


def _state_to_numpy(model: torch.nn.Module) -> dict:
    return {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}


def save_vq_model(path, model: VqModel) -> None:
    cfg = asdict(model.config)
    cfg["kind"] = "vq"
    save_checkpoint(path, _state_to_numpy(model), cfg)


def save_mae_model(path, model: MaeModel) -> None:
    cfg = asdict(model.config)
    cfg["kind"] = "mae"
    save_checkpoint(path, _state_to_numpy(model), cfg)


def _dataclass_kwargs(cfg: dict, dc_type) -> dict:
    names = {f.name for f in dataclasses.fields(dc_type)}
    return {k: v for k, v in cfg.items() if k in names}


def load_vq_model(path) -> VqModel:
    tensors, cfg = load_checkpoint(path)
    if cfg.get("kind") != "vq":
        raise ValueError(f"{path} holds a {cfg.get('kind')!r} model, expected vq")
    kwargs = _dataclass_kwargs(cfg, VqConfig)
    kwargs["channels"] = tuple(kwargs["channels"])
    model = VqModel(VqConfig(**kwargs))
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    model.eval()
    return model


def load_mae_model(path) -> MaeModel:
    tensors, cfg = load_checkpoint(path)
    if cfg.get("kind") != "mae":
        raise ValueError(f"{path} holds a {cfg.get('kind')!r} model, expected mae")
    model = MaeModel(MaeConfig(**_dataclass_kwargs(cfg, MaeConfig)))
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    model.eval()
    return model


def checkpoint_config(path) -> dict:
    """Config record only (cheap header read)."""
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint archive")
        hlen = int.from_bytes(f.read(8), "little")
        return json.loads(f.read(hlen).decode("utf-8"))["config"]
