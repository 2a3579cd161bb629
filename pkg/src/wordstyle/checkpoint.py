"""Checkpoint directory format.

A checkpoint directory contains:

* ``params.bin``: versioned container of named float32 arrays (all model
  parameters and buffers), little-endian.
* ``config.json``: format version, step count, model and training configs.
* ``token_stats.json`` (optional): per-token weight statistics.
* ``loss_log.csv`` (written by training): step, lr and loss components.

Parameters round-trip bit-exact: the model trains in float32 and the
container stores raw float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .control import TokenWeightStats
from .model import ModelConfig, WordStyleModel

MAGIC = b"WSPB"
FORMAT_VERSION = 1

CONFIG_NAME = "config.json"
PARAMS_NAME = "params.bin"
TOKEN_STATS_NAME = "token_stats.json"
LOSS_LOG_NAME = "loss_log.csv"


class CheckpointError(ValueError):
    pass


def write_params(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_params(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a parameter container")
        version, count = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n_values = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(4 * n_values), dtype="<f4")
            arrays[name] = data.reshape(shape).copy()
    return arrays


@dataclass
class Checkpoint:
    model: WordStyleModel
    step: int
    train_config: dict | None = None
    token_stats: TokenWeightStats | None = None


def save_checkpoint(
    out_dir,
    model: WordStyleModel,
    step: int,
    train_config: dict | None = None,
    token_stats: TokenWeightStats | None = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        name: tensor.detach().cpu().numpy()
        for name, tensor in model.state_dict().items()
    }
    write_params(out_dir / PARAMS_NAME, arrays)
    config = {
        "format_version": FORMAT_VERSION,
        "step": int(step),
        "model": asdict(model.config),
        "training": train_config,
    }
    with open(out_dir / CONFIG_NAME, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=1, sort_keys=True)
    if token_stats is not None:
        with open(out_dir / TOKEN_STATS_NAME, "w", encoding="utf-8") as f:
            json.dump(token_stats.to_json(), f, indent=1, sort_keys=True)
    return out_dir


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    config_path = path / CONFIG_NAME
    if not config_path.is_file():
        raise CheckpointError(f"missing {CONFIG_NAME} in {path}")
    with open(config_path, encoding="utf-8") as f:
        config = json.load(f)
    if config.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version in {path}")

    model = WordStyleModel(ModelConfig(**config["model"]))
    arrays = read_params(path / PARAMS_NAME)
    state = {name: torch.from_numpy(arr) for name, arr in arrays.items()}
    model.load_state_dict(state, strict=True)
    model.eval()

    token_stats = None
    stats_path = path / TOKEN_STATS_NAME
    if stats_path.is_file():
        with open(stats_path, encoding="utf-8") as f:
            token_stats = TokenWeightStats.from_json(json.load(f))
    return Checkpoint(
        model=model,
        step=int(config["step"]),
        train_config=config.get("training"),
        token_stats=token_stats,
    )
