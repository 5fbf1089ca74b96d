"""
Checkpoint files: one zip archive holding a JSON manifest and a raw payload.

Archive members
---------------
  manifest.json   {"format_version": 1,
                   "config": {...ModelConfig...},
                   "step": 120,
                   "tensors": {"input_proj.W": {"shape": [3, 16], "offset": 0}, ...},
                   "buffers": {"blocks.0.bn_local.state": {"updates": 40}, ...},
                   "optimizer": null | {"step": 120, "config": {...}}}
  params.bin      every tensor in manifest order, little-endian float64,
                  `offset` counted in elements

Tensors are model parameters, batchnorm running statistics
(`<buffer>.running_mean` / `<buffer>.running_var`) and, when an optimizer
state is saved, its moments (`optim.m.<param>` / `optim.v.<param>`).

Members are stored uncompressed with a fixed timestamp and the manifest is
written with sorted keys, so loading a checkpoint and saving it again yields
the same bytes.
"""

from __future__ import annotations

import json
import logging
import os
import zipfile
from dataclasses import dataclass

import numpy as np

from errors import (
    CheckpointError,
    ConfigError,
    MissingTensorError,
    ShapeMismatchError,
    VersionMismatchError,
)
from model.model_config import ModelConfig
from model.network import GraphModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
PAYLOAD = "params.bin"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    model: GraphModel
    step: int = 0
    optimizer: dict | None = None     # {"step", "config", "m": {name: array}, "v": {...}}


def model_tensors(model: GraphModel) -> list[tuple[str, np.ndarray]]:
    """Parameters then batchnorm statistics, in stable traversal order."""
    out = [(name, p.data) for name, p in model.named_parameters()]
    for name, state in model.named_buffers():
        out.append((f"{name}.running_mean", state.running_mean))
        out.append((f"{name}.running_var", state.running_var))
    return out


def _optimizer_tensors(optimizer: dict) -> list[tuple[str, np.ndarray]]:
    out = []
    for moment in ("m", "v"):
        for name, arr in optimizer[moment].items():
            out.append((f"optim.{moment}.{name}", np.asarray(arr)))
    return out


def _write_member(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(model: GraphModel, path: str, optimizer: dict | None = None, step: int = 0) -> None:
    tensors = model_tensors(model)
    if optimizer is not None:
        tensors += _optimizer_tensors(optimizer)

    index, chunks, offset = {}, [], 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype=_LE_F64)
        index[name] = {"shape": list(arr.shape), "offset": offset}
        chunks.append(arr.tobytes())
        offset += arr.size

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "step": int(step),
        "tensors": index,
        "buffers": {name: {"updates": int(s.updates)} for name, s in model.named_buffers()},
        "optimizer": None if optimizer is None else {
            "step": int(optimizer["step"]),
            "config": optimizer.get("config", {}),
        },
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        _write_member(zf, MANIFEST, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8"))
        _write_member(zf, PAYLOAD, b"".join(chunks))
    logger.info("Saved checkpoint (%d tensors, step %d) to %s", len(index), step, path)


# ── Loading ───────────────────────────────────────────────────────────────────

def _read_archive(path: str) -> tuple[dict, np.ndarray]:
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read(MANIFEST).decode("utf-8"))
            payload = zf.read(PAYLOAD)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} is not a valid checkpoint: {exc}") from None
    if len(payload) % _LE_F64.itemsize:
        raise CheckpointError(f"{PAYLOAD} length {len(payload)} is not a multiple of 8")
    return manifest, np.frombuffer(payload, dtype=_LE_F64)


def _tensor(name: str, index: dict, flat: np.ndarray, expected: tuple[int, ...]) -> np.ndarray:
    if name not in index:
        raise MissingTensorError(f"checkpoint is missing tensor {name!r}")
    entry = index[name]
    shape = tuple(entry["shape"])
    if shape != tuple(expected):
        raise ShapeMismatchError(f"tensor {name!r} has shape {list(shape)} in the checkpoint, model expects {list(expected)}")
    size = int(np.prod(shape, dtype=np.int64))
    start = int(entry["offset"])
    if start < 0 or start + size > flat.size:
        raise CheckpointError(f"tensor {name!r} runs past the end of {PAYLOAD}")
    return flat[start:start + size].astype(np.float64).reshape(shape)


def load_checkpoint(path: str) -> Checkpoint:
    manifest, flat = _read_archive(path)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        cfg = ModelConfig.from_dict(manifest["config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"checkpoint config is unusable: {exc}") from None

    model = GraphModel(cfg)
    index = manifest.get("tensors", {})
    expected_names = set()
    for name, p in model.named_parameters():
        p.data[...] = _tensor(name, index, flat, p.shape)
        expected_names.add(name)
    buffers = manifest.get("buffers", {})
    for name, state in model.named_buffers():
        state.running_mean = _tensor(f"{name}.running_mean", index, flat, state.running_mean.shape)
        state.running_var = _tensor(f"{name}.running_var", index, flat, state.running_var.shape)
        state.updates = int(buffers.get(name, {}).get("updates", 0))
        expected_names.update((f"{name}.running_mean", f"{name}.running_var"))

    optimizer = None
    if manifest.get("optimizer") is not None:
        params = dict(model.named_parameters())
        optimizer = {
            "step": int(manifest["optimizer"]["step"]),
            "config": manifest["optimizer"].get("config", {}),
            "m": {}, "v": {},
        }
        for moment in ("m", "v"):
            for name, p in params.items():
                key = f"optim.{moment}.{name}"
                optimizer[moment][name] = _tensor(key, index, flat, p.shape)
                expected_names.add(key)

    extra = sorted(set(index) - expected_names)
    if extra:
        raise CheckpointError(f"checkpoint holds tensors the model does not have: {extra[:5]}")
    logger.info("Loaded checkpoint %s (step %d)", path, int(manifest.get("step", 0)))
    return Checkpoint(model, int(manifest.get("step", 0)), optimizer)
