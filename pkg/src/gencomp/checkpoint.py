"""Self-describing checkpoint container.

Layout (all little-endian):
  magic "GCMP" | u32 version | u32 json_len | config JSON (UTF-8)
  u32 blob_count, then per blob:
    u32 name_len | name UTF-8 | u32 ndim | u32 dims[ndim] | float32 payload

The config JSON carries the model config, schedule kind, RNG seed, and
training step, so a checkpoint alone rebuilds a working sampler."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .model import Denoiser, ModelConfig

GCMP_MAGIC = b"GCMP"
GCMP_VERSION = 1


def save_checkpoint(path: str | Path, model: Denoiser, schedule_kind: str = "linear",
                    seed: int = 0, step: int = 0) -> None:
    meta = {
        "model": model.cfg.to_dict(),
        "schedule_kind": schedule_kind,
        "seed": int(seed),
        "step": int(step),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    state = model.state_dict()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(GCMP_MAGIC)
        fh.write(struct.pack("<II", GCMP_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = np.ascontiguousarray(state[name], dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise InvalidInputError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path: str | Path) -> tuple[Denoiser, dict]:
    """Rebuild the model from a container; returns (model, meta)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != GCMP_MAGIC:
            raise InvalidInputError(f"{path}: not a checkpoint (bad magic)")
        version, json_len = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != GCMP_VERSION:
            raise InvalidInputError(f"{path}: unsupported version {version}")
        meta = json.loads(_read_exact(fh, json_len, "config").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "blob count"))
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "shape"))
            n_items = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, 4 * n_items, f"blob {name}")
            state[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    cfg = ModelConfig.from_dict(meta["model"])
    model = Denoiser(cfg, seed=int(meta.get("seed", 0)))
    if cfg.dtype != "float32":
        state = {k: v.astype(cfg.np_dtype) for k, v in state.items()}
    model.load_state_dict(state)
    return model, meta
