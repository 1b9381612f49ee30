"""Video/mask array conventions and file formats.

A video is a float32 ndarray of shape (F, H, W, C) with values in [0, 1].
A mask video is a float32 ndarray of shape (F, H, W) with values in {0, 1}.
On disk, videos live either as zero-padded PNG frame sequences
(frame_00000.png, ...) or as raw little-endian tensor files ("GCTV").
"""
from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyVideoError, InvalidInputError

GCTV_MAGIC = b"GCTV"
GCTV_VERSION = 1
_FRAME_RE = re.compile(r"frame_(\d+)\.png$")


def check_video(v: np.ndarray, name: str = "video") -> np.ndarray:
    """Validate an (F, H, W, C) video in [0, 1]; returns the array."""
    v = np.asarray(v)
    if v.ndim != 4:
        raise InvalidInputError(f"{name}: expected 4 dims (F,H,W,C), got shape {v.shape}")
    if min(v.shape) < 1:
        raise EmptyVideoError(f"{name}: degenerate shape {v.shape}")
    if v.min() < 0.0 or v.max() > 1.0:
        raise InvalidInputError(f"{name}: values outside [0,1] (min={v.min()}, max={v.max()})")
    return v


def check_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate an (F, H, W) binary mask; returns the array."""
    m = np.asarray(m)
    if m.ndim != 3:
        raise InvalidInputError(f"{name}: expected 3 dims (F,H,W), got shape {m.shape}")
    if min(m.shape) < 1:
        raise EmptyVideoError(f"{name}: degenerate shape {m.shape}")
    bad = (m != 0) & (m != 1)
    if bad.any():
        raise InvalidInputError(f"{name}: values must be exactly 0 or 1")
    return m


def check_same_dims(video: np.ndarray, mask: np.ndarray) -> None:
    if video.shape[:3] != mask.shape:
        raise InvalidInputError(
            f"video dims {video.shape[:3]} do not match mask dims {mask.shape}"
        )


def clamp01(v: np.ndarray) -> np.ndarray:
    """Clamp to [0,1]; applied at I/O boundaries only."""
    return np.clip(v, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PNG frame sequences


def write_frames(video: np.ndarray, out_dir: str | Path) -> list[Path]:
    """Write a video (or a mask when given 3 dims) as frame_%05d.png files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(video)
    if arr.ndim == 3:  # mask: single channel
        arr = arr[..., None]
    paths = []
    for f in range(arr.shape[0]):
        frame = np.round(clamp01(arr[f]) * 255.0).astype(np.uint8)
        img = Image.fromarray(frame[..., 0], mode="L") if frame.shape[-1] == 1 else Image.fromarray(frame, mode="RGB")
        p = out_dir / f"frame_{f:05d}.png"
        img.save(p)
        paths.append(p)
    return paths


def read_frames(in_dir: str | Path, as_mask: bool = False) -> np.ndarray:
    """Read a frame_%05d.png sequence back into a video or mask array."""
    in_dir = Path(in_dir)
    files = sorted(
        (p for p in in_dir.iterdir() if _FRAME_RE.search(p.name)),
        key=lambda p: int(_FRAME_RE.search(p.name).group(1)),
    )
    if not files:
        raise EmptyVideoError(f"no frame_*.png files in {in_dir}")
    frames = []
    for p in files:
        img = Image.open(p)
        img = img.convert("L" if as_mask else "RGB")
        frames.append(np.asarray(img, dtype=np.float32) / 255.0)
    arr = np.stack(frames)
    if as_mask:
        return (arr > 0.5).astype(np.float32)
    return arr


# ---------------------------------------------------------------------------
# Raw tensor container ("GCTV"): magic, version, dims, dtype tag, f32 payload.


def write_raw_tensor(video: np.ndarray, path: str | Path) -> None:
    arr = np.ascontiguousarray(np.asarray(video), dtype="<f4")
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise InvalidInputError(f"raw tensor expects 3 or 4 dims, got {arr.ndim}")
    f, h, w, c = arr.shape
    header = GCTV_MAGIC + struct.pack("<I4I4s", GCTV_VERSION, f, h, w, c, b"f32\x00")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_raw_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GCTV_MAGIC:
            raise InvalidInputError(f"{path}: bad magic {magic!r}")
        version, f, h, w, c, dtype_tag = struct.unpack("<I4I4s", fh.read(24))
        if version != GCTV_VERSION:
            raise InvalidInputError(f"{path}: unsupported version {version}")
        if dtype_tag != b"f32\x00":
            raise InvalidInputError(f"{path}: unsupported dtype {dtype_tag!r}")
        payload = fh.read()
    expected = f * h * w * c * 4
    if len(payload) != expected:
        raise InvalidInputError(f"{path}: payload length {len(payload)} != {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(f, h, w, c).copy()


def load_video(path: str | Path, as_mask: bool = False) -> np.ndarray:
    """Load a video from a directory of PNG frames or a .gctv raw tensor file."""
    path = Path(path)
    if path.is_dir():
        return read_frames(path, as_mask=as_mask)
    arr = read_raw_tensor(path)
    if as_mask:
        return (arr[..., 0] > 0.5).astype(np.float32)
    return arr
