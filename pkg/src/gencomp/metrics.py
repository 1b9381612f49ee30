"""Pixel metrics: PSNR, SSIM, and trajectory adherence."""
from __future__ import annotations

import numpy as np

from .errors import EmptyRegionError, InvalidInputError
from .video import check_mask, check_video

PSNR_SENTINEL = 99.0  # reported when MSE is exactly zero

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0

ADHERENCE_THRESHOLD = 0.3


def psnr(a: np.ndarray, b: np.ndarray, region: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) on videos in [0,1]; identical inputs hit the sentinel.

    With a region mask, only pixels where region == 1 contribute."""
    check_video(a, "a")
    check_video(b, "b")
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    if region is not None:
        check_mask(region, "region")
        if region.shape != a.shape[:3]:
            raise InvalidInputError(
                f"region {region.shape} must match video dims {a.shape[:3]}")
        sel = region > 0.5
        if not sel.any():
            raise EmptyRegionError("region selects no pixels")
        diff = diff[sel]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-covered (valid) windows."""
    n = len(k)
    out = img
    for axis in (0, 1):
        length = out.shape[axis] - n + 1
        acc = np.zeros(
            (length, out.shape[1]) if axis == 0 else (out.shape[0], length),
            dtype=np.float64,
        )
        for j, kj in enumerate(k):
            sl = [slice(None), slice(None)]
            sl[axis] = slice(j, j + length)
            acc += kj * out[tuple(sl)]
        out = acc
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over frames, Gaussian 11x11 windows.

    Frames are converted to grayscale as the unweighted channel mean."""
    check_video(a, "a")
    check_video(b, "b")
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape[1], a.shape[2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise InvalidInputError(
            f"frames {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    k = _ssim_window()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    vals = []
    for i in range(a.shape[0]):
        x = a[i].astype(np.float64).mean(axis=-1)
        y = b[i].astype(np.float64).mean(axis=-1)
        mu_x = _filter_valid(x, k)
        mu_y = _filter_valid(y, k)
        xx = _filter_valid(x * x, k) - mu_x * mu_x
        yy = _filter_valid(y * y, k) - mu_y * mu_y
        xy = _filter_valid(x * y, k) - mu_x * mu_y
        s = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2))
        vals.append(float(s.mean()))
    return float(np.mean(vals))


def trajectory_adherence(output: np.ndarray, path: np.ndarray, sprite_color,
                         threshold: float = ADHERENCE_THRESHOLD) -> float:
    """Mean distance (px) between the segmented sprite centroid and the path.

    Segmentation keeps pixels within `threshold` RGB distance of the sprite
    color; a frame segmenting nothing counts at a penalty of max(H, W)."""
    check_video(output, "output")
    f, h, w = output.shape[:3]
    path = np.asarray(path, dtype=np.float64)
    if path.shape != (f, 2):
        raise InvalidInputError(f"path must be ({f}, 2), got {path.shape}")
    color = np.asarray(sprite_color, dtype=np.float64)
    penalty = float(max(h, w))
    errs = []
    for i in range(f):
        dist = np.sqrt(((output[i].astype(np.float64) - color) ** 2).sum(axis=-1))
        ys, xs = np.nonzero(dist < threshold)
        if ys.size == 0:
            errs.append(penalty)
            continue
        cx, cy = float(xs.mean()), float(ys.mean())
        errs.append(float(np.hypot(cx - path[i, 0], cy - path[i, 1])))
    return float(np.mean(errs))
