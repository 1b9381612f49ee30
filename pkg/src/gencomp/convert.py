"""Conversion utilities between user controls, trajectories, masks and the
video tensors the denoiser consumes. All functions here are pure."""
from __future__ import annotations

import math

import numpy as np

from .control import ControlSpec
from .errors import EmptyVideoError, InvalidInputError
from .video import check_mask, check_video

LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


# ---- small image helpers ---------------------------------------------------

def gaussian_kernel1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur2d(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with zero padding; works on (H,W) or (H,W,C)."""
    k = gaussian_kernel1d(sigma)
    r = len(k) // 2
    out = img.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad)
        acc = np.zeros_like(out)
        for j, kj in enumerate(k):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(j, j + out.shape[axis])
            acc += kj * padded[tuple(sl)]
        out = acc
    return out


def resize_nearest(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.minimum(((np.arange(new_h) + 0.5) * h / new_h).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(new_w) + 0.5) * w / new_w).astype(np.int64), w - 1)
    return img[ys][:, xs]


def mask_bbox(mask_frame: np.ndarray):
    """(y0, y1, x0, x1) half-open bounds of the nonzero region, or None."""
    ys, xs = np.nonzero(mask_frame > 0.5)
    if ys.size == 0:
        return None
    return int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1


def mask_centers(mask: np.ndarray) -> np.ndarray:
    """Per-frame (x, y) bounding-box centers in pixel-center coordinates.

    Frames with an empty mask get NaN centers."""
    check_mask(mask, "mask")
    out = np.full((mask.shape[0], 2), np.nan, dtype=np.float64)
    for i in range(mask.shape[0]):
        bb = mask_bbox(mask[i])
        if bb is not None:
            y0, y1, x0, x1 = bb
            out[i] = ((x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0)
    return out


def _half_up(v: float) -> int:
    # round-half-up keeps identity retargeting exact (banker's rounding does not)
    return int(math.floor(v + 0.5))


def _bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = img.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    return ((1 - fy) * (1 - fx) * img[y0, x0] + (1 - fy) * fx * img[y0, x1]
            + fy * (1 - fx) * img[y1, x0] + fy * fx * img[y1, x1])


# ---- point tracking ---------------------------------------------------------

TRACK_WINDOW = 15
TRACK_ITERS = 10
TRACK_TOL = 1e-3
TRACK_PRESMOOTH = 1.0


def _lk_step(i0, gy0, gx0, i1, p):
    """One Lucas-Kanade frame-to-frame update of point p=(x, y)."""
    half = TRACK_WINDOW // 2
    dy, dx = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    ys = p[1] + dy
    xs = p[0] + dx
    t = _bilinear(i0, ys, xs)
    gx = _bilinear(gx0, ys, xs)
    gy = _bilinear(gy0, ys, xs)
    g = np.array([[np.sum(gx * gx), np.sum(gx * gy)],
                  [np.sum(gx * gy), np.sum(gy * gy)]])
    if abs(np.linalg.det(g)) < 1e-9:
        return np.array(p, dtype=np.float64)  # textureless window, hold position
    v = np.array(p, dtype=np.float64)
    for _ in range(TRACK_ITERS):
        warped = _bilinear(i1, v[1] + dy, v[0] + dx)
        err = warped - t
        b = -np.array([np.sum(gx * err), np.sum(gy * err)])
        d = np.linalg.solve(g, b)
        v += d
        if np.hypot(d[0], d[1]) < TRACK_TOL:
            break
    return v


def track_point(video: np.ndarray, point: tuple[float, float], frame: int = 0) -> np.ndarray:
    """Track an (x, y) point through every frame with iterative Lucas-Kanade
    on pre-smoothed luminance. Tracks forward and backward from the anchor
    frame so the result covers all frames. Returns (F, 2), clamped to bounds."""
    check_video(video, "video")
    f, h, w = video.shape[:3]
    if not 0 <= frame < f:
        raise InvalidInputError(f"anchor frame {frame} out of range [0, {f})")
    x, y = float(point[0]), float(point[1])
    if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
        raise InvalidInputError(f"start point ({x}, {y}) outside {w}x{h} frame")
    gray = video.astype(np.float64) @ LUMA
    gray = np.stack([gaussian_blur2d(g, TRACK_PRESMOOTH) for g in gray])
    grads = [np.gradient(g) for g in gray]  # (d/dy, d/dx) per frame
    pos = np.zeros((f, 2), dtype=np.float64)
    pos[frame] = (x, y)
    p = np.array((x, y), dtype=np.float64)
    for i in range(frame, f - 1):
        p = _lk_step(gray[i], grads[i][0], grads[i][1], gray[i + 1], p)
        pos[i + 1] = p
    p = np.array((x, y), dtype=np.float64)
    for i in range(frame, 0, -1):
        p = _lk_step(gray[i], grads[i][0], grads[i][1], gray[i - 1], p)
        pos[i - 1] = p
    pos[:, 0] = np.clip(pos[:, 0], 0.0, w - 1.0)
    pos[:, 1] = np.clip(pos[:, 1], 0.0, h - 1.0)
    return pos


def densify_trajectory(control: ControlSpec, n_frames: int,
                       bg_video: np.ndarray | None = None) -> np.ndarray:
    """Expand a control spec to one (x, y) position per frame.

    Drag mode interpolates linearly between keypoints and holds the endpoints
    constant outside them. Click mode tracks the clicked point through the
    background video."""
    if n_frames < 1:
        raise EmptyVideoError(f"n_frames must be >= 1, got {n_frames}")
    max_frame = max(p[0] for p in control.points)
    if max_frame >= n_frames:
        raise InvalidInputError(
            f"control references frame {max_frame} but the clip has {n_frames} frames")
    if control.mode == "click":
        if bg_video is None:
            raise InvalidInputError("click mode needs the background video to track")
        frame, x, y = control.points[0]
        return track_point(bg_video, (x, y), int(frame))
    frames = np.array([p[0] for p in control.points], dtype=np.float64)
    xs = np.array([p[1] for p in control.points], dtype=np.float64)
    ys = np.array([p[2] for p in control.points], dtype=np.float64)
    q = np.arange(n_frames, dtype=np.float64)
    return np.stack([np.interp(q, frames, xs), np.interp(q, frames, ys)], axis=-1)


# ---- mask and video shaping -------------------------------------------------

def retarget_mask(fg_mask: np.ndarray, traj: np.ndarray, scale: float,
                  bg_dims: tuple[int, int, int]) -> np.ndarray:
    """Rescale and reposition the foreground mask along a trajectory.

    Per output frame the mask's bounding box is resized by `scale`
    (nearest-neighbor) and pasted so its center lands on traj[f]; pixels
    falling outside the background bounds are cropped, and a frame whose mask
    ends up empty stays empty. Foreground frames loop when the background is
    longer. Returns a (F,H,W) mask at bg_dims."""
    check_mask(fg_mask, "fg_mask")
    if scale <= 0:
        raise InvalidInputError(f"scale must be positive, got {scale}")
    f_bg, h, w = bg_dims
    traj = np.asarray(traj, dtype=np.float64)
    if traj.shape != (f_bg, 2):
        raise InvalidInputError(f"traj must be ({f_bg}, 2), got {traj.shape}")
    out = np.zeros((f_bg, h, w), dtype=np.float32)
    for i in range(f_bg):
        src = fg_mask[i % fg_mask.shape[0]]
        bb = mask_bbox(src)
        if bb is None:
            continue
        y0, y1, x0, x1 = bb
        nh = max(1, int(round((y1 - y0) * scale)))
        nw = max(1, int(round((x1 - x0) * scale)))
        crop = resize_nearest(src[y0:y1, x0:x1], nh, nw)
        cx, cy = traj[i]
        # place the box so its pixel-center midpoint lands on (cx, cy); the
        # half-up rounding pairs with mask_centers to make scale=1 retargeting
        # onto a mask's own centers an exact identity
        top = _half_up(cy - (nh - 1) / 2.0)
        left = _half_up(cx - (nw - 1) / 2.0)
        dy0, dy1 = max(0, top), min(h, top + nh)
        dx0, dx1 = max(0, left), min(w, left + nw)
        if dy0 >= dy1 or dx0 >= dx1:
            continue
        sy0, sx0 = dy0 - top, dx0 - left
        piece = crop[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]
        out[i, dy0:dy1, dx0:dx1] = np.maximum(out[i, dy0:dy1, dx0:dx1],
                                              (piece > 0.5).astype(np.float32))
    return out


INFLATE_SIGMA = 3.0
INFLATE_THRESHOLD = 0.1


def inflate_mask(mask: np.ndarray, sigma: float = INFLATE_SIGMA,
                 threshold: float = INFLATE_THRESHOLD) -> np.ndarray:
    """Grow a binary mask by Gaussian blurring and re-thresholding, per frame.

    The result is OR-ed with the input, so it always contains the original."""
    check_mask(mask, "mask")
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must be in (0, 1), got {threshold}")
    out = np.zeros_like(mask, dtype=np.float32)
    for i in range(mask.shape[0]):
        blurred = gaussian_blur2d(mask[i], sigma)
        out[i] = ((blurred >= threshold) | (mask[i] > 0.5)).astype(np.float32)
    return out


def make_masked_video(source: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out the insertion region: source * (1 - mask) per channel."""
    check_video(source, "source")
    check_mask(mask, "mask")
    if source.shape[:3] != mask.shape:
        raise InvalidInputError(f"source {source.shape} and mask {mask.shape} must match")
    return (source * (1.0 - mask)[..., None]).astype(np.float32)


def gamma_correct(video: np.ndarray, gamma: float) -> np.ndarray:
    """Pointwise power-law adjustment; 0 and 1 are fixed points."""
    if gamma <= 0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    return np.clip(video, 0.0, 1.0).astype(np.float32) ** np.float32(gamma)


def center_foreground(source: np.ndarray, mask: np.ndarray):
    """Extract the masked element onto a black canvas, translated so its
    bounding-box center sits at the frame center.

    Returns (video, mask, skipped) where skipped lists frames whose mask was
    empty; those frames come out all black."""
    check_video(source, "source")
    check_mask(mask, "mask")
    if source.shape[:3] != mask.shape:
        raise InvalidInputError(f"source {source.shape} and mask {mask.shape} must match")
    f, h, w, c = source.shape
    out_v = np.zeros_like(source)
    out_m = np.zeros_like(mask)
    skipped: list[int] = []
    for i in range(f):
        bb = mask_bbox(mask[i])
        if bb is None:
            skipped.append(i)
            continue
        y0, y1, x0, x1 = bb
        dy = h // 2 - (y0 + y1) // 2
        dx = w // 2 - (x0 + x1) // 2
        sy0, sy1 = max(0, y0 + dy), min(h, y1 + dy)
        sx0, sx1 = max(0, x0 + dx), min(w, x1 + dx)
        m_piece = mask[i, sy0 - dy:sy1 - dy, sx0 - dx:sx1 - dx]
        v_piece = source[i, sy0 - dy:sy1 - dy, sx0 - dx:sx1 - dx]
        out_m[i, sy0:sy1, sx0:sx1] = m_piece
        out_v[i, sy0:sy1, sx0:sx1] = v_piece * m_piece[..., None]
    return out_v, out_m, skipped


FG_BLACK_THRESHOLD = 0.05


def derive_fg_mask(fg: np.ndarray, threshold: float = FG_BLACK_THRESHOLD) -> np.ndarray:
    """Recover the element mask of a centered foreground clip by thresholding
    luminance against its black surround."""
    check_video(fg, "fg")
    luma = fg.astype(np.float64) @ LUMA
    return (luma > threshold).astype(np.float32)
