"""End-to-end compositing and removal on top of a trained checkpoint."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffusion
from .control import ControlSpec
from .convert import (
    densify_trajectory,
    derive_fg_mask,
    inflate_mask,
    make_masked_video,
    retarget_mask,
)
from .errors import InvalidInputError, NothingToInsertError
from .model import Denoiser, center_crop_fg
from .video import check_mask, check_video

DEFAULT_STEPS = 20


def _make_sched(model: Denoiser, schedule_kind: str):
    if model.cfg.head_output != "eps" and model.cfg.schedule_kind != schedule_kind:
        raise InvalidInputError(
            f"model converts its {model.cfg.head_output} head with the "
            f"{model.cfg.schedule_kind!r} schedule but sampling was requested "
            f"with {schedule_kind!r}; the two must agree")
    return diffusion.make_schedule(model.cfg.T_diffusion, schedule_kind)


@dataclass
class ComposeResult:
    output: np.ndarray         # (F,H,W,C) model output
    mask: np.ndarray           # retargeted insertion mask before inflation
    mask_inflated: np.ndarray  # region the model actually repainted
    traj: np.ndarray           # (F,2) dense trajectory used


def _fit_fg(fg: np.ndarray, crop: tuple[int, int] | None) -> np.ndarray:
    """Center-crop (or zero-pad, for undersized clips) fg to the crop the
    checkpoint was trained with."""
    if crop is None:
        return fg
    ch, cw = crop
    f, h, w, c = fg.shape
    if h < ch or w < cw:
        pad_h = max(0, ch - h)
        pad_w = max(0, cw - w)
        fg = np.pad(fg, ((0, 0), (pad_h // 2, pad_h - pad_h // 2),
                         (pad_w // 2, pad_w - pad_w // 2), (0, 0)))
    return center_crop_fg(fg, crop)


def compose(bg: np.ndarray, fg: np.ndarray, control: ControlSpec, model: Denoiser,
            steps: int = DEFAULT_STEPS, seed: int = 0,
            fg_mask: np.ndarray | None = None,
            schedule_kind: str = "linear") -> ComposeResult:
    """Insert the foreground element into the background along the user path.

    The control spec is densified to a per-frame trajectory, the foreground
    mask is retargeted (scaled and repositioned) onto the background canvas,
    inflated, and cut out of the background; the denoiser then repaints the
    hole conditioned on the foreground clip. When no fg_mask is given it is
    recovered by thresholding the clip against its black surround."""
    check_video(bg, "bg")
    check_video(fg, "fg")
    f, h, w = bg.shape[:3]
    control.validate(bounds=(f, h, w))
    if fg_mask is None:
        fg_mask = derive_fg_mask(fg)
    else:
        check_mask(fg_mask, "fg_mask")
        if fg_mask.shape != fg.shape[:3]:
            raise InvalidInputError(
                f"fg_mask {fg_mask.shape} must match fg dims {fg.shape[:3]}")
    traj = densify_trajectory(control, f, bg_video=bg)
    mask = retarget_mask(fg_mask, traj, control.scale, (f, h, w))
    if mask.max() == 0.0:
        raise NothingToInsertError("retargeted mask is empty on every frame")
    inflated = inflate_mask(mask)
    masked = make_masked_video(bg, inflated)
    fg_in = _fit_fg(fg, model.cfg.fg_crop)
    sched = _make_sched(model, schedule_kind)
    out = diffusion.sample(model, sched, masked[None], inflated[None], fg_in[None],
                           steps=steps, seed=seed)[0]
    return ComposeResult(output=out, mask=mask, mask_inflated=inflated, traj=traj)


def remove(bg: np.ndarray, region: np.ndarray, model: Denoiser,
           steps: int = DEFAULT_STEPS, seed: int = 0,
           schedule_kind: str = "linear") -> ComposeResult:
    """Erase whatever the region mask covers by compositing with a blank
    foreground clip; the model fills the hole with background."""
    check_video(bg, "bg")
    check_mask(region, "region")
    if region.shape != bg.shape[:3]:
        raise InvalidInputError(f"region {region.shape} must match bg dims {bg.shape[:3]}")
    if region.max() == 0.0:
        raise NothingToInsertError("region mask is empty on every frame")
    f, h, w, c = bg.shape
    inflated = inflate_mask(region)
    masked = make_masked_video(bg, inflated)
    crop = model.cfg.fg_crop or (h, w)
    fg = np.zeros((f, crop[0], crop[1], c), dtype=np.float32)
    sched = _make_sched(model, schedule_kind)
    out = diffusion.sample(model, sched, masked[None], inflated[None], fg[None],
                           steps=steps, seed=seed)[0]
    traj = np.zeros((f, 2), dtype=np.float64)
    return ComposeResult(output=out, mask=region, mask_inflated=inflated, traj=traj)
