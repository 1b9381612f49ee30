"""Compositing denoiser: a DiT trunk that fuses background and foreground
token streams by self-attention over their concatenation, with a background
preservation branch injected after every fusion block.

All math is explicit numpy with hand-written backward passes; see layers.py
for the calling convention (fwd returns (out, cache), bwd consumes it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from einops import rearrange

from .diffusion import make_schedule
from .errors import ConfigError, ContractViolationError, InvalidInputError
from .layers import (
    DiTBlock,
    CrossCondBlock,
    FinalHead,
    Linear,
    Module,
    TimestepEmbedder,
    silu_bwd,
    silu_fwd,
)
from .rope import RotaryTable, build_grid, concat_grids, extend_grid

ABLATIONS = (
    "full",
    "shared_rope",
    "erope_h",
    "erope_w",
    "erope_t",
    "no_bpbranch",
    "xattn_injection",
)

# Axis along which foreground token coordinates are offset past the
# background's extent. None means the streams share coordinates.
_EXTEND_AXIS = {
    "full": "h",
    "erope_h": "h",
    "erope_w": "w",
    "erope_t": "t",
    "shared_rope": None,
    "no_bpbranch": "h",
    "xattn_injection": "h",
}


@dataclass
class ModelConfig:
    d_model: int = 128
    n_heads: int = 4
    fusion_depth: int = 4
    bp_depth: int = 2
    mlp_ratio: int = 4
    patch: tuple[int, int, int] = (1, 4, 4)
    channels: int = 3
    T_diffusion: int = 100
    ablation: str = "full"
    rope_base: float = 10000.0
    dtype: str = "float32"
    # spatial center-crop applied to foreground clips before patchify (the
    # centered element occupies the middle, so cropping just trims dead black
    # border and shrinks the token budget); None keeps the full frame
    fg_crop: tuple[int, int] | None = None
    # What the final head parametrizes; the network output is converted to
    # the noise estimate inside the forward pass, so the loss and sampler
    # interfaces are identical for every choice.
    #   "eps": the head is the noise estimate. The clean-video estimate a
    #     sampler derives from it amplifies head error by sqrt((1-abar)/abar),
    #     which is enormous at high noise levels.
    #   "x0": the head is a clean-video estimate, eps = (z_t - sqrt(abar)*x0)
    #     / sqrt(1-abar). Bounded at high noise, but the noise-space MSE then
    #     weights head error by abar/(1-abar), which concentrates essentially
    #     all gradient at t ~ 0 and starves the rest of the range.
    #   "v": the head is the velocity v = sqrt(abar)*eps - sqrt(1-abar)*x0,
    #     eps = sqrt(1-abar)*z_t + sqrt(abar)*v. The noise-space MSE weights
    #     head error by abar (flat over most of the range) and the implied
    #     clean video sqrt(abar)*z_t - sqrt(1-abar)*v stays bounded, with
    #     both conversion coefficients at most 1.
    head_output: str = "eps"
    # schedule used for the head conversion; must match the training and
    # sampling schedule so the DDIM x0 estimate reduces to the head output
    schedule_kind: str = "linear"

    def __post_init__(self):
        if self.head_output not in ("eps", "x0", "v"):
            raise ConfigError(
                f"head_output must be 'eps', 'x0' or 'v', got {self.head_output!r}")
        if self.schedule_kind not in ("linear", "cosine"):
            raise ConfigError(f"unknown schedule_kind {self.schedule_kind!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}, expected one of {ABLATIONS}")
        if self.fusion_depth < 1 or self.bp_depth < 1:
            raise ConfigError("fusion_depth and bp_depth must be >= 1")
        if self.T_diffusion < 2:
            raise ConfigError(f"T_diffusion must be >= 2, got {self.T_diffusion}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        head_dim = self.d_model // self.n_heads
        if head_dim % 2 != 0 or head_dim < 6:
            raise ConfigError(f"head_dim={head_dim} must be even and >= 6 for 3-axis rotary")
        if len(self.patch) != 3 or any(p < 1 for p in self.patch):
            raise ConfigError(f"patch must be three positive ints, got {self.patch}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def patch_vol(self) -> int:
        pt, ph, pw = self.patch
        return pt * ph * pw

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch"] = list(self.patch)
        if self.fg_crop is not None:
            d["fg_crop"] = list(self.fg_crop)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "patch" in d:
            d["patch"] = tuple(d["patch"])
        if d.get("fg_crop") is not None:
            d["fg_crop"] = tuple(d["fg_crop"])
        return cls(**d)


def center_crop_fg(fg: np.ndarray, crop: tuple[int, int] | None) -> np.ndarray:
    """Center-crop foreground frames to (h, w); no-op when crop is None."""
    if crop is None:
        return fg
    ch, cw = crop
    h, w = fg.shape[-3], fg.shape[-2]
    if ch > h or cw > w:
        raise InvalidInputError(f"crop {crop} larger than foreground frames {(h, w)}")
    y0 = (h - ch) // 2
    x0 = (w - cw) // 2
    return fg[..., y0:y0 + ch, x0:x0 + cw, :]


def grid_dims(f: int, h: int, w: int, patch: tuple[int, int, int]) -> tuple[int, int, int]:
    pt, ph, pw = patch
    return (-(-f // pt), -(-h // ph), -(-w // pw))


def patchify(video: np.ndarray, patch: tuple[int, int, int]) -> np.ndarray:
    """(B,F,H,W,C) -> (B, N, pt*ph*pw*C), zero-padding ragged edges."""
    pt, ph, pw = patch
    b, f, h, w, c = video.shape
    gt, gh, gw = grid_dims(f, h, w, patch)
    pad = ((0, 0), (0, gt * pt - f), (0, gh * ph - h), (0, gw * pw - w), (0, 0))
    if any(p[1] for p in pad):
        video = np.pad(video, pad)
    return rearrange(
        video, "b (gt pt) (gh ph) (gw pw) c -> b (gt gh gw) (pt ph pw c)",
        pt=pt, ph=ph, pw=pw,
    )


def unpatchify(tokens: np.ndarray, patch: tuple[int, int, int],
               shape: tuple[int, int, int, int]) -> np.ndarray:
    """(B, N, pt*ph*pw*C) -> (B,F,H,W,C), cropping any padding."""
    pt, ph, pw = patch
    f, h, w, c = shape
    gt, gh, gw = grid_dims(f, h, w, patch)
    video = rearrange(
        tokens, "b (gt gh gw) (pt ph pw c) -> b (gt pt) (gh ph) (gw pw) c",
        gt=gt, gh=gh, gw=gw, pt=pt, ph=ph, pw=pw,
    )
    return video[:, :f, :h, :w, :]


def patchify_bwd(d_tokens: np.ndarray, patch: tuple[int, int, int],
                 shape: tuple[int, int, int, int]) -> np.ndarray:
    # adjoint of zero-pad is crop, so this is exactly unpatchify
    return unpatchify(d_tokens, patch, shape)


def unpatchify_bwd(d_video: np.ndarray, patch: tuple[int, int, int]) -> np.ndarray:
    # adjoint of crop is zero-pad, which patchify already performs
    return patchify(d_video, patch)


def inject_background(noisy: np.ndarray, bp: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Masked token injection: out = noisy + (1 - m) * bp per token.

    Preserved-background information only enters tokens outside the insertion
    region (m == 0); tokens with m == 1 pass through untouched. noisy/bp are
    (..., N, d), m is (..., N)."""
    noisy = np.asarray(noisy)
    bp = np.asarray(bp)
    m = np.asarray(m)
    if noisy.shape != bp.shape:
        raise InvalidInputError(f"noisy {noisy.shape} and bp {bp.shape} must match")
    if m.shape != noisy.shape[:-1]:
        raise InvalidInputError(
            f"mask shape {m.shape} must match token layout {noisy.shape[:-1]}")
    return noisy + (1.0 - m)[..., None] * bp


def check_fusion_grids(noisy_grid, fg_grid, axis: str) -> None:
    """Fusion over concatenated streams requires the condition grid to have
    been shifted off the main grid along the chosen axis; overlapping labels
    mean the shift was skipped."""
    a = set(np.unique(noisy_grid.axis_values(axis)))
    b = set(np.unique(fg_grid.axis_values(axis)))
    if a & b:
        raise ContractViolationError(
            f"main and condition grids share {len(a & b)} position labels on "
            f"axis {axis!r}; extend the condition grid before fusing")


def downsample_mask(mask: np.ndarray, patch: tuple[int, int, int]) -> np.ndarray:
    """(B,F,H,W) -> (B, N) token mask; a token counts as masked if ANY of its
    pixels lies in the insertion region."""
    pt, ph, pw = patch
    b, f, h, w = mask.shape
    gt, gh, gw = grid_dims(f, h, w, patch)
    pad = ((0, 0), (0, gt * pt - f), (0, gh * ph - h), (0, gw * pw - w))
    if any(p[1] for p in pad):
        mask = np.pad(mask, pad)
    m = mask.reshape(b, gt, pt, gh, ph, gw, pw)
    return m.max(axis=(2, 4, 6)).reshape(b, gt * gh * gw)


class BPBranch(Module):
    """Background preservation branch: patchifies the masked video together
    with its mask, runs a short DiT stack, and emits a token-space residual
    through a zero-initialized head (silent at the start of training)."""

    def __init__(self, rng, cfg: ModelConfig):
        super().__init__()
        d, dt = cfg.d_model, cfg.np_dtype
        in_dim = cfg.patch_vol * (cfg.channels + 1)
        self.embed = self.child("embed", Linear(rng, in_dim, d, dt))
        self.blocks = [
            self.child(f"blocks.{i}", DiTBlock(rng, d, cfg.n_heads, cfg.mlp_ratio, dt))
            for i in range(cfg.bp_depth)
        ]
        self.head = self.child("head", Linear(rng, d, d, dt, zero_init=True))

    def fwd(self, tokens_in: np.ndarray, c: np.ndarray, rot):
        x, ce = self.embed.fwd(tokens_in)
        caches = []
        for blk in self.blocks:
            x, cb = blk.fwd(x, c, rot)
            caches.append(cb)
        y, ch = self.head.fwd(x)
        return y, (ce, caches, ch)

    def bwd(self, dy: np.ndarray, cache):
        ce, caches, ch = cache
        dx = self.head.bwd(dy, ch)
        dc = None
        for blk, cb in zip(reversed(self.blocks), reversed(caches)):
            dx, dci = blk.bwd(dx, cb)
            dc = dci if dc is None else dc + dci
        d_in = self.embed.bwd(dx, ce)
        return d_in, dc


class Denoiser(Module):
    """Predicts the noise content of z_t given the masked background, its
    mask, and the foreground clip."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d, dt = cfg.d_model, cfg.np_dtype
        pv = cfg.patch_vol
        c = cfg.channels

        self.temb = self.child("temb", TimestepEmbedder(rng, d, dt))
        # main stream sees z_t stacked with the masked background video
        self.embed_main = self.child("embed_main", Linear(rng, pv * 2 * c, d, dt))
        self.embed_fg = self.child("embed_fg", Linear(rng, pv * c, d, dt))

        block_cls = CrossCondBlock if cfg.ablation == "xattn_injection" else DiTBlock
        self.blocks = [
            self.child(f"blocks.{i}", block_cls(rng, d, cfg.n_heads, cfg.mlp_ratio, dt))
            for i in range(cfg.fusion_depth)
        ]

        self.bp = None
        if cfg.ablation != "no_bpbranch":
            self.bp = self.child("bp", BPBranch(rng, cfg))

        self.head = self.child("head", FinalHead(rng, d, pv * c, dt))
        self.rope = RotaryTable(head_dim=d // cfg.n_heads, base=cfg.rope_base)
        self.extend_axis = _EXTEND_AXIS[cfg.ablation]
        self._abar = None
        if cfg.head_output != "eps":
            self._abar = make_schedule(cfg.T_diffusion, cfg.schedule_kind).alpha_bar

    # ---- geometry ---------------------------------------------------------

    def _grids(self, bg_dims, fg_dims):
        bg = build_grid(*grid_dims(*bg_dims, self.cfg.patch))
        fg = build_grid(*grid_dims(*fg_dims, self.cfg.patch))
        if self.extend_axis is not None:
            fg = extend_grid(bg, fg, self.extend_axis)
            check_fusion_grids(bg, fg, self.extend_axis)
        return bg, fg

    def _rot(self, grid):
        ang = self.rope.angles(grid)
        dt = self.cfg.np_dtype
        return np.cos(ang).astype(dt), np.sin(ang).astype(dt)

    # ---- forward ----------------------------------------------------------

    def _check_inputs(self, z_t, t, masked_video, mask, fg):
        for name, v in (("z_t", z_t), ("masked_video", masked_video), ("fg", fg)):
            if v.ndim != 5:
                raise InvalidInputError(f"{name} must be (B,F,H,W,C), got shape {v.shape}")
            if v.shape[-1] != self.cfg.channels:
                raise InvalidInputError(
                    f"{name} has {v.shape[-1]} channels, model expects {self.cfg.channels}")
        if mask.ndim != 4:
            raise InvalidInputError(f"mask must be (B,F,H,W), got shape {mask.shape}")
        if z_t.shape != masked_video.shape:
            raise InvalidInputError(
                f"z_t {z_t.shape} and masked_video {masked_video.shape} must match")
        if mask.shape != z_t.shape[:4]:
            raise InvalidInputError(
                f"mask {mask.shape} must match video dims {z_t.shape[:4]}")
        if z_t.shape[0] != fg.shape[0]:
            raise InvalidInputError("batch size mismatch between z_t and fg")
        t = np.asarray(t)
        if t.shape != (z_t.shape[0],):
            raise InvalidInputError(f"t must be shape ({z_t.shape[0]},), got {t.shape}")
        return t

    def fwd(self, z_t, t, masked_video, mask, fg):
        cfg = self.cfg
        dt = cfg.np_dtype
        t = self._check_inputs(z_t, t, masked_video, mask, fg)
        z_t = z_t.astype(dt, copy=False)
        masked_video = masked_video.astype(dt, copy=False)
        mask = mask.astype(dt, copy=False)
        fg = fg.astype(dt, copy=False)

        bg_dims = z_t.shape[1:4]
        fg_dims = fg.shape[1:4]
        bg_grid, fg_grid = self._grids(bg_dims, fg_dims)
        rot_bg = self._rot(bg_grid)
        rot_cat = self._rot(concat_grids(bg_grid, fg_grid))
        n_bg = bg_grid.coords.shape[0]

        temb_y, c_temb = self.temb.fwd(t)
        c, c_silu = silu_fwd(temb_y)

        tok_main = patchify(np.concatenate([z_t, masked_video], axis=-1), cfg.patch)
        x, c_main = self.embed_main.fwd(tok_main)
        tok_fg = patchify(fg, cfg.patch)
        fgt, c_fg = self.embed_fg.fwd(tok_fg)

        bp_out = None
        c_bp = None
        tm = None
        keep = None
        if self.bp is not None:
            tok_bp = patchify(np.concatenate([masked_video, mask[..., None]], axis=-1), cfg.patch)
            bp_out, c_bp = self.bp.fwd(tok_bp, c, rot_bg)
            tm = downsample_mask(mask, cfg.patch).astype(dt)
            keep = (1.0 - tm)[:, :, None]

        block_caches = []
        if cfg.ablation == "xattn_injection":
            for blk in self.blocks:
                x, cb = blk.fwd(x, c, rot_bg, fgt)
                if bp_out is not None:
                    x = inject_background(x, bp_out, tm)
                block_caches.append(cb)
        else:
            for blk in self.blocks:
                xcat = np.concatenate([x, fgt], axis=1)
                y, cb = blk.fwd(xcat, c, rot_cat)
                x, fgt = y[:, :n_bg], y[:, n_bg:]
                if bp_out is not None:
                    x = inject_background(x, bp_out, tm)
                block_caches.append(cb)

        out_tok, c_head = self.head.fwd(x, c)
        raw = unpatchify(out_tok, cfg.patch, (*bg_dims, cfg.channels))
        d_raw_coef = None
        if self._abar is None:
            eps = raw
        else:
            ab = self._abar[t].reshape((-1,) + (1,) * 4)
            sq_ab = np.sqrt(ab).astype(dt)
            sq_1m = np.sqrt(1.0 - ab).astype(dt)
            if cfg.head_output == "x0":
                eps = (z_t - sq_ab * raw) / sq_1m
                d_raw_coef = -sq_ab / sq_1m
            else:  # "v"
                eps = sq_1m * z_t + sq_ab * raw
                d_raw_coef = sq_ab
        cache = (
            c_temb, c_silu, c_main, c_fg, c_bp, keep, block_caches, c_head,
            bg_dims, fg_dims, n_bg, d_raw_coef,
        )
        return eps, cache

    def predict_noise(self, z_t, t, masked_video, mask, fg) -> np.ndarray:
        eps, _ = self.fwd(z_t, t, masked_video, mask, fg)
        return eps

    # ---- backward ---------------------------------------------------------

    def bwd(self, d_eps: np.ndarray, cache) -> None:
        cfg = self.cfg
        (c_temb, c_silu, c_main, c_fg, c_bp, keep, block_caches, c_head,
         bg_dims, fg_dims, n_bg, d_raw_coef) = cache

        d_eps = d_eps.astype(cfg.np_dtype, copy=False)
        if d_raw_coef is not None:
            # parameters reach eps only through the head's x0 estimate
            d_eps = d_raw_coef * d_eps
        d_tok = unpatchify_bwd(d_eps, cfg.patch)
        dx, dc = self.head.bwd(d_tok, c_head)

        d_bp = None
        dfgt = None
        if cfg.ablation == "xattn_injection":
            for blk, cb in zip(reversed(self.blocks), reversed(block_caches)):
                if keep is not None:
                    g = keep * dx
                    d_bp = g if d_bp is None else d_bp + g
                dx, dci, dctx = blk.bwd(dx, cb)
                dc += dci
                dfgt = dctx if dfgt is None else dfgt + dctx
        else:
            b = d_tok.shape[0]
            dfgt = np.zeros((b, self._n_fg(fg_dims), cfg.d_model), cfg.np_dtype)
            for blk, cb in zip(reversed(self.blocks), reversed(block_caches)):
                if keep is not None:
                    g = keep * dx
                    d_bp = g if d_bp is None else d_bp + g
                dcat = np.concatenate([dx, dfgt], axis=1)
                dcat, dci = blk.bwd(dcat, cb)
                dc += dci
                dx, dfgt = dcat[:, :n_bg], dcat[:, n_bg:]

        if d_bp is not None:
            _, dc_bp = self.bp.bwd(d_bp, c_bp)
            dc += dc_bp
        self.embed_fg.bwd(dfgt, c_fg)
        self.embed_main.bwd(dx, c_main)
        d_temb = silu_bwd(dc, c_silu)
        self.temb.bwd(d_temb, c_temb)

    def _n_fg(self, fg_dims) -> int:
        gt, gh, gw = grid_dims(*fg_dims, self.cfg.patch)
        return gt * gh * gw

    # ---- state ------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        mine = dict(self.named_parameters())
        missing = sorted(set(mine) - set(state))
        extra = sorted(set(state) - set(mine))
        if missing or extra:
            raise InvalidInputError(
                f"parameter name mismatch: missing={missing[:4]} extra={extra[:4]}")
        for name, p in mine.items():
            v = np.asarray(state[name], dtype=p.value.dtype)
            if v.shape != p.value.shape:
                raise InvalidInputError(
                    f"shape mismatch for {name}: checkpoint {v.shape} vs model {p.value.shape}")
            p.value = v
            p.grad = np.zeros_like(v)
