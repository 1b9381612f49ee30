"""Deterministic synthetic scenes: a colored sprite gliding over a static
background, with exact masks and analytic center paths.

Sprites are rasterized hard-edged from an integer-centered stencil, so the
per-frame mask pixel count is identical across frames and the mask covers
exactly the pixels where the composite differs from the background."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .control import ControlSpec
from .convert import (
    LUMA,
    center_foreground,
    gamma_correct,
    inflate_mask,
    make_masked_video,
    _half_up,
)
from .errors import InvalidInputError, SpecViolationError
from .video import read_frames, write_frames

BG_KINDS = ("solid", "gradient", "checker")
SPRITES = ("disk", "square", "triangle")
PATH_KINDS = ("linear", "sinusoidal")

# luminance bands guaranteeing sprite/background contrast >= 0.3, with the
# darker side kept above the black-surround threshold used for fg masks
LIGHT_BAND = (0.62, 0.90)
DARK_BAND = (0.15, 0.30)


@dataclass(frozen=True)
class SceneSpec:
    n_frames: int = 8
    height: int = 32
    width: int = 32
    bg_kind: str = "solid"
    bg_colors: tuple = ((0.7, 0.7, 0.7), (0.8, 0.8, 0.8))
    bg_axis: str = "x"           # gradient direction
    checker_tile: int = 8
    sprite: str = "disk"
    sprite_color: tuple = (0.2, 0.2, 0.2)
    radius: int = 4
    path_kind: str = "linear"
    path_start: tuple = (8.0, 16.0)
    path_end: tuple = (24.0, 16.0)
    amp: float = 0.0             # sinusoidal vertical swing, px
    cycles: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.bg_kind not in BG_KINDS:
            raise InvalidInputError(f"bg_kind must be one of {BG_KINDS}, got {self.bg_kind!r}")
        if self.sprite not in SPRITES:
            raise InvalidInputError(f"sprite must be one of {SPRITES}, got {self.sprite!r}")
        if self.path_kind not in PATH_KINDS:
            raise InvalidInputError(
                f"path_kind must be one of {PATH_KINDS}, got {self.path_kind!r}")
        if self.radius < 1:
            raise InvalidInputError(f"radius must be >= 1, got {self.radius}")
        if min(self.n_frames, self.height, self.width) < 1:
            raise InvalidInputError("n_frames, height, width must all be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bg_colors"] = [list(c) for c in self.bg_colors]
        d["path_start"] = list(self.path_start)
        d["path_end"] = list(self.path_end)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["bg_colors"] = tuple(tuple(c) for c in d["bg_colors"])
        d["sprite_color"] = tuple(d["sprite_color"])
        d["path_start"] = tuple(d["path_start"])
        d["path_end"] = tuple(d["path_end"])
        return cls(**d)


@dataclass
class Sample:
    """One synthetic scene: composite, its exact mask, the centered
    foreground clip, and the analytic sprite path. `background` is the clean
    plate the sprite was drawn over."""
    spec: SceneSpec
    source: np.ndarray       # (F,H,W,C)
    fg_centered: np.ndarray  # (F,H,W,C), element on black
    fg_mask: np.ndarray      # (F,H,W)
    mask: np.ndarray         # (F,H,W) exact sprite mask in source
    background: np.ndarray   # (F,H,W,C)
    path_truth: np.ndarray   # (F,2) analytic (x, y)


def render_background(spec: SceneSpec) -> np.ndarray:
    h, w, f = spec.height, spec.width, spec.n_frames
    c0 = np.array(spec.bg_colors[0], dtype=np.float32)
    c1 = np.array(spec.bg_colors[-1], dtype=np.float32)
    if spec.bg_kind == "solid":
        frame = np.broadcast_to(c0, (h, w, 3)).copy()
    elif spec.bg_kind == "gradient":
        n = w if spec.bg_axis == "x" else h
        ramp = np.linspace(0.0, 1.0, n, dtype=np.float32)
        if spec.bg_axis == "x":
            frame = c0 + ramp[None, :, None] * (c1 - c0)
            frame = np.broadcast_to(frame, (h, w, 3)).copy()
        else:
            frame = c0 + ramp[:, None, None] * (c1 - c0)
            frame = np.broadcast_to(frame, (h, w, 3)).copy()
    else:
        ts = max(1, spec.checker_tile)
        yy, xx = np.mgrid[0:h, 0:w]
        tiles = ((yy // ts + xx // ts) % 2).astype(bool)
        frame = np.where(tiles[..., None], c1, c0).astype(np.float32)
    return np.broadcast_to(frame, (f, h, w, 3)).astype(np.float32).copy()


def sprite_stencil(sprite: str, radius: int) -> np.ndarray:
    """(2r+1, 2r+1) boolean footprint; translation-invariant, so pasting at
    any integer center yields the same pixel count."""
    r = radius
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    if sprite == "disk":
        return (dy * dy + dx * dx) <= r * r
    if sprite == "square":
        return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
    if sprite == "triangle":
        # apex up: row dy spans half-width (dy + r) / 2
        return np.abs(dx) <= (dy + r) / 2.0
    raise InvalidInputError(f"unknown sprite {sprite!r}")


def analytic_path(spec: SceneSpec) -> np.ndarray:
    f = spec.n_frames
    u = np.arange(f, dtype=np.float64) / max(f - 1, 1)
    x0, y0 = spec.path_start
    x1, y1 = spec.path_end
    xs = x0 + u * (x1 - x0)
    ys = y0 + u * (y1 - y0)
    if spec.path_kind == "sinusoidal":
        ys = ys + spec.amp * np.sin(2.0 * np.pi * spec.cycles * u)
    return np.stack([xs, ys], axis=-1)


def generate_sample(spec: SceneSpec) -> Sample:
    bg = render_background(spec)
    path = analytic_path(spec)
    stencil = sprite_stencil(spec.sprite, spec.radius)
    r = spec.radius
    f, h, w = spec.n_frames, spec.height, spec.width
    source = bg.copy()
    mask = np.zeros((f, h, w), dtype=np.float32)
    color = np.array(spec.sprite_color, dtype=np.float32)
    for i in range(f):
        cx, cy = _half_up(path[i, 0]), _half_up(path[i, 1])
        if cy - r < 0 or cy + r >= h or cx - r < 0 or cx + r >= w:
            raise SpecViolationError(
                f"sprite (radius {r}) leaves the {w}x{h} frame at frame {i}: "
                f"center ({cx}, {cy})")
        region = (slice(cy - r, cy + r + 1), slice(cx - r, cx + r + 1))
        mask[i][region][stencil] = 1.0
        source[i][region][stencil] = color
    fg, fg_mask, skipped = center_foreground(source, mask)
    if skipped:
        raise SpecViolationError(f"internal: empty mask frames {skipped}")
    return Sample(spec=spec, source=source, fg_centered=fg, fg_mask=fg_mask,
                  mask=mask, background=bg, path_truth=path)


def scene_contrast(spec: SceneSpec) -> float:
    """Minimum sprite/background luminance gap across background colors."""
    ls = float(np.dot(spec.sprite_color, LUMA))
    gaps = [abs(float(np.dot(c, LUMA)) - ls) for c in spec.bg_colors]
    return min(gaps)


def _draw_color(rng: np.random.Generator, band: tuple[float, float]) -> tuple:
    lo, hi = band
    for _ in range(100):
        c = rng.uniform(0.0, 1.0, size=3)
        if lo <= float(c @ LUMA) <= hi:
            return tuple(round(float(v), 6) for v in c)
    mid = (lo + hi) / 2.0
    return (mid, mid, mid)


def random_scene(rng: np.random.Generator, n_frames: int = 8, height: int = 32,
                 width: int = 32, radii: tuple[int, int] = (2, 6)) -> SceneSpec:
    """Draw a scene whose sprite stays in bounds, moves a substantial
    distance, and contrasts with the background by >= 0.3 luminance."""
    light_sprite = bool(rng.random() < 0.5)
    sprite_band, bg_band = (LIGHT_BAND, DARK_BAND) if light_sprite else (DARK_BAND, LIGHT_BAND)
    bg_kind = str(rng.choice(BG_KINDS))
    sprite = str(rng.choice(SPRITES))
    radius = int(rng.integers(radii[0], radii[1] + 1))
    margin = radius + 1
    y_lo, y_hi = margin, height - 1 - margin
    # start and end thirds guarantee a trajectory at least W/3 long
    left = (margin, width // 3)
    right = (2 * width // 3, width - 1 - margin)
    if rng.random() < 0.5:
        left, right = right, left
    x0 = float(rng.uniform(*left))
    x1 = float(rng.uniform(*right))
    path_kind = str(rng.choice(PATH_KINDS))
    amp = 0.0
    cycles = 1
    if path_kind == "sinusoidal":
        amp_max = min(6.0, (y_hi - y_lo) / 2.0 - 1.0)
        if amp_max < 1.5:
            path_kind = "linear"
        else:
            amp = float(round(rng.uniform(1.5, amp_max), 4))
            cycles = int(rng.integers(1, 3))
    swing = amp if path_kind == "sinusoidal" else 0.0
    y0 = float(rng.uniform(y_lo + swing, y_hi - swing))
    y1 = float(rng.uniform(y_lo + swing, y_hi - swing))
    return SceneSpec(
        n_frames=n_frames, height=height, width=width,
        bg_kind=bg_kind,
        bg_colors=(_draw_color(rng, bg_band), _draw_color(rng, bg_band)),
        bg_axis=str(rng.choice(("x", "y"))),
        checker_tile=int(rng.integers(4, 9)),
        sprite=sprite,
        sprite_color=_draw_color(rng, sprite_band),
        radius=radius,
        path_kind=path_kind,
        path_start=(round(x0, 4), round(y0, 4)),
        path_end=(round(x1, 4), round(y1, 4)),
        amp=amp, cycles=cycles,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def make_training_example(sample: Sample, rng: np.random.Generator | None = None,
                          sigma: float = 3.0, threshold: float = 0.1,
                          gamma_range: tuple[float, float] = (0.4, 1.9)):
    """(z0, masked_video, inflated mask, augmented fg) for one scene.

    The insertion region is the inflated exact mask; the foreground clip gets
    a random luminance shift when an rng is supplied."""
    inflated = inflate_mask(sample.mask, sigma=sigma, threshold=threshold)
    masked = make_masked_video(sample.source, inflated)
    fg = sample.fg_centered
    if rng is not None:
        gamma = float(rng.uniform(*gamma_range))
        fg = gamma_correct(fg, gamma)
    return sample.source, masked, inflated, fg


# ---- corpus on disk ----------------------------------------------------------

def build_corpus(n: int, seed: int, out_dir: str | Path | None = None,
                 **scene_kwargs) -> list[Sample]:
    """n random scenes from one seed; optionally written as PNG sequences
    plus a JSONL manifest."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    samples = [generate_sample(random_scene(rng, **scene_kwargs)) for _ in range(n)]
    if out_dir is not None:
        write_corpus(samples, out_dir)
    return samples


def write_corpus(samples: list[Sample], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, s in enumerate(samples):
        sdir = out / f"sample_{i:03d}"
        paths = {
            "source": str(sdir / "source"),
            "fg": str(sdir / "fg"),
            "fg_mask": str(sdir / "fg_mask"),
            "mask": str(sdir / "mask"),
            "background": str(sdir / "background"),
            "path": str(sdir / "path_truth.json"),
        }
        write_frames(s.source, paths["source"])
        write_frames(s.fg_centered, paths["fg"])
        write_frames(s.fg_mask, paths["fg_mask"])
        write_frames(s.mask, paths["mask"])
        write_frames(s.background, paths["background"])
        with open(paths["path"], "w") as fh:
            json.dump({"path": s.path_truth.tolist()}, fh)
        records.append({"id": i, "paths": paths, "spec": s.spec.to_dict()})
    manifest = out / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def load_corpus(corpus_dir: str | Path) -> list[Sample]:
    manifest = Path(corpus_dir) / "manifest.jsonl"
    if not manifest.exists():
        raise InvalidInputError(f"no manifest.jsonl under {corpus_dir}")
    samples = []
    with open(manifest) as fh:
        for line in fh:
            rec = json.loads(line)
            p = rec["paths"]
            with open(p["path"]) as pf:
                path = np.array(json.load(pf)["path"], dtype=np.float64)
            samples.append(Sample(
                spec=SceneSpec.from_dict(rec["spec"]),
                source=read_frames(p["source"]),
                fg_centered=read_frames(p["fg"]),
                fg_mask=read_frames(p["fg_mask"], as_mask=True),
                mask=read_frames(p["mask"], as_mask=True),
                background=read_frames(p["background"]),
                path_truth=path,
            ))
    return samples


def control_from_path(path: np.ndarray, scale: float = 1.0,
                      n_points: int = 4) -> ControlSpec:
    """Sparse drag-mode control following a dense path (for tests and demos)."""
    f = path.shape[0]
    idx = np.unique(np.round(np.linspace(0, f - 1, min(n_points, f))).astype(int))
    points = [(int(i), float(path[i, 0]), float(path[i, 1])) for i in idx]
    return ControlSpec(mode="drag", points=points, scale=scale)
