"""Metric oracles: PSNR scalar cases, SSIM against a naive loop, adherence."""
import numpy as np
import pytest

from gencomp.errors import EmptyRegionError, InvalidInputError
from gencomp.metrics import (
    PSNR_SENTINEL,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
    psnr,
    ssim,
    trajectory_adherence,
)


def _video(rng, shape=(2, 16, 16, 3)):
    return rng.random(shape, dtype=np.float32)


# -------------------------------------------------------------------- PSNR

def test_psnr_constant_offset_oracle():
    # uniform 0.1 error: MSE = 0.01, 10*log10(1/0.01) = 20 dB exactly
    a = np.full((2, 8, 8, 3), 0.5, dtype=np.float32)
    b = a + np.float32(0.1)
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-5)
    # 0.5 offset: MSE 0.25 -> 10*log10(4) dB
    c = a + np.float32(0.5)
    assert psnr(a, c) == pytest.approx(10.0 * np.log10(4.0), abs=1e-5)


def test_psnr_sentinel_on_identical():
    a = np.full((1, 4, 4, 3), 0.3, dtype=np.float32)
    assert psnr(a, a.copy()) == PSNR_SENTINEL


def test_psnr_region_restricts():
    a = np.zeros((1, 8, 8, 3), dtype=np.float32)
    b = a.copy()
    b[0, :4] = 1.0  # error confined to the top half
    region_clean = np.zeros((1, 8, 8), dtype=np.float32)
    region_clean[0, 4:] = 1.0
    assert psnr(a, b, region=region_clean) == PSNR_SENTINEL
    region_dirty = 1.0 - region_clean
    assert psnr(a, b, region=region_dirty) == pytest.approx(0.0, abs=1e-6)


def test_psnr_validation():
    a = np.zeros((1, 4, 4, 3), dtype=np.float32)
    with pytest.raises(InvalidInputError):
        psnr(a, np.zeros((1, 4, 5, 3), dtype=np.float32))
    with pytest.raises(EmptyRegionError):
        psnr(a, a, region=np.zeros((1, 4, 4), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        psnr(a, a, region=np.zeros((1, 8, 8), dtype=np.float32))


# -------------------------------------------------------------------- SSIM

def _ssim_naive(a, b):
    """Direct per-window loop over valid positions, one frame pair."""
    half = SSIM_WINDOW // 2
    x1 = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-(x1 * x1) / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    k1 /= k1.sum()
    k2d = np.outer(k1, k1)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    x = a.astype(np.float64).mean(axis=-1)
    y = b.astype(np.float64).mean(axis=-1)
    h, w = x.shape
    vals = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(w - SSIM_WINDOW + 1):
            wx = x[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            wy = y[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            mx = (k2d * wx).sum()
            my = (k2d * wy).sum()
            vx = (k2d * wx * wx).sum() - mx * mx
            vy = (k2d * wy * wy).sum() - my * my
            vxy = (k2d * wx * wy).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * vxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_naive_loop():
    rng = np.random.default_rng(0)
    a = _video(rng, (1, 16, 16, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape).astype(np.float32), 0, 1)
    got = ssim(a, b)
    want = _ssim_naive(a[0], b[0])
    assert got == pytest.approx(want, abs=1e-6)


def test_ssim_identity_and_range():
    rng = np.random.default_rng(1)
    a = _video(rng)
    assert ssim(a, a.copy()) == pytest.approx(1.0, abs=1e-12)
    b = _video(np.random.default_rng(2))
    v = ssim(a, b)
    assert -1.0 <= v < 1.0


def test_ssim_degrades_with_noise():
    rng = np.random.default_rng(3)
    a = _video(rng, (1, 24, 24, 3))
    small = np.clip(a + 0.05 * rng.standard_normal(a.shape).astype(np.float32), 0, 1)
    big = np.clip(a + 0.4 * rng.standard_normal(a.shape).astype(np.float32), 0, 1)
    assert ssim(a, small) > ssim(a, big)


def test_ssim_window_validation():
    a = np.zeros((1, 8, 8, 3), dtype=np.float32)
    with pytest.raises(InvalidInputError):
        ssim(a, a)


# --------------------------------------------------------------- adherence

def _sprite_video(centers, color=(0.1, 0.2, 0.3), h=32, w=32):
    out = np.full((len(centers), h, w, 3), 0.9, dtype=np.float32)
    for i, (cx, cy) in enumerate(centers):
        out[i, int(cy) - 2:int(cy) + 3, int(cx) - 2:int(cx) + 3] = color
    return out


def test_adherence_zero_when_centered_on_path():
    centers = [(8, 16), (12, 16), (16, 16)]
    video = _sprite_video(centers)
    path = np.array(centers, dtype=np.float64)
    assert trajectory_adherence(video, path, (0.1, 0.2, 0.3)) == pytest.approx(0.0, abs=1e-9)


def test_adherence_constant_shift_oracle():
    centers = [(8, 16), (12, 16), (16, 16)]
    video = _sprite_video([(cx + 3, cy) for cx, cy in centers])
    path = np.array(centers, dtype=np.float64)
    assert trajectory_adherence(video, path, (0.1, 0.2, 0.3)) == pytest.approx(3.0, abs=1e-9)


def test_adherence_blank_frame_penalty():
    video = np.full((2, 32, 32, 3), 0.9, dtype=np.float32)  # no sprite anywhere
    path = np.zeros((2, 2))
    assert trajectory_adherence(video, path, (0.1, 0.2, 0.3)) == 32.0


def test_adherence_path_shape_validation():
    video = _sprite_video([(8, 16)])
    with pytest.raises(InvalidInputError):
        trajectory_adherence(video, np.zeros((3, 2)), (0.1, 0.2, 0.3))
