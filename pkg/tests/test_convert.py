"""Control densification, tracking, and mask/video shaping tests."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from gencomp.control import ControlSpec
from gencomp.convert import (
    center_foreground,
    densify_trajectory,
    derive_fg_mask,
    gamma_correct,
    gaussian_blur2d,
    gaussian_kernel1d,
    inflate_mask,
    make_masked_video,
    mask_bbox,
    mask_centers,
    resize_nearest,
    retarget_mask,
    track_point,
)
from gencomp.errors import EmptyVideoError, InvalidInputError


def _disk_mask(f, h, w, centers, radius):
    """Binary (F,H,W) disk mask with per-frame centers [(x, y), ...]."""
    yy, xx = np.mgrid[0:h, 0:w]
    out = np.zeros((f, h, w), dtype=np.float32)
    for i, (cx, cy) in enumerate(centers):
        out[i] = ((xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2).astype(np.float32)
    return out


# ------------------------------------------------------------- primitives

def test_gaussian_kernel_normalized_and_symmetric():
    k = gaussian_kernel1d(2.0)
    assert len(k) == 13  # radius ceil(3*2) = 6
    assert k.sum() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(k, k[::-1], rtol=1e-15)
    assert np.argmax(k) == 6
    with pytest.raises(InvalidInputError):
        gaussian_kernel1d(0.0)


def test_gaussian_blur_preserves_mass_of_interior_delta():
    img = np.zeros((21, 21))
    img[10, 10] = 1.0
    out = gaussian_blur2d(img, 1.5)
    assert out.sum() == pytest.approx(1.0, rel=1e-10)
    assert np.argmax(out) == 10 * 21 + 10


def test_resize_nearest_integer_upsample_replicates():
    img = np.arange(4, dtype=np.float64).reshape(2, 2)
    up = resize_nearest(img, 4, 4)
    np.testing.assert_array_equal(up, np.repeat(np.repeat(img, 2, 0), 2, 1))
    np.testing.assert_array_equal(resize_nearest(img, 2, 2), img)


def test_mask_bbox_and_centers():
    m = np.zeros((2, 8, 8), dtype=np.float32)
    m[0, 2:5, 3:7] = 1.0  # rows 2..4, cols 3..6
    assert mask_bbox(m[0]) == (2, 5, 3, 7)
    assert mask_bbox(m[1]) is None
    c = mask_centers(m)
    np.testing.assert_allclose(c[0], [(3 + 6) / 2.0, (2 + 4) / 2.0])
    assert np.all(np.isnan(c[1]))


# ---------------------------------------------------------------- tracking

def _moving_square_video(f=6, h=32, w=32, start=(6.0, 16.0), vx=2.0):
    video = np.full((f, h, w, 3), 0.9, dtype=np.float32)
    truth = np.zeros((f, 2))
    for i in range(f):
        cx = start[0] + vx * i
        cy = start[1]
        truth[i] = (cx, cy)
        y0, y1 = int(cy) - 3, int(cy) + 4
        x0, x1 = int(cx) - 3, int(cx) + 4
        video[i, y0:y1, x0:x1] = 0.1
    return video, truth


def test_track_point_follows_moving_square():
    video, truth = _moving_square_video()
    pos = track_point(video, tuple(truth[0]), frame=0)
    assert pos.shape == (6, 2)
    np.testing.assert_allclose(pos, truth, atol=1.0)


def test_track_point_backward_from_last_frame():
    video, truth = _moving_square_video()
    pos = track_point(video, tuple(truth[-1]), frame=5)
    np.testing.assert_allclose(pos, truth, atol=1.0)


def test_track_point_validation():
    video, _ = _moving_square_video()
    with pytest.raises(InvalidInputError):
        track_point(video, (5.0, 5.0), frame=6)
    with pytest.raises(InvalidInputError):
        track_point(video, (99.0, 5.0), frame=0)


# ----------------------------------------------------------- densification

def test_densify_drag_interpolates_and_holds_endpoints():
    ctrl = ControlSpec(mode="drag", points=[(2, 10.0, 4.0), (4, 20.0, 8.0)], scale=1.0)
    traj = densify_trajectory(ctrl, 7)
    assert traj.shape == (7, 2)
    np.testing.assert_allclose(traj[2], [10.0, 4.0])
    np.testing.assert_allclose(traj[3], [15.0, 6.0])
    np.testing.assert_allclose(traj[4], [20.0, 8.0])
    np.testing.assert_allclose(traj[0], [10.0, 4.0])  # hold before first key
    np.testing.assert_allclose(traj[6], [20.0, 8.0])  # hold after last key


def test_densify_click_tracks_background():
    video, truth = _moving_square_video()
    ctrl = ControlSpec(mode="click", points=[(0, truth[0, 0], truth[0, 1])], scale=1.0)
    traj = densify_trajectory(ctrl, 6, bg_video=video)
    np.testing.assert_allclose(traj, truth, atol=1.0)
    with pytest.raises(InvalidInputError):
        densify_trajectory(ctrl, 6)  # click mode without video


def test_densify_validation():
    ctrl = ControlSpec(mode="drag", points=[(5, 1.0, 1.0)], scale=1.0)
    with pytest.raises(InvalidInputError):
        densify_trajectory(ctrl, 4)  # keypoint frame beyond clip
    with pytest.raises(EmptyVideoError):
        densify_trajectory(ctrl, 0)


# -------------------------------------------------------------- retargeting

def test_retarget_identity_at_own_centers():
    # retargeting a mask at scale 1 onto its own bbox centers is exact
    m = _disk_mask(4, 32, 32, [(8, 10), (12, 14), (16, 18), (20, 9)], radius=3)
    centers = mask_centers(m)
    out = retarget_mask(m, centers, 1.0, (4, 32, 32))
    np.testing.assert_array_equal(out, m)


def test_retarget_translation_preserves_area():
    m = _disk_mask(1, 32, 32, [(10, 10)], radius=3)
    out = retarget_mask(m, np.array([[20.0, 17.0]]), 1.0, (1, 32, 32))
    assert out.sum() == m.sum()
    assert mask_centers(out)[0] == pytest.approx([20.0, 17.0])


def test_retarget_integer_scale_area():
    # nearest-neighbor resize replicates pixels exactly for integer factors
    m = _disk_mask(1, 64, 64, [(20, 20)], radius=4)
    out = retarget_mask(m, np.array([[32.0, 32.0]]), 2.0, (1, 64, 64))
    assert out.sum() == 4 * m.sum()


def test_retarget_crops_at_borders_and_skips_empty():
    m = np.zeros((2, 16, 16), dtype=np.float32)
    m[0, 6:10, 6:10] = 1.0  # frame 1 empty
    out = retarget_mask(m, np.array([[0.0, 0.0], [8.0, 8.0]]), 1.0, (2, 16, 16))
    assert 0 < out[0].sum() < m[0].sum()  # partially off-screen
    assert out[1].sum() == 0.0  # fg loops to frame 1 of the 2-frame mask


def test_retarget_fg_loops_when_bg_longer():
    m = _disk_mask(2, 16, 16, [(5, 5), (10, 10)], radius=2)
    traj = np.full((5, 2), 8.0)
    out = retarget_mask(m, traj, 1.0, (5, 16, 16))
    np.testing.assert_array_equal(out[0], out[2])
    np.testing.assert_array_equal(out[1], out[3])
    np.testing.assert_array_equal(out[0], out[4])


def test_retarget_validation():
    m = _disk_mask(1, 16, 16, [(8, 8)], radius=2)
    with pytest.raises(InvalidInputError):
        retarget_mask(m, np.zeros((1, 2)), 0.0, (1, 16, 16))
    with pytest.raises(InvalidInputError):
        retarget_mask(m, np.zeros((3, 2)), 1.0, (1, 16, 16))


@given(cx=st.floats(4.0, 27.0), cy=st.floats(4.0, 27.0))
def test_retarget_center_lands_on_target(cx, cy):
    m = _disk_mask(1, 32, 32, [(16, 16)], radius=3)
    out = retarget_mask(m, np.array([[cx, cy]]), 1.0, (1, 32, 32))
    got = mask_centers(out)[0]
    assert abs(got[0] - cx) <= 0.5 and abs(got[1] - cy) <= 0.5


# ---------------------------------------------------------------- inflation

def test_inflate_contains_original_and_grows():
    m = np.zeros((1, 24, 24), dtype=np.float32)
    m[0, 10:14, 10:14] = 1.0
    out = inflate_mask(m)
    assert np.all(out >= m)  # strict superset by OR
    assert out.sum() > m.sum()
    # growth ring touches at least the 1-px neighborhood
    assert out[0, 9, 11] == 1.0 and out[0, 11, 14] == 1.0
    assert set(np.unique(out)) <= {0.0, 1.0}


def test_inflate_empty_stays_empty():
    m = np.zeros((2, 8, 8), dtype=np.float32)
    assert inflate_mask(m).sum() == 0.0


def test_inflate_validation():
    m = np.zeros((1, 8, 8), dtype=np.float32)
    with pytest.raises(InvalidInputError):
        inflate_mask(m, sigma=0.0)
    with pytest.raises(InvalidInputError):
        inflate_mask(m, threshold=1.5)


# --------------------------------------------------------- video shaping

def test_make_masked_video_exact():
    rng = np.random.default_rng(0)
    v = rng.random((2, 8, 8, 3), dtype=np.float32)
    m = np.zeros((2, 8, 8), dtype=np.float32)
    m[:, 2:5, 2:5] = 1.0
    out = make_masked_video(v, m)
    assert np.all(out[:, 2:5, 2:5] == 0.0)
    np.testing.assert_array_equal(out[:, 6:], v[:, 6:])
    with pytest.raises(InvalidInputError):
        make_masked_video(v, m[:, :4])


def test_gamma_correct_fixed_points_and_value():
    v = np.array([[[[0.0, 0.25, 1.0]]]], dtype=np.float32)
    out = gamma_correct(v, 2.0)
    np.testing.assert_allclose(out[0, 0, 0], [0.0, 0.0625, 1.0], rtol=1e-6)
    np.testing.assert_array_equal(gamma_correct(v, 1.0), v)
    with pytest.raises(InvalidInputError):
        gamma_correct(v, 0.0)


@given(g=st.floats(0.3, 3.0))
def test_gamma_monotone(g):
    v = np.linspace(0, 1, 17, dtype=np.float32).reshape(1, 1, 17, 1)
    out = gamma_correct(np.repeat(v, 3, axis=-1), g)
    assert np.all(np.diff(out[0, 0, :, 0]) >= 0)


def test_center_foreground_centers_and_blacks_out():
    v = np.zeros((2, 16, 16, 3), dtype=np.float32)
    m = np.zeros((2, 16, 16), dtype=np.float32)
    v[0, 2:6, 3:7] = 0.8
    m[0, 2:6, 3:7] = 1.0  # frame 1 left empty
    fg, fg_m, skipped = center_foreground(v, m)
    assert skipped == [1]
    bb = mask_bbox(fg_m[0])
    cy = (bb[0] + bb[1] - 1) / 2.0
    cx = (bb[2] + bb[3] - 1) / 2.0
    assert abs(cy - 7.5) <= 1.0 and abs(cx - 7.5) <= 1.0
    assert fg_m[0].sum() == m[0].sum()
    assert np.all(fg[0][fg_m[0] == 0.0] == 0.0)  # black surround
    assert fg[1].sum() == 0.0


def test_center_foreground_preserves_pixel_values():
    rng = np.random.default_rng(7)
    v = rng.random((1, 16, 16, 3), dtype=np.float32)
    m = np.zeros((1, 16, 16), dtype=np.float32)
    m[0, 4:8, 10:14] = 1.0
    fg, fg_m, _ = center_foreground(v, m)
    np.testing.assert_array_equal(np.sort(fg[0][fg_m[0] > 0].ravel()),
                                  np.sort(v[0][m[0] > 0].ravel()))


def test_derive_fg_mask_recovers_element():
    fg = np.zeros((1, 12, 12, 3), dtype=np.float32)
    fg[0, 3:7, 3:7] = 0.7
    m = derive_fg_mask(fg)
    expected = np.zeros((1, 12, 12), dtype=np.float32)
    expected[0, 3:7, 3:7] = 1.0
    np.testing.assert_array_equal(m, expected)


def test_derive_fg_mask_roundtrip_with_centering():
    v = np.full((1, 16, 16, 3), 0.0, dtype=np.float32)
    m = np.zeros((1, 16, 16), dtype=np.float32)
    v[0, 2:6, 2:6] = 0.6
    m[0, 2:6, 2:6] = 1.0
    fg, fg_m, _ = center_foreground(v, m)
    np.testing.assert_array_equal(derive_fg_mask(fg), fg_m)
