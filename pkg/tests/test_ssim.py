import numpy as np
import pytest

from confix.ssim import C1, C2, ssim_index, ssim_index_with_grad


def test_identical_images_score_one(rng):
    img = rng.uniform(0, 1, (24, 24, 3))
    assert ssim_index(img, img) == 1.0


def test_constant_offset_closed_form():
    # constant images have zero variance: the structure factor is exactly
    # C2/C2 = 1 and similarity reduces to the luminance term
    a = np.full((16, 16), 0.4)
    b = np.full((16, 16), 0.6)
    want = (2 * 0.4 * 0.6 + C1) / (0.4 ** 2 + 0.6 ** 2 + C1)
    assert ssim_index(a, b) == pytest.approx(want, abs=1e-13)


def test_symmetry(rng):
    a = rng.uniform(0, 1, (20, 20, 3))
    b = rng.uniform(0, 1, (20, 20, 3))
    assert ssim_index(a, b) == pytest.approx(ssim_index(b, a), abs=1e-12)


def test_noise_lowers_score(rng):
    a = rng.uniform(0.3, 0.7, (24, 24, 3))
    noisy = np.clip(a + rng.normal(0, 0.15, a.shape), 0, 1)
    assert ssim_index(a, noisy) < 0.9


def test_range_bounded(rng):
    for _ in range(5):
        a = rng.uniform(0, 1, (16, 16))
        b = rng.uniform(0, 1, (16, 16))
        s = ssim_index(a, b)
        assert -1.0 <= s <= 1.0


def test_grad_matches_value(rng):
    a = rng.uniform(0, 1, (16, 16, 3))
    b = rng.uniform(0, 1, (16, 16, 3))
    s, g = ssim_index_with_grad(a, b)
    assert s == ssim_index(a, b)
    assert g.shape == a.shape


def test_grad_finite_difference(rng):
    a = rng.uniform(0.2, 0.8, (12, 12, 3))
    b = rng.uniform(0.2, 0.8, (12, 12, 3))
    _, g = ssim_index_with_grad(a, b)
    h = 1e-6
    worst = 0.0
    for idx in [(0, 0, 0), (5, 7, 1), (11, 11, 2), (3, 9, 0), (6, 2, 2)]:
        ap = a.copy()
        ap[idx] += h
        am = a.copy()
        am[idx] -= h
        fd = (ssim_index(ap, b) - ssim_index(am, b)) / (2 * h)
        worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    assert worst < 1e-4


def test_grad_zero_at_identity(rng):
    # SSIM is maximized at a == b, so the gradient must vanish there
    a = rng.uniform(0.2, 0.8, (16, 16))
    _, g = ssim_index_with_grad(a, a)
    assert np.max(np.abs(g)) < 1e-10


def test_window_border_renormalized():
    # without border renormalization a constant image would score below 1
    # near the edges; with it the map is exactly 1 everywhere
    a = np.full((13, 13), 0.5)
    assert ssim_index(a, a) == 1.0


def test_shape_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        ssim_index(np.zeros((8, 8)), np.zeros((9, 8)))
