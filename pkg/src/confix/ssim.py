"""Structural similarity with an analytic input gradient.

One implementation serves both the training objective and evaluation
metrics so the two can never drift. The window is the standard 11-tap
Gaussian (sigma 1.5) with stabilizers C1 = 0.01^2 and C2 = 0.03^2 for
unit-range images. Window sums renormalize against the in-image tap mass,
so images smaller than the window (and all borders) use properly scaled
statistics instead of zero-padded ones.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate1d

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


@lru_cache(maxsize=1)
def _window() -> np.ndarray:
    half = (WINDOW_SIZE - 1) / 2.0
    x = np.arange(WINDOW_SIZE, dtype=np.float64) - half
    w = np.exp(-(x ** 2) / (2.0 * WINDOW_SIGMA ** 2))
    return w / w.sum()


def _blur(img: np.ndarray) -> np.ndarray:
    """Separable zero-padded window correlation over the two leading axes."""
    w = _window()
    out = correlate1d(img, w, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, w, axis=1, mode="constant", cval=0.0)


@lru_cache(maxsize=8)
def _tap_mass(height: int, width: int) -> np.ndarray:
    """In-image window mass per pixel; the border renormalizer."""
    return _blur(np.ones((height, width)))


def _as_channels(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim == 3:
        return img
    raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {img.shape}")


def _moments(x: np.ndarray, y: np.ndarray):
    h, w = x.shape[:2]
    z = _tap_mass(h, w)[:, :, None]
    mu_x = _blur(x) / z
    mu_y = _blur(y) / z
    q_x = _blur(x * x) / z
    q_y = _blur(y * y) / z
    q_xy = _blur(x * y) / z
    return z, mu_x, mu_y, q_x, q_y, q_xy


def _ssim_map(mu_x, mu_y, q_x, q_y, q_xy):
    var_x = q_x - mu_x ** 2
    var_y = q_y - mu_y ** 2
    cov = q_xy - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * cov + C2
    b1 = mu_x ** 2 + mu_y ** 2 + C1
    b2 = var_x + var_y + C2
    return a1 * a2 / (b1 * b2), a1, a2, b1, b2


def ssim_index(a: np.ndarray, b: np.ndarray) -> float:
    """Channel-averaged mean SSIM between two images of equal shape."""
    x = _as_channels(a)
    y = _as_channels(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    _, mu_x, mu_y, q_x, q_y, q_xy = _moments(x, y)
    smap, *_ = _ssim_map(mu_x, mu_y, q_x, q_y, q_xy)
    return float(np.mean(smap))


def ssim_index_with_grad(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """SSIM and its gradient w.r.t. the first image.

    Args:
        a: image the gradient is taken with respect to.
        b: reference image of the same shape.

    Returns:
        (ssim, d ssim / d a), gradient shaped like the input a.
    """
    orig_ndim = np.asarray(a).ndim
    x = _as_channels(a)
    y = _as_channels(b)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    z, mu_x, mu_y, q_x, q_y, q_xy = _moments(x, y)
    smap, a1, a2, b1, b2 = _ssim_map(mu_x, mu_y, q_x, q_y, q_xy)

    ds = 1.0 / smap.size  # mean over pixels and channels
    denom = b1 * b2
    u_mu = ds * (2.0 * mu_y * (a2 - a1) / denom
                 - 2.0 * mu_x * smap / b1
                 + 2.0 * mu_x * smap / b2)
    u_qx = ds * (-smap / b2)
    u_qxy = ds * (2.0 * a1 / denom)

    # Adjoint of the renormalized window average is a plain window average
    # of the field divided by the tap mass (the kernel is symmetric).
    grad = _blur(u_mu / z) + 2.0 * x * _blur(u_qx / z) + y * _blur(u_qxy / z)
    value = float(np.mean(smap))
    if orig_ndim == 2:
        return value, grad[:, :, 0]
    return value, grad
