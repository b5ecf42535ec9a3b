"""Cross-view geometry: unprojection, reprojection, and photometric checks.

All functions broadcast over leading axes, so a single pixel and a whole
image grid go through the same code path. Pixel (row, col) corresponds to
image-plane coordinates (u, v) = (col, row); a sample is in bounds iff
0 <= u <= width-1 and 0 <= v <= height-1, matching the bilinear footprint
(no clamping is ever applied).
"""

from __future__ import annotations

import numpy as np

from .scene import CameraView

# Smallest |z| treated as a usable projective denominator.
MIN_DENOM = 1e-9

# Epsilon in the consensus normalizer. Kept in the denominator even when
# samples exist, so the consensus is a factor n/(n+eps) of the exact mean;
# discrepancies inherit that bias by design.
CONSENSUS_EPS = 1e-8


def unproject_pixel(cam: CameraView, u, v, depth) -> np.ndarray:
    """Lift pixels to world points at the given camera-space depth.

    Args:
        cam: view whose intrinsics/extrinsics to use.
        u, v: image-plane coordinates, broadcastable arrays or scalars.
        depth: camera-space z at those pixels, broadcastable.

    Returns:
        World points, shape broadcast(u, v, depth) + (3,).
    """
    u, v, depth = np.broadcast_arrays(
        np.asarray(u, dtype=np.float64),
        np.asarray(v, dtype=np.float64),
        np.asarray(depth, dtype=np.float64),
    )
    # rays = K^{-1} (u, v, 1); closed-form inverse of the pinhole K
    rx = (u - cam.cx) / cam.fx
    ry = (v - cam.cy) / cam.fy
    rays = np.stack([rx, ry, np.ones_like(rx)], axis=-1)
    return (depth[..., None] * rays) @ cam.R.T + cam.t


def reproject_point(cam: CameraView, points) -> tuple[np.ndarray, np.ndarray]:
    """Project world points into a view.

    Args:
        cam: target view.
        points: (..., 3) world points.

    Returns:
        (uv, camera_z): uv has shape (..., 2); camera_z is the camera-space
        depth before dehomogenization. Where |camera_z| < MIN_DENOM the uv
        entries are zeroed and must be treated as invalid by the caller.
    """
    points = np.asarray(points, dtype=np.float64)
    p_cam = (points - cam.t) @ cam.R
    z = p_cam[..., 2]
    hom = p_cam @ cam.K.T
    safe = np.where(np.abs(hom[..., 2]) < MIN_DENOM, 1.0, hom[..., 2])
    uv = hom[..., :2] / safe[..., None]
    uv = np.where(np.abs(hom[..., 2:3]) < MIN_DENOM, 0.0, uv)
    return uv, z


def bilinear_sample(image: np.ndarray, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample an image at continuous coordinates.

    A sample is valid only when every tap it needs lies inside the image;
    out-of-range coordinates are never clamped.

    Args:
        image: (H, W) or (H, W, C) array.
        u, v: coordinates, broadcastable arrays or scalars.

    Returns:
        (values, valid): values has the sample shape plus a channel axis
        when the image has one, zeros where invalid; valid is boolean.
    """
    image = np.asarray(image, dtype=np.float64)
    u, v = np.broadcast_arrays(
        np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    )
    h, w = image.shape[:2]
    valid = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)

    u0 = np.clip(np.floor(u), 0, w - 2).astype(np.int64) if w > 1 else np.zeros_like(u, dtype=np.int64)
    v0 = np.clip(np.floor(v), 0, h - 2).astype(np.int64) if h > 1 else np.zeros_like(v, dtype=np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = np.where(valid, u - u0, 0.0)
    fv = np.where(valid, v - v0, 0.0)

    if image.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    p00 = image[v0, u0]
    p01 = image[v0, u1]
    p10 = image[v1, u0]
    p11 = image[v1, u1]
    top = p00 * (1.0 - fu) + p01 * fu
    bot = p10 * (1.0 - fu) + p11 * fu
    values = top * (1.0 - fv) + bot * fv
    mask = valid[..., None] if image.ndim == 3 else valid
    return np.where(mask, values, 0.0), valid


def consensus_color(sample_sum: np.ndarray, sample_count: np.ndarray) -> np.ndarray:
    """Mean of valid support samples with the epsilon-padded normalizer.

    Args:
        sample_sum: (..., C) sum of valid samples.
        sample_count: (...,) number of valid samples.

    Returns:
        (..., C) consensus colors; all-zero where no sample exists.
    """
    sample_sum = np.asarray(sample_sum, dtype=np.float64)
    count = np.asarray(sample_count, dtype=np.float64)
    return sample_sum / (count[..., None] + CONSENSUS_EPS)


def discrepancy(pseudo: np.ndarray, consensus: np.ndarray) -> np.ndarray:
    """Mean absolute channel difference between pseudo and consensus colors.

    Channel-scaled L1, so it is symmetric, zero on identical inputs, and
    satisfies the triangle inequality.
    """
    pseudo = np.asarray(pseudo, dtype=np.float64)
    consensus = np.asarray(consensus, dtype=np.float64)
    return np.mean(np.abs(pseudo - consensus), axis=-1)


def gather_support_samples(
    cam: CameraView,
    depth: np.ndarray,
    supports: list[tuple[CameraView, np.ndarray]],
) -> tuple[np.ndarray, np.ndarray]:
    """Reproject a view's pixels into support views and sample their images.

    Pixels with non-positive depth are skipped (zero samples). A support
    sample counts only when the point lands in front of the support camera
    with a usable denominator and a fully in-bounds bilinear footprint.

    Args:
        cam: the view owning the depth map.
        depth: (H, W) camera-space scaffold depth.
        supports: (support view, support image (H', W', C)) pairs.

    Returns:
        (sample_sum (H, W, C), sample_count (H, W)).
    """
    h, w = depth.shape
    channels = 3 if not supports else supports[0][1].shape[-1]
    grid_v, grid_u = np.mgrid[0:h, 0:w].astype(np.float64)
    usable = depth > 0.0
    points = unproject_pixel(cam, grid_u, grid_v, np.where(usable, depth, 1.0))

    sample_sum = np.zeros((h, w, channels))
    sample_count = np.zeros((h, w))
    for sup_cam, sup_img in supports:
        uv, z = reproject_point(sup_cam, points)
        in_front = (z > 0.0) & (np.abs(z) >= MIN_DENOM)
        values, in_bounds = bilinear_sample(sup_img, uv[..., 0], uv[..., 1])
        ok = usable & in_front & in_bounds
        sample_sum += np.where(ok[..., None], values, 0.0)
        sample_count += ok
    return sample_sum, sample_count
