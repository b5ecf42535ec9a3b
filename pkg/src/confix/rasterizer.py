"""Differentiable splat rasterizer.

Forward: EWA projection of anisotropic Gaussians to screen space,
followed by depth-sorted front-to-back alpha compositing on the CPU.
Backward: analytic gradients of the composited color w.r.t. every raw
Gaussian parameter, replayed from a compact per-pixel record instead of
stored per-pixel lists.

Conventions: pixel (row, col) samples the continuous image plane at
(u, v) = (col, row); depth is camera-space z; quaternions are Hamilton
(w, x, y, z). Composited rgb lies in [0, 1] whenever scene colors and the
background do; out-of-range colors pass through unclamped so the backward
pass stays exact during optimization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from ._kernels import composite_backward, composite_forward
from .scene import CameraView, GaussianScene, quaternion_to_rotation, sigmoid

logger = logging.getLogger(__name__)

# Contributions with peak alpha below this never rasterize; keeps bounding
# boxes finite while staying far below gradient-check resolution.
_TAIL_ALPHA = 1e-6

# Pixels with composited alpha below this report zero depth.
_DEPTH_ALPHA_FLOOR = 1e-6

_DEPTH_EPS = 1e-8


@dataclass(frozen=True)
class RasterSettings:
    """Rasterizer knobs; defaults match the shipped pipeline."""

    near_plane: float = 0.01
    blur: float = 0.3                # isotropic screen-space dilation, px^2
    alpha_clamp: float = 0.99
    min_transmittance: float = 1e-4  # early-out threshold on T
    footprint_sigma: float = 3.0     # culling footprint, in sigma
    min_det: float = 1e-12           # 2D covariance determinant floor


DEFAULT_SETTINGS = RasterSettings()


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray  # (2,)
    cov2d: np.ndarray   # (2, 2), dilation included
    depth_z: float
    visible: bool


@dataclass
class BlendState:
    """Opaque record binding one render to its blending history."""

    scene: GaussianScene
    cam: CameraView
    settings: RasterSettings
    background: np.ndarray
    sorted_indices: np.ndarray   # original scene indices, front to back
    mean2d: np.ndarray           # (M, 2) sorted
    conic: np.ndarray            # (M, 3) sorted: a, b, c of the inverse cov
    opacity: np.ndarray          # (M,) sorted, activated
    color: np.ndarray            # (M, 3) sorted
    depth_z: np.ndarray          # (M,) sorted
    bbox: np.ndarray             # (M, 4) sorted int32: x0, x1, y0, y1
    radius_px: np.ndarray        # (M,) sorted culling-footprint radius
    t_end: np.ndarray            # (H, W) final transmittance
    n_proc: np.ndarray           # (H, W) processed-contribution counts
    n_touch: np.ndarray          # (H, W) bounding-box visit counts
    num_degenerate: int          # skipped for near-singular 2D covariance

    @property
    def visible_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.scene), dtype=bool)
        mask[self.sorted_indices] = True
        return mask


@dataclass
class RenderOutput:
    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    depth: np.ndarray  # (H, W), camera-space expected depth, 0 off-coverage
    blend_state: BlendState


@dataclass
class GradientBundle:
    """Per-Gaussian loss gradients, scene order, raw parameter space."""

    mean: np.ndarray           # (N, 3)
    log_scale: np.ndarray      # (N, 3)
    rotation: np.ndarray       # (N, 4), tangent to the quaternion norm
    opacity_logit: np.ndarray  # (N,)
    color: np.ndarray          # (N, 3)
    pos2d: np.ndarray          # (N, 2) screen-space mean gradient, this view

    @classmethod
    def zeros(cls, n: int) -> "GradientBundle":
        return cls(
            mean=np.zeros((n, 3)),
            log_scale=np.zeros((n, 3)),
            rotation=np.zeros((n, 4)),
            opacity_logit=np.zeros(n),
            color=np.zeros((n, 3)),
            pos2d=np.zeros((n, 2)),
        )

    def accumulate(self, other: "GradientBundle") -> None:
        self.mean += other.mean
        self.log_scale += other.log_scale
        self.rotation += other.rotation
        self.opacity_logit += other.opacity_logit
        self.color += other.color
        self.pos2d += other.pos2d


def _project_arrays(scene: GaussianScene, cam: CameraView, settings: RasterSettings):
    """Vectorized projection of every Gaussian into one view.

    Returns a dict of per-Gaussian arrays; rows failing the frustum or
    footprint tests carry placeholder values and visible=False.
    """
    fx, fy, cx, cy = cam.fx, cam.fy, cam.cx, cam.cy
    p_cam = (scene.means - cam.t) @ cam.R
    z = p_cam[:, 2]
    in_front = z > settings.near_plane
    zs = np.where(in_front, z, 1.0)

    u = fx * p_cam[:, 0] / zs + cx
    v = fy * p_cam[:, 1] / zs + cy

    rot = quaternion_to_rotation(scene.rotations)
    s2 = np.exp(2.0 * scene.log_scales)
    # world covariance R diag(s^2) R^T, then camera frame, then EWA image plane
    cov_w = np.einsum("nij,nj,nkj->nik", rot, s2, rot)
    w_mat = cam.R.T
    cov_c = np.einsum("ij,njk,lk->nil", w_mat, cov_w, w_mat)

    jac = np.zeros((len(scene), 2, 3))
    jac[:, 0, 0] = fx / zs
    jac[:, 0, 2] = -fx * p_cam[:, 0] / zs ** 2
    jac[:, 1, 1] = fy / zs
    jac[:, 1, 2] = -fy * p_cam[:, 1] / zs ** 2
    cov2 = np.einsum("nij,njk,nlk->nil", jac, cov_c, jac)
    cov2[:, 0, 0] += settings.blur
    cov2[:, 1, 1] += settings.blur

    a = cov2[:, 0, 0]
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1]
    det = a * c - b * b
    det_ok = det > settings.min_det

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = settings.footprint_sigma * np.sqrt(np.maximum(lam_max, 0.0))

    hits = (
        (u >= -radius) & (u <= cam.width - 1 + radius)
        & (v >= -radius) & (v <= cam.height - 1 + radius)
    )
    visible = in_front & hits

    return {
        "p_cam": p_cam, "z": z, "u": u, "v": v,
        "cov2": cov2, "a": a, "b": b, "c": c, "det": det,
        "lam_max": lam_max, "radius": radius,
        "visible": visible, "det_ok": det_ok,
        "jac": jac, "cov_c": cov_c, "rot": rot, "s2": s2,
    }


def project_gaussian(scene: GaussianScene, cam: CameraView, index: int,
                     settings: RasterSettings = DEFAULT_SETTINGS) -> ProjectedGaussian:
    """Project a single Gaussian; see module conventions.

    visible means the camera-space z clears the near plane and the
    footprint-sigma ellipse bound overlaps the image.
    """
    pr = _project_arrays(scene, cam, settings)
    return ProjectedGaussian(
        mean2d=np.array([pr["u"][index], pr["v"][index]]),
        cov2d=pr["cov2"][index].copy(),
        depth_z=float(pr["z"][index]),
        visible=bool(pr["visible"][index]),
    )


def _coverage_bbox(u, v, lam_max, opacity, width, height):
    """Integer pixel bounds covering all contributions above _TAIL_ALPHA."""
    safe = np.maximum(opacity, _TAIL_ALPHA)
    r = np.sqrt(2.0 * np.maximum(lam_max, 0.0) * np.log(safe / _TAIL_ALPHA))
    x0 = np.clip(np.ceil(u - r), 0, width - 1)
    x1 = np.clip(np.floor(u + r), -1, width - 1)
    y0 = np.clip(np.ceil(v - r), 0, height - 1)
    y1 = np.clip(np.floor(v + r), -1, height - 1)
    empty = opacity <= _TAIL_ALPHA
    x1 = np.where(empty | (x1 < x0), x0 - 1, x1)
    y1 = np.where(empty | (y1 < y0), y0 - 1, y1)
    return (x0.astype(np.int32), x1.astype(np.int32),
            y0.astype(np.int32), y1.astype(np.int32))


def render(scene: GaussianScene, cam: CameraView, background=(0.0, 0.0, 0.0),
           settings: RasterSettings = DEFAULT_SETTINGS) -> RenderOutput:
    """Rasterize a scene into one view.

    Args:
        scene: Gaussian scene; parameters must be finite.
        cam: target view.
        background: RGB composited behind the scene.
        settings: rasterizer knobs.

    Returns:
        RenderOutput with rgb/alpha/depth maps plus the blend state needed
        by render_backward. Ordering of the Gaussian list does not affect
        the output when depths are distinct: compositing sorts by
        (depth, original index) with a stable sort.
    """
    scene.validate()
    background = np.asarray(background, dtype=np.float64)
    if background.shape != (3,) or not np.all(np.isfinite(background)):
        raise ValueError("background must be a finite RGB triple")

    pr = _project_arrays(scene, cam, settings)
    raster = pr["visible"] & pr["det_ok"]
    num_degenerate = int(np.count_nonzero(pr["visible"] & ~pr["det_ok"]))
    if num_degenerate:
        logger.warning("render: skipped %d near-singular footprints", num_degenerate)

    idx = np.flatnonzero(raster)
    order = np.lexsort((idx, pr["z"][idx]))
    idx = idx[order]

    u = np.ascontiguousarray(pr["u"][idx])
    v = np.ascontiguousarray(pr["v"][idx])
    det = pr["det"][idx]
    conic_a = np.ascontiguousarray(pr["c"][idx] / det)
    conic_b = np.ascontiguousarray(-pr["b"][idx] / det)
    conic_c = np.ascontiguousarray(pr["a"][idx] / det)
    opacity = np.ascontiguousarray(sigmoid(scene.opacity_logits[idx]))
    color = np.ascontiguousarray(scene.colors[idx])
    depth_z = np.ascontiguousarray(pr["z"][idx])
    lam_max = pr["lam_max"][idx]
    bx0, bx1, by0, by1 = _coverage_bbox(u, v, lam_max, opacity, cam.width, cam.height)

    parallel.apply_thread_count()
    rgb, t_end, depth_num, n_proc, n_touch = composite_forward(
        u, v, conic_a, conic_b, conic_c, opacity, color, depth_z,
        bx0, bx1, by0, by1, cam.height, cam.width, background,
        settings.min_transmittance, settings.alpha_clamp,
    )
    alpha = 1.0 - t_end
    depth = depth_num / (alpha + _DEPTH_EPS)
    depth[alpha < _DEPTH_ALPHA_FLOOR] = 0.0

    state = BlendState(
        scene=scene, cam=cam, settings=settings, background=background,
        sorted_indices=idx,
        mean2d=np.stack([u, v], axis=1),
        conic=np.stack([conic_a, conic_b, conic_c], axis=1),
        opacity=opacity, color=color, depth_z=depth_z,
        bbox=np.stack([bx0, bx1, by0, by1], axis=1),
        radius_px=pr["radius"][idx],
        t_end=t_end, n_proc=n_proc, n_touch=n_touch,
        num_degenerate=num_degenerate,
    )
    return RenderOutput(rgb=rgb, alpha=alpha, depth=depth, blend_state=state)


def _quat_grad(dR: np.ndarray, qn: np.ndarray) -> np.ndarray:
    """Contract dL/dR with dR/dq for normalized quaternions qn (M, 4)."""
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    d = dR
    dw = 2.0 * (-d[:, 0, 1] * z + d[:, 0, 2] * y + d[:, 1, 0] * z
                - d[:, 1, 2] * x - d[:, 2, 0] * y + d[:, 2, 1] * x)
    dx = 2.0 * (d[:, 0, 1] * y + d[:, 0, 2] * z + d[:, 1, 0] * y
                - 2.0 * d[:, 1, 1] * x - d[:, 1, 2] * w + d[:, 2, 0] * z
                + d[:, 2, 1] * w - 2.0 * d[:, 2, 2] * x)
    dy = 2.0 * (-2.0 * d[:, 0, 0] * y + d[:, 0, 1] * x + d[:, 0, 2] * w
                + d[:, 1, 0] * x + d[:, 1, 2] * z - d[:, 2, 0] * w
                + d[:, 2, 1] * z - 2.0 * d[:, 2, 2] * y)
    dz = 2.0 * (-2.0 * d[:, 0, 0] * z - d[:, 0, 1] * w + d[:, 0, 2] * x
                + d[:, 1, 0] * w - 2.0 * d[:, 1, 1] * z + d[:, 1, 2] * y
                + d[:, 2, 0] * x + d[:, 2, 1] * y)
    return np.stack([dw, dx, dy, dz], axis=1)


def render_backward(scene: GaussianScene, cam: CameraView, blend_state: BlendState,
                    pixel_grad: np.ndarray) -> GradientBundle:
    """Backpropagate a per-pixel rgb gradient through one render.

    Args:
        scene: the scene the blend state was produced from.
        cam: the view the blend state was produced from.
        blend_state: record returned by render.
        pixel_grad: (H, W, 3) dL/d rgb.

    Returns:
        GradientBundle in scene order; rows of Gaussians that did not
        rasterize are zero. pos2d holds dL/d mean2d for this view.
    """
    if blend_state.scene is not scene or blend_state.cam is not cam:
        raise ValueError("blend state does not belong to this scene and view")
    pixel_grad = np.ascontiguousarray(pixel_grad, dtype=np.float64)
    if pixel_grad.shape != (cam.height, cam.width, 3):
        raise ValueError(
            f"pixel_grad shape {pixel_grad.shape} does not match view "
            f"({cam.height}, {cam.width}, 3)"
        )
    if not np.all(np.isfinite(pixel_grad)):
        raise ValueError("pixel_grad contains non-finite values")

    st = blend_state
    idx = st.sorted_indices
    n = len(scene)
    bundle = GradientBundle.zeros(n)
    if idx.size == 0:
        return bundle

    parallel.apply_thread_count()

    def contig(arr):
        return np.ascontiguousarray(arr)

    buf = composite_backward(
        contig(st.mean2d[:, 0]), contig(st.mean2d[:, 1]),
        contig(st.conic[:, 0]), contig(st.conic[:, 1]), contig(st.conic[:, 2]),
        st.opacity, st.color,
        contig(st.bbox[:, 0]), contig(st.bbox[:, 1]),
        contig(st.bbox[:, 2]), contig(st.bbox[:, 3]),
        st.t_end, st.n_proc, st.n_touch, pixel_grad,
        st.background, st.settings.alpha_clamp,
    )
    g = buf.sum(axis=0)  # fixed row order, thread-count independent
    d_mean2d = g[:, 0:2]
    d_conic = g[:, 2:5]
    d_opacity_act = g[:, 5]
    d_color = g[:, 6:9]

    # Recompute projection geometry for the rasterized subset.
    fx, fy = cam.fx, cam.fy
    means = scene.means[idx]
    p_cam = (means - cam.t) @ cam.R
    xc, yc, zc = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]

    qn_raw = scene.rotations[idx]
    qnorm = np.linalg.norm(qn_raw, axis=1, keepdims=True)
    qn = qn_raw / qnorm
    rot = quaternion_to_rotation(qn)
    s2 = np.exp(2.0 * scene.log_scales[idx])
    cov_w = np.einsum("nij,nj,nkj->nik", rot, s2, rot)
    w_mat = cam.R.T
    cov_c = np.einsum("ij,njk,lk->nil", w_mat, cov_w, w_mat)
    jac = np.zeros((idx.size, 2, 3))
    jac[:, 0, 0] = fx / zc
    jac[:, 0, 2] = -fx * xc / zc ** 2
    jac[:, 1, 1] = fy / zc
    jac[:, 1, 2] = -fy * yc / zc ** 2

    # d cov2d from conic parameter grads: conic is the matrix inverse.
    lam = np.empty((idx.size, 2, 2))
    lam[:, 0, 0] = st.conic[:, 0]
    lam[:, 0, 1] = st.conic[:, 1]
    lam[:, 1, 0] = st.conic[:, 1]
    lam[:, 1, 1] = st.conic[:, 2]
    d_lam = np.empty_like(lam)
    d_lam[:, 0, 0] = d_conic[:, 0]
    d_lam[:, 0, 1] = 0.5 * d_conic[:, 1]
    d_lam[:, 1, 0] = 0.5 * d_conic[:, 1]
    d_lam[:, 1, 1] = d_conic[:, 2]
    d_cov2 = -np.einsum("nij,njk,nkl->nil", lam, d_lam, lam)

    d_jac = 2.0 * np.einsum("nij,njk,nkl->nil", d_cov2, jac, cov_c)
    d_cov_c = np.einsum("nji,njk,nkl->nil", jac, d_cov2, jac)
    d_cov_w = np.einsum("ji,njk,kl->nil", w_mat, d_cov_c, w_mat)

    d_rot = 2.0 * np.einsum("nij,njk,nk->nik", d_cov_w, rot, s2)
    d_s2 = np.einsum("nji,njk,nki->ni", rot, d_cov_w, rot)
    d_log_scale = d_s2 * 2.0 * s2

    d_qn = _quat_grad(d_rot, qn)
    d_q = (d_qn - qn * np.sum(d_qn * qn, axis=1, keepdims=True)) / qnorm

    # Camera-point gradient: projection Jacobian route plus the EWA
    # Jacobian's own dependence on the camera-space mean.
    d_p = np.zeros((idx.size, 3))
    d_p += np.einsum("nji,nj->ni", jac, d_mean2d)
    d_p[:, 0] += d_jac[:, 0, 2] * (-fx / zc ** 2)
    d_p[:, 1] += d_jac[:, 1, 2] * (-fy / zc ** 2)
    d_p[:, 2] += (
        d_jac[:, 0, 0] * (-fx / zc ** 2)
        + d_jac[:, 1, 1] * (-fy / zc ** 2)
        + d_jac[:, 0, 2] * (2.0 * fx * xc / zc ** 3)
        + d_jac[:, 1, 2] * (2.0 * fy * yc / zc ** 3)
    )
    d_mean = d_p @ cam.R.T

    opa = st.opacity
    d_logit = d_opacity_act * opa * (1.0 - opa)

    bundle.mean[idx] = d_mean
    bundle.log_scale[idx] = d_log_scale
    bundle.rotation[idx] = d_q
    bundle.opacity_logit[idx] = d_logit
    bundle.color[idx] = d_color
    bundle.pos2d[idx] = d_mean2d

    for name in ("mean", "log_scale", "rotation", "opacity_logit", "color", "pos2d"):
        if not np.all(np.isfinite(getattr(bundle, name))):
            raise ValueError(f"non-finite gradient in {name}")
    return bundle
