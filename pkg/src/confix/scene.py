"""Containers and parameter activations for anisotropic Gaussian scenes.

A scene stores raw (pre-activation) parameters as packed float64 arrays:
log-scales, opacity logits, and unnormalized quaternions. Activations are
applied where geometry is consumed, never baked into storage. Images
throughout the package are plain numpy arrays, (H, W) for single-channel
maps and (H, W, 3) for color, float64, row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function."""
    out = expit(np.asarray(x, dtype=np.float64))
    if out.ndim == 0:
        return float(out)
    return out


def inverse_sigmoid(p: np.ndarray | float) -> np.ndarray | float:
    """Logit of p; domain is the open interval (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("inverse_sigmoid requires values strictly inside (0, 1)")
    out = logit(p)
    if out.ndim == 0:
        return float(out)
    return out


def activated_scales(log_scales: np.ndarray) -> np.ndarray:
    return np.exp(np.asarray(log_scales, dtype=np.float64))


def normalize_quaternion(q: np.ndarray) -> np.ndarray:
    """Unit-normalize quaternions along the last axis ((w, x, y, z) order)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("cannot normalize a zero quaternion")
    return q / norm


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrices from Hamilton-convention quaternions.

    Args:
        q: (..., 4) array in (w, x, y, z) order; normalized internally.

    Returns:
        (..., 3, 3) rotation matrices.
    """
    q = normalize_quaternion(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@dataclass
class Gaussian:
    """Single-record view of one Gaussian, raw parameter space."""

    mean: np.ndarray          # (3,) world position
    log_scale: np.ndarray     # (3,) per-axis log scale
    rotation: np.ndarray      # (4,) quaternion, (w, x, y, z)
    opacity_logit: float
    color: np.ndarray         # (3,) degree-0 RGB


class GaussianScene:
    """Ordered collection of Gaussians as struct-of-arrays.

    Array order is the scene order; every per-Gaussian output elsewhere in
    the package (gradients, densify stats) shares this indexing.
    """

    __slots__ = ("means", "log_scales", "rotations", "opacity_logits", "colors")

    def __init__(self, means, log_scales, rotations, opacity_logits, colors):
        self.means = np.ascontiguousarray(means, dtype=np.float64)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float64)
        self.colors = np.ascontiguousarray(colors, dtype=np.float64)
        n = self.means.shape[0] if self.means.ndim == 2 else -1
        if (
            self.means.shape != (n, 3)
            or self.log_scales.shape != (n, 3)
            or self.rotations.shape != (n, 4)
            or self.opacity_logits.shape != (n,)
            or self.colors.shape != (n, 3)
        ):
            raise ValueError("inconsistent scene array shapes")

    def __len__(self) -> int:
        return self.means.shape[0]

    def validate(self) -> None:
        """Raise if any stored parameter is NaN/Inf or a quaternion is zero."""
        for name in ("means", "log_scales", "rotations", "opacity_logits", "colors"):
            arr = getattr(self, name)
            bad = ~np.isfinite(arr)
            if np.any(bad):
                idx = int(np.argwhere(bad)[0][0])
                raise ValueError(f"non-finite value in {name} at record {idx}")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(norms < 1e-12):
            idx = int(np.argmin(norms))
            raise ValueError(f"zero quaternion at record {idx}")

    def copy(self) -> "GaussianScene":
        return GaussianScene(
            self.means.copy(),
            self.log_scales.copy(),
            self.rotations.copy(),
            self.opacity_logits.copy(),
            self.colors.copy(),
        )

    def select(self, index) -> "GaussianScene":
        """Sub-scene at the given indices or boolean mask, order preserved."""
        return GaussianScene(
            self.means[index],
            self.log_scales[index],
            self.rotations[index],
            self.opacity_logits[index],
            self.colors[index],
        )

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            mean=self.means[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            color=self.colors[i].copy(),
        )

    @property
    def scales(self) -> np.ndarray:
        return activated_scales(self.log_scales)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianScene":
        gaussians = list(gaussians)
        if not gaussians:
            return cls.empty()
        return cls(
            np.stack([g.mean for g in gaussians]),
            np.stack([g.log_scale for g in gaussians]),
            np.stack([g.rotation for g in gaussians]),
            np.array([g.opacity_logit for g in gaussians]),
            np.stack([g.color for g in gaussians]),
        )

    @classmethod
    def empty(cls) -> "GaussianScene":
        return cls(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
            np.zeros((0,)), np.zeros((0, 3)),
        )

    @classmethod
    def concatenate(cls, scenes) -> "GaussianScene":
        scenes = list(scenes)
        return cls(
            np.concatenate([s.means for s in scenes]),
            np.concatenate([s.log_scales for s in scenes]),
            np.concatenate([s.rotations for s in scenes]),
            np.concatenate([s.opacity_logits for s in scenes]),
            np.concatenate([s.colors for s in scenes]),
        )


@dataclass(frozen=True)
class CameraView:
    """One pinhole view; (R, t) maps camera coordinates to world.

    World-to-camera is therefore x_cam = R^T (X - t), and t is the camera
    center in world coordinates.
    """

    view_id: int
    is_support: bool
    width: int
    height: int
    K: np.ndarray  # (3, 3) intrinsics, zero skew
    R: np.ndarray  # (3, 3) camera-to-world rotation
    t: np.ndarray  # (3,) camera center, world

    def __post_init__(self):
        object.__setattr__(self, "K", np.ascontiguousarray(self.K, dtype=np.float64))
        object.__setattr__(self, "R", np.ascontiguousarray(self.R, dtype=np.float64))
        object.__setattr__(self, "t", np.ascontiguousarray(self.t, dtype=np.float64))
        if self.K.shape != (3, 3) or self.R.shape != (3, 3) or self.t.shape != (3,):
            raise ValueError(f"view {self.view_id}: bad camera array shapes")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"view {self.view_id}: non-positive image size")
        if not (np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.R)) and np.all(np.isfinite(self.t))):
            raise ValueError(f"view {self.view_id}: non-finite camera parameters")
        structural = np.array([self.K[0, 1], self.K[1, 0], self.K[2, 0], self.K[2, 1]])
        if np.any(np.abs(structural) > 1e-9) or abs(self.K[2, 2] - 1.0) > 1e-9:
            raise ValueError(f"view {self.view_id}: K is not a zero-skew pinhole matrix")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"view {self.view_id}: focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"view {self.view_id}: principal point outside the image")
        if np.max(np.abs(self.R @ self.R.T - np.eye(3))) > 1e-6:
            raise ValueError(f"view {self.view_id}: R is not orthonormal")
        if np.linalg.det(self.R) < 0:
            raise ValueError(f"view {self.view_id}: R must have determinant +1")

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def cx(self) -> float:
        return float(self.K[0, 2])

    @property
    def cy(self) -> float:
        return float(self.K[1, 2])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map world points (..., 3) into camera coordinates."""
        return (np.asarray(points, dtype=np.float64) - self.t) @ self.R


def require_image(arr: np.ndarray, channels: int | None = None, name: str = "image",
                  unit_range: bool = True) -> np.ndarray:
    """Validate an image array and return it as float64.

    Args:
        arr: (H, W) or (H, W, C) array.
        channels: required channel count; None accepts any layout.
        name: label used in error messages.
        unit_range: when True, values must lie in [0, 1].
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"{name}: expected 2 or 3 dimensions, got {arr.ndim}")
    if channels is not None:
        if channels == 1 and arr.ndim != 2:
            raise ValueError(f"{name}: expected a single-channel (H, W) array")
        if channels > 1 and (arr.ndim != 3 or arr.shape[2] != channels):
            raise ValueError(f"{name}: expected (H, W, {channels})")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite values")
    if unit_range and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr
