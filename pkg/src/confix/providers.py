"""Handoffs from the external oracles that produce our inputs.

The initial scene and the pseudo targets come from frozen upstream
models; this package only ever sees their outputs as files. The synthetic
oracle is the testable stand-in: it corrupts rendered ground truth in
controlled, seeded ways and reports exactly which pixels it touched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .images import load_png
from .io import load_scene
from .scene import CameraView, GaussianScene

logger = logging.getLogger(__name__)

PROVENANCE_GROUND_TRUTH = "ground-truth"
PROVENANCE_FILE = "file"
PROVENANCE_ORACLE = "synthetic-oracle"

GT_NAME = "img_{:04d}.png"
TARGET_NAME = "target_{:04d}.png"
MASK_NAME = "mask_{:04d}.png"


@dataclass(frozen=True)
class CorruptionConfig:
    """Knobs of the synthetic oracle's controlled degradation.

    Defaults are sized for the 64x64 plane benchmark: five 32px patches
    cover enough of each novel view that unweighted training absorbs
    them instead of averaging them away across views.
    """

    blur_sigma: float = 0.0
    patch_count: int = 5
    patch_size: int = 32
    patch_color_shift: float = 0.5
    rng_seed: int = 0

    def validate(self) -> None:
        if self.blur_sigma < 0.0:
            raise ValueError("blur_sigma must be >= 0")
        if self.patch_count < 0:
            raise ValueError("patch_count must be >= 0")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.patch_color_shift < 0.0:
            raise ValueError("patch_color_shift must be >= 0")


@dataclass(frozen=True)
class PseudoTargetSet:
    """One target image per view, each tagged with where it came from.

    Support views always carry their ground truth verbatim, tagged
    ground-truth; pseudo targets are evidence, not truth, and the tag
    records which oracle supplied them.
    """

    images: dict[int, np.ndarray]
    provenance: dict[int, str]

    def target(self, view_id: int) -> np.ndarray:
        return self.images[view_id]

    def check_complete(self, views: Sequence[CameraView]) -> None:
        for view in views:
            if view.view_id not in self.images:
                raise ValueError(f"no target for view {view.view_id}")
            if view.is_support and self.provenance[view.view_id] != PROVENANCE_GROUND_TRUTH:
                raise ValueError(
                    f"support view {view.view_id} carries a non-ground-truth target"
                )


def load_initial_scene(path: str | Path) -> GaussianScene:
    """Load the initial reconstruction dumped by an upstream backbone."""
    scene = load_scene(path)
    scene.validate()
    return scene


def load_gt_images(gt_dir: str | Path, views: Sequence[CameraView], *,
                   only_support: bool = False) -> dict[int, np.ndarray]:
    """Ground-truth images by view id, validated against camera dims."""
    gt_dir = Path(gt_dir)
    images: dict[int, np.ndarray] = {}
    for view in views:
        if only_support and not view.is_support:
            continue
        path = gt_dir / GT_NAME.format(view.view_id)
        if not path.exists():
            raise ValueError(f"missing ground-truth image for view {view.view_id}: {path}")
        img = load_png(path)
        if img.ndim != 3 or img.shape != (view.height, view.width, 3):
            raise ValueError(
                f"view {view.view_id}: image {path} has shape {img.shape}, "
                f"camera expects ({view.height}, {view.width}, 3)"
            )
        images[view.view_id] = img
    return images


def load_pseudo_targets(targets_dir: str | Path, views: Sequence[CameraView],
                        gt_images: Mapping[int, np.ndarray]) -> PseudoTargetSet:
    """Assemble the complete target set from per-view files.

    Novel views read targets/target_{id:04}.png; support views take their
    entry from gt_images, and any file for them is ignored with a warning
    (ground truth always wins on supports).
    """
    targets_dir = Path(targets_dir)
    images: dict[int, np.ndarray] = {}
    provenance: dict[int, str] = {}
    for view in views:
        path = targets_dir / TARGET_NAME.format(view.view_id)
        if view.is_support:
            if path.exists():
                logger.warning(
                    "ignoring %s: view %d is a support view and keeps its ground truth",
                    path, view.view_id,
                )
            if view.view_id not in gt_images:
                raise ValueError(f"no ground-truth image for support view {view.view_id}")
            images[view.view_id] = np.array(gt_images[view.view_id], dtype=np.float64)
            provenance[view.view_id] = PROVENANCE_GROUND_TRUTH
            continue
        if not path.exists():
            raise ValueError(f"missing pseudo target for view {view.view_id}: {path}")
        img = load_png(path)
        if img.ndim != 3 or img.shape != (view.height, view.width, 3):
            raise ValueError(
                f"view {view.view_id}: target {path} has shape {img.shape}, "
                f"camera expects ({view.height}, {view.width}, 3)"
            )
        images[view.view_id] = img
        provenance[view.view_id] = PROVENANCE_FILE
    result = PseudoTargetSet(images=images, provenance=provenance)
    result.check_complete(views)
    return result


def synthetic_oracle(
    gt_images: Mapping[int, np.ndarray],
    cams: Sequence[CameraView],
    corruption: CorruptionConfig,
) -> tuple[PseudoTargetSet, dict[int, np.ndarray]]:
    """Corrupt ground truth into pseudo targets with known damage masks.

    Novel views get a Gaussian blur plus seeded rectangular patches whose
    channel values are pushed across mid-gray by patch_color_shift, so
    with no blur a masked pixel always differs from ground truth even
    after clamping to [0, 1]. Support views pass through untouched.

    Returns:
        (targets, masks) where masks[view_id] is a boolean (H, W) array
        marking the patched pixels (all False on supports).
    """
    corruption.validate()
    rng = np.random.default_rng(corruption.rng_seed)
    images: dict[int, np.ndarray] = {}
    provenance: dict[int, str] = {}
    masks: dict[int, np.ndarray] = {}
    for cam in cams:
        if cam.view_id not in gt_images:
            raise ValueError(f"no ground-truth image for view {cam.view_id}")
        gt = np.array(gt_images[cam.view_id], dtype=np.float64)
        mask = np.zeros(gt.shape[:2], dtype=bool)
        if cam.is_support:
            images[cam.view_id] = gt
            provenance[cam.view_id] = PROVENANCE_GROUND_TRUTH
            masks[cam.view_id] = mask
            continue

        img = gt
        if corruption.blur_sigma > 0.0:
            img = np.clip(gaussian_filter(img, (corruption.blur_sigma,
                                                corruption.blur_sigma, 0.0)), 0.0, 1.0)
        h, w = img.shape[:2]
        ps = corruption.patch_size
        if corruption.patch_count > 0:
            if ps > h or ps > w:
                raise ValueError(f"patch size {ps} exceeds image ({h} x {w})")
            for _ in range(corruption.patch_count):
                r = int(rng.integers(0, h - ps + 1))
                c = int(rng.integers(0, w - ps + 1))
                mask[r:r + ps, c:c + ps] = True
            if corruption.patch_color_shift > 0.0:
                # One shift over the union, so overlapping patches cannot
                # cancel back to the original value.
                region = img[mask]
                shifted = np.where(region < 0.5,
                                   region + corruption.patch_color_shift,
                                   region - corruption.patch_color_shift)
                img[mask] = np.clip(shifted, 0.0, 1.0)
            else:
                mask[:] = False
        images[cam.view_id] = img
        provenance[cam.view_id] = PROVENANCE_ORACLE
        masks[cam.view_id] = mask
    return PseudoTargetSet(images=images, provenance=provenance), masks
