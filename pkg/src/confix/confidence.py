"""Per-pixel confidence for pseudo ground truth.

A pixel of a pseudo target earns confidence by agreeing with what the
support views (trusted ground truth) see at its scaffold depth. Pixels
the scaffold does not cover score zero; covered pixels that no support
validates fall back to a baseline. The raw map is then smoothed with a
box mean whose window renormalizes at image borders. Support views are
trusted outright: their maps are identically one, applied after (and
regardless of) smoothing.

No occlusion reasoning happens here by design: an occluded reprojection
lands on the wrong surface, disagrees, and the pixel is down-weighted,
which errs toward caution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .reprojection import consensus_color, discrepancy, gather_support_samples
from .scene import CameraView, require_image

# Scaffold coverage below this is treated as empty space.
COVERAGE_FLOOR = 1e-6


@dataclass
class ConfidenceMap:
    """Per-pixel weights for one view, plus the pre-smoothing diagnostic."""

    view_id: int
    weights: np.ndarray  # (H, W) in [0, 1], smoothed
    raw: np.ndarray      # (H, W) in [0, 1], before smoothing

    def __post_init__(self):
        self.weights = require_image(self.weights, channels=1, name="weights")
        self.raw = require_image(self.raw, channels=1, name="raw confidence")
        if self.weights.shape != self.raw.shape:
            raise ValueError("weights and raw confidence shapes differ")


def raw_confidence(error, has_support, coverage_alpha, *,
                   error_bandwidth: float = 0.10,
                   baseline_confidence: float = 0.3,
                   min_coverage_alpha: float = 0.3) -> np.ndarray:
    """Three-branch confidence before smoothing.

    Covered and validated pixels score exp(-error^2 / (2 bandwidth^2));
    covered but unvalidated pixels score the baseline; uncovered pixels
    (coverage alpha below the threshold) score zero.

    Args:
        error: photometric discrepancy vs the support consensus.
        has_support: whether any support validated the pixel.
        coverage_alpha: scaffold rendering alpha.
        error_bandwidth: discrepancy scale of the Gaussian falloff.
        baseline_confidence: score for covered pixels without validation.
        min_coverage_alpha: coverage threshold for the zero branch.

    Returns:
        Array broadcast over the inputs, values in [0, 1].
    """
    error = np.asarray(error, dtype=np.float64)
    has_support = np.asarray(has_support, dtype=bool)
    coverage_alpha = np.asarray(coverage_alpha, dtype=np.float64)
    agreement = np.exp(-(error ** 2) / (2.0 * error_bandwidth ** 2))
    out = np.where(has_support, agreement, baseline_confidence)
    return np.where(coverage_alpha < min_coverage_alpha, 0.0, out)


def smooth_confidence(raw: np.ndarray, kernel: int) -> np.ndarray:
    """Box-mean smoothing with border renormalization.

    The window average is taken over in-image taps only, so borders keep
    full magnitude (a constant field stays constant everywhere).

    Args:
        raw: (H, W) raw confidence.
        kernel: odd window size, >= 1.
    """
    raw = require_image(raw, channels=1, name="raw confidence")
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"smoothing kernel must be odd and positive, got {kernel}")
    if kernel == 1:
        return raw.copy()
    num = uniform_filter(raw, size=kernel, mode="constant", cval=0.0)
    den = uniform_filter(np.ones_like(raw), size=kernel, mode="constant", cval=0.0)
    return np.clip(num / den, 0.0, 1.0)


def support_confidence(width: int, height: int, view_id: int = -1) -> ConfidenceMap:
    """All-ones map for a support view."""
    ones = np.ones((height, width))
    return ConfidenceMap(view_id=view_id, weights=ones, raw=ones.copy())


def build_confidence_map(
    cam: CameraView,
    pseudo: np.ndarray,
    scaffold_depth: np.ndarray,
    scaffold_alpha: np.ndarray,
    supports: list[tuple[CameraView, np.ndarray]],
    *,
    error_bandwidth: float = 0.10,
    baseline_confidence: float = 0.3,
    min_coverage_alpha: float = 0.3,
    smooth_kernel: int = 15,
) -> ConfidenceMap:
    """Score one pseudo target against the support views.

    Args:
        cam: the pseudo target's view.
        pseudo: (H, W, 3) pseudo ground-truth image.
        scaffold_depth: (H, W) depth rendered from the initial scene.
        scaffold_alpha: (H, W) alpha rendered from the initial scene.
        supports: (support view, support ground-truth image) pairs.
        error_bandwidth, baseline_confidence, min_coverage_alpha,
        smooth_kernel: scoring parameters.

    Returns:
        ConfidenceMap with smoothed weights and the raw diagnostic map.
        Support views short-circuit to the all-ones map.
    """
    if cam.is_support:
        return support_confidence(cam.width, cam.height, view_id=cam.view_id)

    pseudo = require_image(pseudo, channels=3, name="pseudo target")
    scaffold_depth = require_image(scaffold_depth, channels=1,
                                   name="scaffold depth", unit_range=False)
    scaffold_alpha = require_image(scaffold_alpha, channels=1, name="scaffold alpha")
    shape = (cam.height, cam.width)
    if pseudo.shape[:2] != shape or scaffold_depth.shape != shape or scaffold_alpha.shape != shape:
        raise ValueError(
            f"view {cam.view_id}: image dimensions do not match the camera "
            f"({cam.height} x {cam.width})"
        )
    for sup_cam, sup_img in supports:
        img = require_image(sup_img, channels=3, name=f"support image {sup_cam.view_id}")
        if img.shape[:2] != (sup_cam.height, sup_cam.width):
            raise ValueError(
                f"support view {sup_cam.view_id}: image dimensions do not match"
            )

    # Pixels without usable scaffold skip reprojection and go to the zero
    # branch regardless of the alpha threshold test.
    usable = (scaffold_depth > 0.0) & (scaffold_alpha >= COVERAGE_FLOOR)
    sample_sum, sample_count = gather_support_samples(
        cam, np.where(usable, scaffold_depth, 0.0), supports
    )
    consensus = consensus_color(sample_sum, sample_count)
    error = discrepancy(pseudo, consensus)
    has_support = sample_count > 0

    raw = raw_confidence(
        error, has_support, scaffold_alpha,
        error_bandwidth=error_bandwidth,
        baseline_confidence=baseline_confidence,
        min_coverage_alpha=min_coverage_alpha,
    )
    raw = np.where(usable, raw, 0.0)
    weights = smooth_confidence(raw, smooth_kernel)
    return ConfidenceMap(view_id=cam.view_id, weights=weights, raw=raw)
