"""Confidence-weighted photometric losses and their pixel gradients.

Every loss here is differentiable w.r.t. the rendered image only; targets
and confidence weights are fixed inputs. The per-pixel gradients returned
are exactly what the rasterizer backward consumes, so confidence gating
happens at the loss level: a zero-weight pixel contributes zero gradient
through both the L1 and SSIM paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .confidence import ConfidenceMap
from .scene import CameraView, require_image
from .ssim import ssim_index_with_grad

LOSS_EPS = 1e-8


@dataclass(frozen=True)
class ViewLoss:
    """Loss terms and image gradient for a single rendered view."""

    l1_term: float
    ssim_term: float
    loss: float
    grad: np.ndarray


@dataclass(frozen=True)
class LossReport:
    """Batch loss decomposition.

    total = mean per-view target loss + gt_anchor_weight * mean anchor
    loss over the support views present in the batch. per_pixel_grad maps
    view_id to the full d(total)/d(render) for that view, both terms
    already scaled by their batch factors.
    """

    l1_term: float
    ssim_term: float
    target_loss: float
    gt_loss: float
    total: float
    per_pixel_grad: dict[int, np.ndarray]


def _weights_array(w, height: int, width: int) -> np.ndarray:
    if isinstance(w, ConfidenceMap):
        w = w.weights
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (height, width):
        raise ValueError(f"confidence shape {w.shape} does not match image ({height}, {width})")
    return w


def weighted_l1(render: np.ndarray, target: np.ndarray, w) -> tuple[float, np.ndarray]:
    """Confidence-weighted L1 loss, normalized by total weight.

    loss = sum_p w(p) * ||render(p) - target(p)||_1 / (sum_p w(p) + eps).
    The per-pixel L1 sums over the 3 channels. Returns (loss, grad) with
    grad shaped like render.
    """
    render = require_image(render, 3, "render", unit_range=False)
    target = require_image(target, 3, "target", unit_range=False)
    if render.shape != target.shape:
        raise ValueError(f"render shape {render.shape} does not match target {target.shape}")
    w = _weights_array(w, render.shape[0], render.shape[1])
    diff = render - target
    denom = float(w.sum()) + LOSS_EPS
    loss = float((w * np.abs(diff).sum(axis=2)).sum()) / denom
    grad = w[:, :, None] * np.sign(diff) / denom
    return loss, grad


def weighted_ssim(render: np.ndarray, target: np.ndarray, w) -> tuple[float, np.ndarray]:
    """Structural loss under the confidence blend.

    The render is blended toward the target where confidence is low,
    composite = w*render + (1-w)*target, and the loss is 1 - SSIM of the
    composite against the target. Gradient reaches the render only through
    the w*render term, so w=0 pixels are fully gated.
    """
    render = require_image(render, 3, "render", unit_range=False)
    target = require_image(target, 3, "target", unit_range=False)
    if render.shape != target.shape:
        raise ValueError(f"render shape {render.shape} does not match target {target.shape}")
    w = _weights_array(w, render.shape[0], render.shape[1])
    w3 = w[:, :, None]
    composite = w3 * render + (1.0 - w3) * target
    value, grad_composite = ssim_index_with_grad(composite, target)
    return 1.0 - value, -w3 * grad_composite


def target_loss(render: np.ndarray, target: np.ndarray, w, ssim_weight: float) -> ViewLoss:
    """Photometric loss for one view: (1-λ)·weighted L1 + λ·SSIM loss."""
    if not 0.0 <= ssim_weight <= 1.0:
        raise ValueError(f"ssim_weight must lie in [0, 1], got {ssim_weight}")
    l1_value, l1_grad = weighted_l1(render, target, w)
    ssim_value, ssim_grad = weighted_ssim(render, target, w)
    loss = (1.0 - ssim_weight) * l1_value + ssim_weight * ssim_value
    grad = (1.0 - ssim_weight) * l1_grad + ssim_weight * ssim_grad
    return ViewLoss(l1_term=l1_value, ssim_term=ssim_value, loss=loss, grad=grad)


def gt_anchor_loss(render: np.ndarray, gt_image: np.ndarray, ssim_weight: float) -> ViewLoss:
    """Anchoring loss against ground truth; target_loss with unit weights."""
    render = require_image(render, 3, "render", unit_range=False)
    ones = np.ones(render.shape[:2])
    return target_loss(render, gt_image, ones, ssim_weight)


def batch_loss(
    views: Sequence[CameraView],
    renders: Sequence[np.ndarray],
    targets: Mapping[int, np.ndarray],
    confidences: Mapping[int, ConfidenceMap | np.ndarray],
    cfg,
) -> LossReport:
    """Total loss over a batch of views with GT anchoring on supports.

    renders aligns with views; targets and confidences are keyed by
    view_id and must cover every view in the batch (support targets are
    the GT images themselves). cfg supplies ssim_weight and
    gt_anchor_weight.
    """
    if len(views) == 0:
        raise ValueError("batch is empty")
    if len(renders) != len(views):
        raise ValueError(f"got {len(renders)} renders for {len(views)} views")
    for view in views:
        if view.view_id not in targets:
            raise ValueError(f"no target for view {view.view_id}")
        if view.view_id not in confidences:
            raise ValueError(f"no confidence map for view {view.view_id}")

    supports = [v for v in views if v.is_support]
    batch_scale = 1.0 / len(views)
    anchor_scale = cfg.gt_anchor_weight / len(supports) if supports else 0.0

    l1_sum = 0.0
    ssim_sum = 0.0
    tgt_sum = 0.0
    gt_sum = 0.0
    grads: dict[int, np.ndarray] = {}
    for view, render in zip(views, renders):
        vid = view.view_id
        tgt = target_loss(render, targets[vid], confidences[vid], cfg.ssim_weight)
        l1_sum += tgt.l1_term
        ssim_sum += tgt.ssim_term
        tgt_sum += tgt.loss
        grads[vid] = batch_scale * tgt.grad
        if view.is_support:
            anchor = gt_anchor_loss(render, targets[vid], cfg.ssim_weight)
            gt_sum += anchor.loss
            grads[vid] = grads[vid] + anchor_scale * anchor.grad

    mean_tgt = tgt_sum * batch_scale
    mean_gt = gt_sum / len(supports) if supports else 0.0
    return LossReport(
        l1_term=l1_sum * batch_scale,
        ssim_term=ssim_sum * batch_scale,
        target_loss=mean_tgt,
        gt_loss=mean_gt,
        total=mean_tgt + cfg.gt_anchor_weight * mean_gt,
        per_pixel_grad=grads,
    )
