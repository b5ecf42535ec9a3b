"""Scene repair: Adam over Gaussian parameters with gated densification.

The loop is Stage 3 of the pipeline: sample a view batch, render, take the
confidence-weighted loss, push pixel gradients through the rasterizer
backward, and apply Adam per parameter group. Densification statistics
accumulate the confidence-modulated screen-space position gradients, so a
Gaussian supported only by zero-confidence pixels collects zero signal and
is never cloned or split.

Determinism contract: with a fixed rng_seed the whole loop is bit-exact,
independent of the worker thread count. All rng draws happen on the main
thread, per-view reductions run in view order, and Adam skips rows whose
gradient and moments are all exactly zero (an untouched Gaussian keeps its
bytes, not just its value).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .objective import LossReport, batch_loss
from .rasterizer import GradientBundle, render, render_backward
from .scene import CameraView, GaussianScene, quaternion_to_rotation, sigmoid

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-15

# scene attribute -> RepairConfig learning-rate attribute
PARAM_GROUPS = {
    "means": "lr_position",
    "log_scales": "lr_log_scale",
    "rotations": "lr_rotation",
    "opacity_logits": "lr_opacity_logit",
    "colors": "lr_color",
}


@dataclass
class RepairConfig:
    """Hyperparameters of the repair loop; defaults reproduce the reference setup."""

    iterations: int = 1000
    densify_interval: int = 100
    batch_size: int = 4
    lr_position: float = 1.6e-4
    lr_color: float = 5e-3
    lr_log_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity_logit: float = 5e-2
    ssim_weight: float = 0.2
    gt_anchor_weight: float = 1.0
    error_bandwidth: float = 0.10
    baseline_confidence: float = 0.3
    min_coverage_alpha: float = 0.3
    smooth_kernel: int = 15
    densify_grad_threshold: float = 2e-4
    prune_opacity: float = 0.005
    split_scale_fraction: float = 0.01
    densify_stop_fraction: float = 0.8
    rng_seed: int = 0
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.densify_interval <= 0:
            raise ValueError("densify_interval must be positive")
        if self.iterations % self.densify_interval != 0:
            raise ValueError("densify_interval must divide iterations evenly")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("lr_position", "lr_color", "lr_log_scale", "lr_rotation",
                     "lr_opacity_logit"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.ssim_weight <= 1.0:
            raise ValueError("ssim_weight must lie in [0, 1]")
        if self.gt_anchor_weight < 0.0:
            raise ValueError("gt_anchor_weight must be >= 0")
        if self.error_bandwidth <= 0.0:
            raise ValueError("error_bandwidth must be positive")
        if not 0.0 <= self.baseline_confidence <= 1.0:
            raise ValueError("baseline_confidence must lie in [0, 1]")
        if not 0.0 <= self.min_coverage_alpha <= 1.0:
            raise ValueError("min_coverage_alpha must lie in [0, 1]")
        if self.smooth_kernel < 1 or self.smooth_kernel % 2 == 0:
            raise ValueError("smooth_kernel must be odd and >= 1")
        for name in ("densify_grad_threshold", "prune_opacity", "split_scale_fraction"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.densify_stop_fraction <= 1.0:
            raise ValueError("densify_stop_fraction must lie in [0, 1]")
        bg = np.asarray(self.background, dtype=np.float64)
        if bg.shape != (3,) or not np.all(np.isfinite(bg)):
            raise ValueError("background must be a finite RGB triple")


@dataclass
class AdamState:
    """First/second moment buffers per parameter group plus a step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_scene(cls, scene: GaussianScene) -> "AdamState":
        m = {g: np.zeros_like(getattr(scene, g)) for g in PARAM_GROUPS}
        v = {g: np.zeros_like(getattr(scene, g)) for g in PARAM_GROUPS}
        return cls(m=m, v=v)


def adam_step(scene: GaussianScene, grads: GradientBundle, state: AdamState,
              cfg: RepairConfig) -> None:
    """One bias-corrected Adam update, in place, per parameter group.

    Rows whose gradient and both moment buffers are exactly zero are not
    written at all; a Gaussian that never receives gradient stays
    bit-identical. Quaternions are renormalized on updated rows only.
    """
    group_grads = {
        "means": grads.mean,
        "log_scales": grads.log_scale,
        "rotations": grads.rotation,
        "opacity_logits": grads.opacity_logit,
        "colors": grads.color,
    }
    for group in PARAM_GROUPS:
        if group_grads[group].shape != getattr(scene, group).shape:
            raise ValueError(f"{group}: gradient shape {group_grads[group].shape} "
                             f"does not match scene {getattr(scene, group).shape}")
        if state.m[group].shape != getattr(scene, group).shape:
            raise ValueError(f"{group}: optimizer state is misaligned with the scene")

    state.step += 1
    t = state.step
    bias1 = 1.0 - ADAM_BETA1 ** t
    bias2 = 1.0 - ADAM_BETA2 ** t
    for group, lr_name in PARAM_GROUPS.items():
        grad = group_grads[group]
        param = getattr(scene, group)
        m = state.m[group]
        v = state.v[group]
        if grad.ndim == 1:
            active = (grad != 0.0) | (m != 0.0) | (v != 0.0)
        else:
            active = ((grad != 0.0).any(axis=1) | (m != 0.0).any(axis=1)
                      | (v != 0.0).any(axis=1))
        rows = np.flatnonzero(active)
        if rows.size == 0:
            continue
        g = grad[rows]
        m[rows] = ADAM_BETA1 * m[rows] + (1.0 - ADAM_BETA1) * g
        v[rows] = ADAM_BETA2 * v[rows] + (1.0 - ADAM_BETA2) * g * g
        step_dir = (m[rows] / bias1) / (np.sqrt(v[rows] / bias2) + ADAM_EPS)
        param[rows] -= getattr(cfg, lr_name) * step_dir
        if group == "rotations":
            norms = np.linalg.norm(param[rows], axis=1, keepdims=True)
            if np.any(norms == 0.0):
                raise ValueError("quaternion collapsed to zero during update")
            param[rows] = param[rows] / norms


@dataclass
class DensifyStats:
    """Per-Gaussian densification accumulators between topology events.

    grad_norm_sum / seen_count is the running mean of the per-view norms
    of the confidence-weighted screen-space position gradient. grad3d_sum
    additionally integrates the world-space position gradient; its
    direction seeds the clone offset.
    """

    grad_norm_sum: np.ndarray  # (N,)
    seen_count: np.ndarray     # (N,) int64 views where the Gaussian rasterized
    max_radius: np.ndarray     # (N,) largest projected footprint radius, px
    grad3d_sum: np.ndarray     # (N, 3)

    @classmethod
    def zeros(cls, n: int) -> "DensifyStats":
        return cls(
            grad_norm_sum=np.zeros(n),
            seen_count=np.zeros(n, dtype=np.int64),
            max_radius=np.zeros(n),
            grad3d_sum=np.zeros((n, 3)),
        )

    @property
    def count(self) -> int:
        return self.grad_norm_sum.shape[0]

    @property
    def mean_grad_norm(self) -> np.ndarray:
        """Running mean over the views where each Gaussian was visible."""
        return self.grad_norm_sum / np.maximum(self.seen_count, 1)


def accumulate_densify_stats(stats: DensifyStats, pos2d_grads: np.ndarray,
                             touched: np.ndarray, *,
                             mean_grads: np.ndarray | None = None,
                             radii_px: np.ndarray | None = None) -> None:
    """Fold one view's backward pass into the densification statistics.

    pos2d_grads must come from a backward whose pixel gradient already
    carried the confidence weights; gating therefore happens upstream.
    touched marks the Gaussians that rasterized in this view.
    """
    touched = np.asarray(touched, dtype=bool)
    if touched.shape != (stats.count,):
        raise ValueError(f"touched mask shape {touched.shape} does not match "
                         f"{stats.count} tracked Gaussians")
    stats.grad_norm_sum[touched] += np.linalg.norm(pos2d_grads[touched], axis=1)
    stats.seen_count[touched] += 1
    if mean_grads is not None:
        stats.grad3d_sum[touched] += mean_grads[touched]
    if radii_px is not None:
        stats.max_radius[touched] = np.maximum(stats.max_radius[touched],
                                               radii_px[touched])


@dataclass(frozen=True)
class TopologyReport:
    """What one densify/prune event did, in pre-event indices."""

    cloned: np.ndarray      # old indices that received a clone copy
    split: np.ndarray       # old indices replaced by two children
    pruned: np.ndarray      # old indices removed by the opacity prune
    pruned_new: int         # freshly created Gaussians pruned immediately
    old_to_new: np.ndarray  # (N_old,) new index per original, -1 if gone
    n_before: int
    n_after: int

    @property
    def prune_count(self) -> int:
        return len(self.pruned) + self.pruned_new

    @property
    def changed(self) -> bool:
        return bool(len(self.cloned) or len(self.split) or self.prune_count)


def scene_extent(views: Sequence[CameraView]) -> float:
    """Radius of the camera-center bounding sphere, about the centroid."""
    if len(views) == 0:
        raise ValueError("no views")
    centers = np.stack([v.t for v in views])
    radius = float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max())
    return radius if radius > 0.0 else 1.0


def _split_children(scene: GaussianScene, split_idx: np.ndarray,
                    rng: np.random.Generator) -> GaussianScene:
    """Two children per parent, sampled from the parent's own distribution."""
    n = len(split_idx)
    if n == 0:
        return GaussianScene.empty()
    parents = np.repeat(split_idx, 2)
    quats = scene.rotations[parents]
    quats = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    rot = np.stack([quaternion_to_rotation(q) for q in quats])
    scales = scene.scales[parents]
    draws = rng.standard_normal((2 * n, 3))
    offsets = np.einsum("nij,nj->ni", rot, scales * draws)
    return GaussianScene(
        means=scene.means[parents] + offsets,
        log_scales=scene.log_scales[parents] - np.log(1.6),
        rotations=scene.rotations[parents],
        opacity_logits=scene.opacity_logits[parents],
        colors=scene.colors[parents],
    )


def densify_and_prune(scene: GaussianScene, stats: DensifyStats, adam: AdamState,
                      cfg: RepairConfig, extent: float,
                      rng: np.random.Generator) -> TopologyReport:
    """One topology event: clone small / split large high-gradient Gaussians,
    then prune by opacity. Mutates scene, stats, and adam consistently;
    new Gaussians start with zero Adam moments and stats reset to zero.
    """
    n = len(scene)
    if stats.count != n:
        raise ValueError("densify stats are misaligned with the scene")

    g_mean = stats.mean_grad_norm
    max_scale = scene.scales.max(axis=1)
    densify = g_mean > cfg.densify_grad_threshold
    clone_mask = densify & (max_scale <= cfg.split_scale_fraction * extent)
    split_mask = densify & ~clone_mask
    clone_idx = np.flatnonzero(clone_mask)
    split_idx = np.flatnonzero(split_mask)
    kept_idx = np.flatnonzero(~split_mask)

    # Clone copies, nudged along the accumulated position-gradient direction
    # by 1% of the parent's largest scale to break the duplicate symmetry.
    clones = scene.select(clone_idx)
    grad_dir = stats.grad3d_sum[clone_idx]
    norms = np.linalg.norm(grad_dir, axis=1, keepdims=True)
    grad_dir = np.divide(grad_dir, norms, out=np.zeros_like(grad_dir), where=norms > 0)
    clones.means = clones.means + 0.01 * max_scale[clone_idx, None] * grad_dir

    children = _split_children(scene, split_idx, rng)
    assembled = GaussianScene.concatenate([scene.select(kept_idx), clones, children])

    def assemble_moments(buf: np.ndarray) -> np.ndarray:
        new_shape = (len(assembled),) + buf.shape[1:]
        out = np.zeros(new_shape, dtype=buf.dtype)
        out[:len(kept_idx)] = buf[kept_idx]
        return out

    is_original = np.zeros(len(assembled), dtype=bool)
    is_original[:len(kept_idx)] = True

    keep = sigmoid(assembled.opacity_logits) >= cfg.prune_opacity
    pruned_old = kept_idx[~keep[:len(kept_idx)]]
    pruned_new = int(np.count_nonzero(~keep & ~is_original))
    final = assembled.select(np.flatnonzero(keep))

    new_pos = np.full(len(assembled), -1, dtype=np.int64)
    new_pos[keep] = np.arange(int(keep.sum()))
    old_to_new = np.full(n, -1, dtype=np.int64)
    old_to_new[kept_idx] = new_pos[:len(kept_idx)]

    scene.means = final.means
    scene.log_scales = final.log_scales
    scene.rotations = final.rotations
    scene.opacity_logits = final.opacity_logits
    scene.colors = final.colors
    for group in PARAM_GROUPS:
        adam.m[group] = assemble_moments(adam.m[group])[keep]
        adam.v[group] = assemble_moments(adam.v[group])[keep]
    fresh = DensifyStats.zeros(len(scene))
    stats.grad_norm_sum = fresh.grad_norm_sum
    stats.seen_count = fresh.seen_count
    stats.max_radius = fresh.max_radius
    stats.grad3d_sum = fresh.grad3d_sum

    return TopologyReport(
        cloned=clone_idx, split=split_idx, pruned=pruned_old,
        pruned_new=pruned_new, old_to_new=old_to_new,
        n_before=n, n_after=len(scene),
    )


def repair(
    scene0: GaussianScene,
    views: Sequence[CameraView],
    targets: Mapping[int, np.ndarray],
    confidences: Mapping[int, object],
    cfg: RepairConfig,
    *,
    on_loss: Callable[[int, LossReport], None] | None = None,
    on_topology: Callable[[int, TopologyReport], None] | None = None,
    on_step: Callable[[int, GaussianScene], None] | None = None,
) -> GaussianScene:
    """Run the full repair loop and return the final scene.

    targets must cover every view (GT for supports, pseudo-targets for
    novels) and confidences likewise (all-ones for supports). The input
    scene is not modified; iterations=0 returns an exact copy.
    """
    cfg.validate()
    if len(views) == 0:
        raise ValueError("no views")
    for view in views:
        if view.view_id not in targets:
            raise ValueError(f"no target for view {view.view_id}")
        if view.view_id not in confidences:
            raise ValueError(f"no confidence map for view {view.view_id}")

    scene = scene0.copy()
    if cfg.iterations == 0:
        return scene

    rng = np.random.default_rng(cfg.rng_seed)
    adam = AdamState.for_scene(scene)
    stats = DensifyStats.zeros(len(scene))
    extent = scene_extent(views)
    view_list = list(views)
    batch_size = min(cfg.batch_size, len(view_list))
    densify_stop = cfg.densify_stop_fraction * cfg.iterations

    for step in range(1, cfg.iterations + 1):
        picks = rng.choice(len(view_list), size=batch_size, replace=False)
        batch = [view_list[i] for i in picks]
        outputs = [render(scene, v, cfg.background) for v in batch]
        report = batch_loss(batch, [o.rgb for o in outputs], targets, confidences, cfg)

        total_grads = GradientBundle.zeros(len(scene))
        radii = np.zeros(len(scene))
        for view, out in zip(batch, outputs):
            st = out.blend_state
            g = render_backward(scene, view, st, report.per_pixel_grad[view.view_id])
            total_grads.accumulate(g)
            radii[:] = 0.0
            radii[st.sorted_indices] = st.radius_px
            accumulate_densify_stats(stats, g.pos2d, st.visible_mask,
                                     mean_grads=g.mean, radii_px=radii)

        adam_step(scene, total_grads, adam, cfg)
        if on_loss is not None:
            on_loss(step, report)

        if step % cfg.densify_interval == 0 and step < densify_stop:
            event = densify_and_prune(scene, stats, adam, cfg, extent, rng)
            if event.changed:
                logger.info("step %d: +%d clones, +%d splits, -%d pruned, N=%d",
                            step, len(event.cloned), len(event.split),
                            event.prune_count, event.n_after)
            if on_topology is not None:
                on_topology(step, event)
        if on_step is not None:
            on_step(step, scene)
    return scene
