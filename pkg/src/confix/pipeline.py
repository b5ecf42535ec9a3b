"""In-memory stage orchestration shared by the CLI and the benchmark.

Stage 1 renders the scaffold, stage 2 scores pseudo targets against the
support views, stage 3 repairs. Everything here is pure plumbing between
the module-level pieces; file handling stays in the CLI.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .confidence import ConfidenceMap, build_confidence_map, support_confidence
from .metrics import EvalReport, evaluate_pairs
from .optimizer import RepairConfig
from .rasterizer import RenderOutput, render
from .scene import CameraView, GaussianScene


def render_all(scene: GaussianScene, views: Sequence[CameraView],
               background=(0.0, 0.0, 0.0)) -> dict[int, RenderOutput]:
    return {v.view_id: render(scene, v, background) for v in views}


def build_confidence_maps(
    scene0: GaussianScene,
    views: Sequence[CameraView],
    targets: Mapping[int, np.ndarray],
    cfg: RepairConfig,
    *,
    scaffold: Mapping[int, tuple[np.ndarray, np.ndarray]] | None = None,
) -> dict[int, ConfidenceMap]:
    """Score every pseudo target against the supports; all-ones on supports.

    scaffold may carry precomputed (depth, alpha) pairs of scene0 renders
    keyed by view id; any novel view missing from it is rendered here.
    """
    supports = [(v, np.asarray(targets[v.view_id], dtype=np.float64))
                for v in views if v.is_support]
    maps: dict[int, ConfidenceMap] = {}
    for view in views:
        if view.is_support:
            maps[view.view_id] = support_confidence(view.width, view.height,
                                                    view_id=view.view_id)
            continue
        pair = scaffold.get(view.view_id) if scaffold is not None else None
        if pair is None:
            out = render(scene0, view, cfg.background)
            pair = (out.depth, out.alpha)
        depth, alpha = pair
        maps[view.view_id] = build_confidence_map(
            view, targets[view.view_id], depth, alpha, supports,
            error_bandwidth=cfg.error_bandwidth,
            baseline_confidence=cfg.baseline_confidence,
            min_coverage_alpha=cfg.min_coverage_alpha,
            smooth_kernel=cfg.smooth_kernel,
        )
    return maps


def uniform_confidence_maps(views: Sequence[CameraView]) -> dict[int, ConfidenceMap]:
    """w = 1 everywhere: the no-guidance ablation arm."""
    return {v.view_id: support_confidence(v.width, v.height, view_id=v.view_id)
            for v in views}


def evaluate_scene(scene: GaussianScene, views: Sequence[CameraView],
                   gt_images: Mapping[int, np.ndarray],
                   background=(0.0, 0.0, 0.0), *,
                   novel_only: bool = True) -> EvalReport:
    """Render and score views against ground truth.

    Renders are clipped to [0, 1] before scoring, matching what an 8-bit
    export would show.
    """
    picked = [v for v in views if not (novel_only and v.is_support)]
    if not picked:
        raise ValueError("no views to evaluate")
    pairs = []
    for view in picked:
        if view.view_id not in gt_images:
            raise ValueError(f"no ground-truth image for view {view.view_id}")
        rgb = np.clip(render(scene, view, background).rgb, 0.0, 1.0)
        pairs.append((view.view_id, rgb, gt_images[view.view_id]))
    return evaluate_pairs(pairs)
