"""Shared fixtures: small cameras, random scenes, a gradcheck driver."""

import numpy as np
import pytest

from confix.objective import target_loss
from confix.rasterizer import render, render_backward
from confix.scene import CameraView, GaussianScene


def make_camera(view_id=0, *, width=32, height=32, focal=40.0, tx=0.0,
                is_support=False):
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
    return CameraView(view_id=view_id, is_support=is_support, width=width,
                      height=height, K=K, R=np.eye(3),
                      t=np.array([tx, 0.0, 0.0]))


def make_random_scene(rng, n=10, *, depth=(2.5, 4.0), spread=0.9):
    # parameter ranges keep activations away from saturation so finite
    # differences stay informative
    means = np.column_stack([
        rng.uniform(-spread, spread, n),
        rng.uniform(-spread, spread, n),
        rng.uniform(depth[0], depth[1], n),
    ])
    log_scales = np.log(rng.uniform(0.05, 0.25, (n, 3)))
    rotations = rng.standard_normal((n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    opacity_logits = rng.uniform(-1.0, 1.0, n)
    colors = rng.uniform(0.2, 0.8, (n, 3))
    return GaussianScene(means, log_scales, rotations, opacity_logits, colors)


GRAD_GROUPS = ("means", "log_scales", "rotations", "opacity_logits", "colors")
_BUNDLE_FIELD = {"means": "mean", "log_scales": "log_scale",
                 "rotations": "rotation", "opacity_logits": "opacity_logit",
                 "colors": "color"}


def gradcheck_weighted_loss(scene, cam, target, w, *, ssim_weight=0.2,
                            h=1e-4):
    """Worst relative error of analytic vs central-difference gradients.

    The relative error uses max(|analytic|, |fd|, 1e-5) as denominator;
    the floor absorbs finite-difference noise on near-zero entries.
    """
    out = render(scene, cam)
    vl = target_loss(out.rgb, target, w, ssim_weight)
    bundle = render_backward(scene, cam, out.blend_state, vl.grad)

    def loss_at(arrays):
        probe = GaussianScene(*arrays)
        img = render(probe, cam).rgb
        return target_loss(img, target, w, ssim_weight).loss

    worst = 0.0
    for group in GRAD_GROUPS:
        analytic = getattr(bundle, _BUNDLE_FIELD[group])
        base = getattr(scene, group)
        for flat in range(base.size):
            idx = np.unravel_index(flat, base.shape)
            arrays = {g: getattr(scene, g).copy() for g in GRAD_GROUPS}
            arrays[group][idx] += h
            hi = loss_at([arrays[g] for g in GRAD_GROUPS])
            arrays[group][idx] -= 2.0 * h
            lo = loss_at([arrays[g] for g in GRAD_GROUPS])
            fd = (hi - lo) / (2.0 * h)
            ana = float(np.asarray(analytic)[idx])
            rel = abs(ana - fd) / max(abs(ana), abs(fd), 1e-5)
            worst = max(worst, rel)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def cam():
    return make_camera()


@pytest.fixture
def small_scene(rng):
    return make_random_scene(rng, 6)
