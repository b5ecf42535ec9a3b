"""Finite-difference checks of the analytic rasterizer backward pass."""

import numpy as np

from confix.rasterizer import GradientBundle, render, render_backward
from conftest import gradcheck_weighted_loss, make_camera, make_random_scene


def smooth_target(rng, cam):
    # low-frequency target in [0,1] keeps per-pixel differences well away
    # from the L1 kink at the finite-difference step size
    yy, xx = np.meshgrid(np.linspace(0, 1, cam.height),
                         np.linspace(0, 1, cam.width), indexing="ij")
    phase = rng.uniform(0, 2 * np.pi, 3)
    img = np.stack([0.5 + 0.4 * np.sin(3 * xx + 5 * yy + p) for p in phase],
                   axis=2)
    return np.clip(img, 0.0, 1.0)


def test_gradcheck_small_scene(rng):
    cam = make_camera(width=16, height=16, focal=20.0)
    scene = make_random_scene(rng, 3)
    target = smooth_target(rng, cam)
    w = rng.uniform(0.2, 1.0, (16, 16))
    worst = gradcheck_weighted_loss(scene, cam, target, w)
    assert worst < 1e-3


def test_gradcheck_l1_only(rng):
    cam = make_camera(width=16, height=16, focal=20.0)
    scene = make_random_scene(rng, 3)
    target = smooth_target(rng, cam)
    w = rng.uniform(0.2, 1.0, (16, 16))
    worst = gradcheck_weighted_loss(scene, cam, target, w, ssim_weight=0.0)
    assert worst < 1e-3


def test_zero_pixel_grad_gives_zero_bundle(small_scene, cam):
    out = render(small_scene, cam)
    g = render_backward(small_scene, cam, out.blend_state,
                        np.zeros_like(out.rgb))
    for field in ("mean", "log_scale", "rotation", "opacity_logit", "color",
                  "pos2d"):
        assert not np.any(getattr(g, field))


def test_invisible_gaussian_gets_zero_gradient(rng, cam):
    scene = make_random_scene(rng, 4)
    scene.means[2, 2] = -5.0  # behind the camera
    out = render(scene, cam)
    g = render_backward(scene, cam, out.blend_state, np.ones_like(out.rgb))
    assert not np.any(g.mean[2])
    assert not np.any(g.color[2])
    assert np.any(g.color[0]) or np.any(g.color[1]) or np.any(g.color[3])


def test_rotation_gradient_tangent_to_quaternion(rng, cam):
    scene = make_random_scene(rng, 5)
    out = render(scene, cam)
    grad = rng.standard_normal(out.rgb.shape)
    g = render_backward(scene, cam, out.blend_state, grad)
    qn = scene.rotations / np.linalg.norm(scene.rotations, axis=1,
                                          keepdims=True)
    radial = np.abs(np.sum(g.rotation * qn, axis=1))
    assert np.max(radial) < 1e-10


def test_pos2d_gradient_tracks_mean_gradient(rng, cam):
    # the screen-space gradient is the image-plane face of the position
    # gradient; both must vanish together
    scene = make_random_scene(rng, 5)
    out = render(scene, cam)
    g = render_backward(scene, cam, out.blend_state, np.ones_like(out.rgb))
    has_pos2d = np.any(g.pos2d != 0.0, axis=1)
    visible = out.blend_state.visible_mask
    assert not np.any(has_pos2d & ~visible)


def test_gradient_accumulate(rng):
    a = GradientBundle.zeros(3)
    b = GradientBundle.zeros(3)
    a.mean[1] = 1.0
    b.mean[1] = 2.0
    b.color[0] = 0.5
    a.accumulate(b)
    assert a.mean[1, 0] == 3.0
    assert a.color[0, 0] == 0.5


def test_backward_deterministic(rng, cam):
    scene = make_random_scene(rng, 12)
    out = render(scene, cam)
    grad = rng.standard_normal(out.rgb.shape)
    g1 = render_backward(scene, cam, out.blend_state, grad)
    g2 = render_backward(scene, cam, out.blend_state, grad)
    for field in ("mean", "log_scale", "rotation", "opacity_logit", "color"):
        assert np.array_equal(getattr(g1, field), getattr(g2, field))
