import logging

import numpy as np
import pytest

from confix.images import save_png
from confix.io import save_scene
from confix.providers import (
    GT_NAME,
    PROVENANCE_FILE,
    PROVENANCE_GROUND_TRUTH,
    PROVENANCE_ORACLE,
    TARGET_NAME,
    CorruptionConfig,
    load_gt_images,
    load_initial_scene,
    load_pseudo_targets,
    synthetic_oracle,
)
from conftest import make_camera, make_random_scene


def test_corruption_config_validation():
    CorruptionConfig().validate()
    with pytest.raises(ValueError):
        CorruptionConfig(blur_sigma=-1.0).validate()
    with pytest.raises(ValueError):
        CorruptionConfig(patch_size=0).validate()


def test_load_initial_scene(tmp_path, rng):
    scene = make_random_scene(rng, 5)
    save_scene(tmp_path / "scene.ply", scene)
    back = load_initial_scene(tmp_path / "scene.ply")
    assert len(back) == 5


def _write_view_images(tmp_path, views, rng, *, skip=()):
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir(exist_ok=True)
    images = {}
    for v in views:
        img = rng.uniform(0, 1, (v.height, v.width, 3))
        images[v.view_id] = img
        if v.view_id not in skip:
            save_png(gt_dir / GT_NAME.format(v.view_id), img)
    return gt_dir, images


def test_load_gt_images(tmp_path, rng):
    views = [make_camera(0, is_support=True), make_camera(1)]
    gt_dir, _ = _write_view_images(tmp_path, views, rng)
    images = load_gt_images(gt_dir, views)
    assert set(images) == {0, 1}
    assert images[0].shape == (32, 32, 3)


def test_load_gt_images_only_support(tmp_path, rng):
    views = [make_camera(0, is_support=True), make_camera(1)]
    gt_dir, _ = _write_view_images(tmp_path, views, rng, skip=(1,))
    images = load_gt_images(gt_dir, views, only_support=True)
    assert set(images) == {0}


def test_load_gt_images_missing_names_view(tmp_path, rng):
    views = [make_camera(0, is_support=True), make_camera(1)]
    gt_dir, _ = _write_view_images(tmp_path, views, rng, skip=(1,))
    with pytest.raises(ValueError, match="view 1"):
        load_gt_images(gt_dir, views)


def test_load_gt_images_shape_mismatch(tmp_path, rng):
    views = [make_camera(0)]
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    save_png(gt_dir / GT_NAME.format(0), rng.uniform(0, 1, (16, 16, 3)))
    with pytest.raises(ValueError, match="shape"):
        load_gt_images(gt_dir, views)


def test_load_pseudo_targets(tmp_path, rng):
    views = [make_camera(0, is_support=True), make_camera(1)]
    _, gt = _write_view_images(tmp_path, views, rng)
    tdir = tmp_path / "targets"
    tdir.mkdir()
    pseudo = rng.uniform(0, 1, (32, 32, 3))
    save_png(tdir / TARGET_NAME.format(1), pseudo)
    targets = load_pseudo_targets(tdir, views, gt)
    assert targets.provenance[0] == PROVENANCE_GROUND_TRUTH
    assert targets.provenance[1] == PROVENANCE_FILE
    assert np.array_equal(targets.target(0), gt[0])
    # the novel target is the file content, 8-bit quantized
    assert np.max(np.abs(targets.target(1) - pseudo)) <= 0.5 / 255 + 1e-12


def test_load_pseudo_targets_missing_novel(tmp_path, rng):
    views = [make_camera(0, is_support=True), make_camera(1)]
    _, gt = _write_view_images(tmp_path, views, rng)
    tdir = tmp_path / "targets"
    tdir.mkdir()
    with pytest.raises(ValueError, match="view 1"):
        load_pseudo_targets(tdir, views, gt)


def test_load_pseudo_targets_support_file_ignored(tmp_path, rng, caplog):
    views = [make_camera(0, is_support=True)]
    _, gt = _write_view_images(tmp_path, views, rng)
    tdir = tmp_path / "targets"
    tdir.mkdir()
    save_png(tdir / TARGET_NAME.format(0), np.zeros((32, 32, 3)))
    with caplog.at_level(logging.WARNING):
        targets = load_pseudo_targets(tdir, views, gt)
    assert "support" in caplog.text
    # ground truth wins over the stray file
    assert np.array_equal(targets.target(0), gt[0])


def _oracle_setup(rng, count=3):
    views = [make_camera(i, tx=0.1 * i, is_support=(i == 0))
             for i in range(count)]
    gt = {v.view_id: rng.uniform(0, 1, (32, 32, 3)) for v in views}
    return views, gt


def test_oracle_supports_untouched(rng):
    views, gt = _oracle_setup(rng)
    targets, masks = synthetic_oracle(gt, views, CorruptionConfig(patch_size=8))
    assert np.array_equal(targets.target(0), gt[0])
    assert targets.provenance[0] == PROVENANCE_GROUND_TRUTH
    assert not masks[0].any()


def test_oracle_mask_is_exact(rng):
    views, gt = _oracle_setup(rng)
    cfg = CorruptionConfig(patch_count=4, patch_size=8, patch_color_shift=0.5)
    targets, masks = synthetic_oracle(gt, views, cfg)
    for v in views[1:]:
        diff = np.abs(targets.target(v.view_id) - gt[v.view_id]).sum(axis=2)
        changed = diff > 0
        assert np.array_equal(changed, masks[v.view_id])
        assert masks[v.view_id].any()
        assert targets.provenance[v.view_id] == PROVENANCE_ORACLE


def test_oracle_shift_crosses_midgray(rng):
    views, gt = _oracle_setup(rng, count=2)
    cfg = CorruptionConfig(patch_count=2, patch_size=16, patch_color_shift=0.5)
    targets, masks = synthetic_oracle(gt, views, cfg)
    img = targets.target(1)
    mask = masks[1]
    orig = gt[1][mask]
    new = img[mask]
    # every corrupted channel moved by the full shift and stayed in range
    assert np.allclose(np.abs(new - orig), 0.5)
    assert new.min() >= 0.0 and new.max() <= 1.0


def test_oracle_deterministic_by_seed(rng):
    views, gt = _oracle_setup(rng)
    cfg = CorruptionConfig(patch_size=8, rng_seed=7)
    a_targets, a_masks = synthetic_oracle(gt, views, cfg)
    b_targets, b_masks = synthetic_oracle(gt, views, cfg)
    for vid in a_targets.images:
        assert np.array_equal(a_targets.target(vid), b_targets.target(vid))
        assert np.array_equal(a_masks[vid], b_masks[vid])
    c_targets, _ = synthetic_oracle(gt, views,
                                    CorruptionConfig(patch_size=8, rng_seed=8))
    assert not np.array_equal(a_targets.target(1), c_targets.target(1))


def test_oracle_zero_shift_clears_mask(rng):
    views, gt = _oracle_setup(rng, count=2)
    cfg = CorruptionConfig(patch_count=3, patch_size=8, patch_color_shift=0.0)
    targets, masks = synthetic_oracle(gt, views, cfg)
    assert not masks[1].any()
    assert np.array_equal(targets.target(1), gt[1])


def test_oracle_blur_only(rng):
    views, gt = _oracle_setup(rng, count=2)
    cfg = CorruptionConfig(blur_sigma=1.0, patch_count=0)
    targets, masks = synthetic_oracle(gt, views, cfg)
    assert not masks[1].any()
    img = targets.target(1)
    assert not np.array_equal(img, gt[1])
    # blur reduces total variation
    def tv(x):
        return np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()
    assert tv(img) < tv(gt[1])


def test_oracle_patch_too_large(rng):
    views, gt = _oracle_setup(rng, count=2)
    with pytest.raises(ValueError, match="patch size"):
        synthetic_oracle(gt, views, CorruptionConfig(patch_size=64))


def test_oracle_missing_gt(rng):
    views, gt = _oracle_setup(rng, count=2)
    del gt[1]
    with pytest.raises(ValueError, match="view 1"):
        synthetic_oracle(gt, views, CorruptionConfig(patch_size=8))


def test_check_complete_rejects_nongt_support(rng):
    from confix.providers import PseudoTargetSet
    views = [make_camera(0, is_support=True)]
    bad = PseudoTargetSet(images={0: np.zeros((4, 4, 3))},
                          provenance={0: PROVENANCE_FILE})
    with pytest.raises(ValueError, match="support view 0"):
        bad.check_complete(views)
