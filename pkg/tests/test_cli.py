import json
from pathlib import Path

import numpy as np
import pytest

from confix.cli import LOCK_NAME, main
from confix.config import config_from_dict, save_config
from confix.images import save_png
from confix.io import load_scene, save_cameras, save_scene
from confix.providers import GT_NAME, TARGET_NAME, CorruptionConfig
from confix.synthetic import build_benchmark


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Small file-provider dataset: scene, cameras, gt/, targets/."""
    root = tmp_path_factory.mktemp("dataset")
    bench = build_benchmark(seed=0, n_gaussians=150, view_count=6,
                            width=32, height=32, support_every=3,
                            corruption=CorruptionConfig(patch_size=12))
    (root / "gt").mkdir()
    (root / "targets").mkdir()
    save_scene(root / "scene.ply", bench.initial_scene)
    save_cameras(root / "cameras.json", bench.views)
    for v in bench.views:
        save_png(root / "gt" / GT_NAME.format(v.view_id),
                 bench.gt_images[v.view_id])
        if not v.is_support:
            save_png(root / "targets" / TARGET_NAME.format(v.view_id),
                     bench.targets.target(v.view_id))
    return root


def write_config(path: Path, dataset: Path, out: Path, **repair_overrides):
    repair = {"iterations": 10, "densify_interval": 5, "batch_size": 2}
    repair.update(repair_overrides)
    cfg = config_from_dict({
        "scene": str(dataset / "scene.ply"),
        "cameras": str(dataset / "cameras.json"),
        "gt_dir": str(dataset / "gt"),
        "targets_dir": str(dataset / "targets"),
        "output_dir": str(out),
        "repair": repair,
    })
    save_config(cfg, path)
    return path


def test_render_command(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["render", "--config", str(cfg)]) == 0
    assert "rendered 6 views" in capsys.readouterr().out
    renders = out / "renders"
    assert (renders / "rgb_0000.png").exists()
    assert (renders / "depth_0005.pgm").exists()
    assert (renders / "alpha_0003.raw").exists()
    assert len(list(renders.iterdir())) == 6 * 6  # 3 maps x (png + raw)


def test_render_idempotent(dataset, tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["render", "--config", str(cfg)]) == 0
    first = (out / "renders" / "rgb_0001.png").read_bytes()
    assert main(["render", "--config", str(cfg)]) == 0
    assert (out / "renders" / "rgb_0001.png").read_bytes() == first


def test_confidence_command(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["confidence", "--config", str(cfg)]) == 0
    assert "mean novel-view confidence" in capsys.readouterr().out
    summary = json.loads((out / "confidence" / "summary.json").read_text())
    rows = {r["view_id"]: r for r in summary["views"]}
    assert len(rows) == 6
    # supports are pinned at full confidence
    assert rows[0]["mean_confidence"] == 1.0
    assert rows[3]["mean_confidence"] == 1.0
    assert rows[1]["mean_confidence"] < 1.0
    assert (out / "confidence" / "conf_0001.raw").exists()


def test_full_pipeline(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    for command in ("render", "confidence", "repair", "eval"):
        assert main([command, "--config", str(cfg)]) == 0, command
    final = load_scene(out / "repair" / "scene_final.ply")
    final.validate()
    loss_lines = (out / "repair" / "loss.csv").read_text().splitlines()
    assert loss_lines[0] == "step,l1,ssim,target,gt,total"
    assert len(loss_lines) == 11
    # loss values are full-precision floats
    total = float(loss_lines[1].split(",")[-1])
    assert np.isfinite(total) and total > 0
    report = json.loads((out / "eval" / "report.json").read_text())
    assert report["view_count"] == 4  # novel views only
    assert (out / "eval" / "report.csv").exists()
    assert "held-out views" in capsys.readouterr().out


def test_repair_reuses_cached_confidence(dataset, tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["confidence", "--config", str(cfg)]) == 0
    marker = out / "confidence" / "conf_0001.raw"
    stamp = marker.stat().st_mtime_ns
    assert main(["repair", "--config", str(cfg)]) == 0
    assert marker.stat().st_mtime_ns == stamp  # not recomputed


def test_repair_uniform_flag(dataset, tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["repair", "--config", str(cfg), "--uniform-confidence"]) == 0
    # uniform mode never needs or writes the confidence stage
    assert not (out / "confidence").exists()
    assert (out / "repair" / "scene_final.ply").exists()


def test_repair_deterministic_across_runs(dataset, tmp_path):
    cfgs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cfgs.append(write_config(tmp_path / f"{name}.json", dataset, out))
    assert main(["repair", "--config", str(cfgs[0])]) == 0
    assert main(["repair", "--config", str(cfgs[1])]) == 0
    a = (tmp_path / "a" / "repair" / "scene_final.ply").read_bytes()
    b = (tmp_path / "b" / "repair" / "scene_final.ply").read_bytes()
    assert a == b


def test_checkpoints_written(dataset, tmp_path):
    out = tmp_path / "out"
    cfg_path = tmp_path / "cfg.json"
    cfg = config_from_dict({
        "scene": str(dataset / "scene.ply"),
        "cameras": str(dataset / "cameras.json"),
        "gt_dir": str(dataset / "gt"),
        "targets_dir": str(dataset / "targets"),
        "output_dir": str(out),
        "checkpoint_interval": 5,
        "repair": {"iterations": 10, "densify_interval": 5, "batch_size": 2},
    })
    save_config(cfg, cfg_path)
    assert main(["repair", "--config", str(cfg_path)]) == 0
    ckpts = sorted((out / "repair" / "checkpoints").iterdir())
    assert [p.name for p in ckpts] == ["step_000005.ply", "step_000010.ply"]


def test_eval_requires_repair(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["eval", "--config", str(cfg)]) == 2
    assert "run repair first" in capsys.readouterr().err


def test_seed_override(dataset, tmp_path):
    outs = {}
    for seed in (0, 1):
        out = tmp_path / f"seed{seed}"
        cfg = write_config(tmp_path / f"cfg{seed}.json", dataset, out)
        assert main(["repair", "--config", str(cfg), "--seed", str(seed),
                     "--uniform-confidence"]) == 0
        outs[seed] = (out / "repair" / "scene_final.ply").read_bytes()
    assert outs[0] != outs[1]


def test_out_override(dataset, tmp_path):
    cfg = write_config(tmp_path / "cfg.json", dataset, tmp_path / "ignored")
    other = tmp_path / "other"
    assert main(["render", "--config", str(cfg), "--out", str(other)]) == 0
    assert (other / "renders" / "rgb_0000.png").exists()
    assert not (tmp_path / "ignored").exists()


def test_missing_config_exits_two(tmp_path, capsys):
    assert main(["render", "--config", str(tmp_path / "nope.json")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_missing_scene_exits_two(dataset, tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg = config_from_dict({
        "scene": str(tmp_path / "absent.ply"),
        "cameras": str(dataset / "cameras.json"),
        "gt_dir": str(dataset / "gt"),
        "targets_dir": str(dataset / "targets"),
        "output_dir": str(tmp_path / "out"),
    })
    save_config(cfg, cfg_path)
    assert main(["render", "--config", str(cfg_path)]) == 2
    assert "absent.ply" in capsys.readouterr().err


def test_lock_blocks_concurrent_commands(dataset, tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    (out / LOCK_NAME).write_text("pid 12345\n")
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["render", "--config", str(cfg)]) == 2
    assert "locked" in capsys.readouterr().err
    # the foreign lock is left in place
    assert (out / LOCK_NAME).read_text() == "pid 12345\n"


def test_lock_released_after_success(dataset, tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "cfg.json", dataset, out)
    assert main(["render", "--config", str(cfg)]) == 0
    assert not (out / LOCK_NAME).exists()


def test_synth_bench_command(tmp_path, capsys):
    out = tmp_path / "bench"
    cfg_path = tmp_path / "cfg.json"
    save_config(config_from_dict({
        "provider": "synthetic",
        "output_dir": str(out),
        "repair": {"iterations": 20, "densify_interval": 10, "batch_size": 4},
    }), cfg_path)
    written_cfg = tmp_path / "effective.json"
    assert main(["synth-bench", "--config", str(cfg_path), "--seed", "0",
                 "--write-config", str(written_cfg)]) == 0
    captured = capsys.readouterr().out
    assert "held-out PSNR" in captured
    assert written_cfg.exists()
    report = json.loads((out / "bench_report.json").read_text())
    assert {"psnr_initial", "psnr_weighted", "psnr_uniform",
            "weighted_minus_uniform_db", "mean_novel_confidence"} \
        <= set(report)
    # dataset artifacts for reuse by the file provider
    assert (out / "dataset" / "scene.ply").exists()
    assert (out / "dataset" / "cameras.json").exists()
    assert len(list((out / "dataset" / "gt").iterdir())) == 50
    assert len(list((out / "dataset" / "targets").iterdir())) == 40
    assert len(list((out / "dataset" / "masks").iterdir())) == 40
