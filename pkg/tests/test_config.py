import json
from pathlib import Path

import pytest

from confix.config import (
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    save_config,
)

GOLDEN = Path(__file__).parent / "data" / "default_config.json"


def test_default_config_matches_golden_file(tmp_path):
    path = tmp_path / "cfg.json"
    save_config(default_config(), path)
    assert path.read_text() == GOLDEN.read_text()


def test_default_hyperparameters():
    # the documented defaults, asserted literally
    cfg = default_config()
    r = cfg.repair
    assert r.error_bandwidth == 0.10
    assert r.baseline_confidence == 0.3
    assert r.min_coverage_alpha == 0.3
    assert r.smooth_kernel == 15
    assert r.ssim_weight == 0.2
    assert r.gt_anchor_weight == 1.0
    assert r.iterations == 1000
    assert r.densify_interval == 100
    assert r.lr_position == 1.6e-4
    assert r.lr_color == 5e-3
    assert r.batch_size == 4


def test_config_round_trip(tmp_path):
    cfg = default_config()
    cfg.repair.iterations = 200
    cfg.repair.rng_seed = 9
    cfg.output_dir = "elsewhere"
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert config_to_dict(back) == config_to_dict(cfg)


def test_empty_dict_is_defaults():
    assert config_to_dict(config_from_dict({})) \
        == config_to_dict(default_config())


def test_partial_override():
    cfg = config_from_dict({"repair": {"iterations": 300},
                            "output_dir": "x"})
    assert cfg.repair.iterations == 300
    assert cfg.repair.batch_size == 4  # untouched default
    assert cfg.output_dir == "x"


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"not_a_key": 1})
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"repair": {"learning_rate": 0.1}})
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"corruption": {"sigma": 0.1}})


def test_type_coercion():
    cfg = config_from_dict({"repair": {"lr_color": 1,  # int -> float
                                       "iterations": 500}})
    assert cfg.repair.lr_color == 1.0
    assert isinstance(cfg.repair.lr_color, float)
    with pytest.raises(ValueError):
        config_from_dict({"repair": {"iterations": 10.5}})
    with pytest.raises(ValueError):
        config_from_dict({"repair": {"iterations": "many"}})


def test_background_tuple():
    cfg = config_from_dict({"repair": {"background": [0.1, 0.2, 0.3]}})
    assert cfg.repair.background == (0.1, 0.2, 0.3)
    with pytest.raises(ValueError):
        config_from_dict({"repair": {"background": [0.1, 0.2]}})


def test_provider_validated():
    cfg = PipelineConfig(provider="nonsense")
    with pytest.raises(ValueError, match="provider"):
        cfg.validate()


def test_load_config_errors(tmp_path):
    with pytest.raises(ValueError, match="missing.json"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ValueError, match="bad.json"):
        load_config(bad)


def test_parse_rejects_bad_nested():
    # parsing validates: an inconsistent repair section fails fast
    with pytest.raises(ValueError, match="divide"):
        config_from_dict({"repair": {"iterations": 1000,
                                     "densify_interval": 7}})
