"""Pipeline configuration: JSON in, JSON out, no surprises.

Parsing is strict: unknown keys are rejected at every level so a typoed
hyperparameter cannot silently fall back to its default. Missing keys do
take defaults, which embed the reference hyperparameters; an empty file
is a valid config. parse(serialize(cfg)) round-trips to an equal config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

from .optimizer import RepairConfig
from .providers import CorruptionConfig

PROVIDERS = ("file", "synthetic")


@dataclass
class PipelineConfig:
    provider: str = "file"
    scene: str = "scene.ply"
    cameras: str = "cameras.json"
    gt_dir: str = "gt"
    targets_dir: str = "targets"
    output_dir: str = "out"
    checkpoint_interval: int = 0  # PLY snapshot cadence during repair; 0 = off
    repair: RepairConfig = field(default_factory=RepairConfig)
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)

    def validate(self) -> None:
        if self.provider not in PROVIDERS:
            raise ValueError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")
        self.repair.validate()
        self.corruption.validate()


def _coerce(value, hint, context: str):
    if hint is bool:
        if not isinstance(value, bool):
            raise ValueError(f"{context}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{context}: expected an integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{context}: expected an integer, got {value!r}")
        return int(value)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{context}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ValueError(f"{context}: expected a string, got {value!r}")
        return value
    if hint == tuple[float, float, float]:
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            raise ValueError(f"{context}: expected 3 numbers, got {value!r}")
        return tuple(_coerce(v, float, context) for v in value)
    raise ValueError(f"{context}: unsupported config field type {hint}")


def _parse_flat(cls, data: dict, context: str):
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{context}: unknown key(s) {', '.join(unknown)}")
    kwargs = {name: _coerce(value, hints[name], f"{context}.{name}")
              for name, value in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"config: unknown key(s) {', '.join(unknown)}")
    data = dict(data)
    repair_data = data.pop("repair", {})
    corruption_data = data.pop("corruption", {})
    if not isinstance(repair_data, dict):
        raise ValueError("config.repair must be a JSON object")
    if not isinstance(corruption_data, dict):
        raise ValueError("config.corruption must be a JSON object")
    cfg = _parse_flat(PipelineConfig, data, "config")
    cfg.repair = _parse_flat(RepairConfig, repair_data, "config.repair")
    cfg.corruption = _parse_flat(CorruptionConfig, corruption_data, "config.corruption")
    cfg.validate()
    return cfg


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = {}
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if f.name in ("repair", "corruption"):
            sub = {g.name: getattr(value, g.name) for g in fields(value)}
            if "background" in sub:
                sub["background"] = list(sub["background"])
            out[f.name] = sub
        else:
            out[f.name] = value
    return out


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return config_from_dict(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def default_config() -> PipelineConfig:
    return PipelineConfig()
