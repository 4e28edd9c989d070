"""Experiment configuration: dataclasses plus a flat key = value file format.

Every field has a default, keys are dotted paths (``net.epochs = 100``), and
values are typed (bool/int/float/string). Serialization sorts keys and uses
repr for floats, so parse -> format is a fixed point.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .network import PRESETS, NetParams

DATA_DIR_ENV = "DAMCL_DATA_DIR"


class ConfigError(ValueError):
    """Malformed configuration file, key, or value."""


@dataclass
class DatasetConfig:
    kind: str = "permute"  # permute | rotate | identity
    task_count: int = 5
    items_per_task: int = 2000
    threshold: int = 127
    master_seed: int = 1234
    source: str = "mnist"  # mnist | synthetic
    data_dir: str = "data"
    synthetic_size: int = 12000
    rotation_step: float = 15.0

    def resolved_data_dir(self) -> Path:
        return Path(os.environ.get(DATA_DIR_ENV, self.data_dir))


@dataclass
class MethodConfig:
    name: str = "vanilla"
    proportion: float = 0.0
    reg_strength: float = 0.0
    si_damping: float = 1e-3
    si_raw_sign: bool = False
    fisher_sample_cap: int = 0  # 0 = use the full train split
    gradient_stride: int = 1
    mas_variant: str = "per-output"
    max_relax_sweeps: int = 100

    def hyperparameter(self) -> float | None:
        """The method's swept hyperparameter, for reporting."""
        if self.name in ("rehearsal", "pseudorehearsal", "gem", "agem"):
            return self.proportion
        if self.name in ("l2", "ewc", "mas", "si"):
            return self.reg_strength
        return None


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    net: NetParams = field(default_factory=NetParams)
    method: MethodConfig = field(default_factory=MethodConfig)
    eval_every_epochs: int = 0  # 0 = evaluate at task ends only
    trial_seed: int = 1
    output_dir: str = "results"


_SECTIONS = {
    "dataset": ("dataset", DatasetConfig),
    "net": ("net", NetParams),
    "method": ("method", MethodConfig),
}

_TOP_LEVEL = {
    "eval.every_epochs": "eval_every_epochs",
    "run.trial_seed": "trial_seed",
    "run.output_dir": "output_dir",
}


def _field_types(cls) -> dict[str, type]:
    return {f.name: type(f.default) for f in dataclasses.fields(cls)}


def config_keys() -> dict[str, type]:
    """Flat key -> value type for every configurable field."""
    keys = {}
    for prefix, (_, cls) in _SECTIONS.items():
        for name, typ in _field_types(cls).items():
            keys[f"{prefix}.{name}"] = typ
    defaults = ExperimentConfig()
    for key, attr in _TOP_LEVEL.items():
        keys[key] = type(getattr(defaults, attr))
    return keys


def config_to_flat(cfg: ExperimentConfig) -> dict:
    flat = {}
    for prefix, (attr, _) in _SECTIONS.items():
        section = getattr(cfg, attr)
        for f in dataclasses.fields(section):
            flat[f"{prefix}.{f.name}"] = getattr(section, f.name)
    for key, attr in _TOP_LEVEL.items():
        flat[key] = getattr(cfg, attr)
    return flat


def _coerce(key: str, value, want: type):
    if want is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a bool, got {value!r}")
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an int, got {value!r}")
        return value
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported value type")


def flat_to_config(flat: dict) -> ExperimentConfig:
    """Build a config from a flat mapping, validating keys and types."""
    known = config_keys()
    sections = {attr: {} for attr, _ in _SECTIONS.values()}
    top = {}
    for key, value in flat.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        value = _coerce(key, value, known[key])
        if key in _TOP_LEVEL:
            top[_TOP_LEVEL[key]] = value
        else:
            prefix, name = key.split(".", 1)
            sections[_SECTIONS[prefix][0]][name] = value
    try:
        cfg = ExperimentConfig(
            dataset=DatasetConfig(**sections["dataset"]),
            net=NetParams(**sections["net"]),
            method=MethodConfig(**sections["method"]),
            **top,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# text format


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def format_config(cfg: ExperimentConfig) -> str:
    flat = config_to_flat(cfg)
    lines = [f"{key} = {_format_value(flat[key])}" for key in sorted(flat)]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> ExperimentConfig:
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = _parse_value(value)
    return flat_to_config(flat)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(format_config(cfg))


def apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    """Apply `key=value` strings (CLI --set) on top of a config."""
    flat = config_to_flat(cfg)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, value = (part.strip() for part in pair.split("=", 1))
        flat[key] = _parse_value(value)
    return flat_to_config(flat)


def apply_net_preset(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    flat = config_to_flat(cfg)
    for key, value in PRESETS[name].items():
        flat[f"net.{key}"] = value
    return flat_to_config(flat)
