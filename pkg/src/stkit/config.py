"""Run configuration: built-in defaults < YAML file < command-line flags."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class RunConfig:
    """Every knob of a run. ``None`` means "use the task preset"."""

    task: str = "st"
    seed: int = 0
    output_dir: str = "run"
    # data
    train_records: str | None = None
    dev_records: str | None = None
    bpe_codes: str | None = None
    vocab: str | None = None
    max_source_len: int | None = None
    max_target_len: int | None = None
    batch_budget: int | None = None
    # model
    num_encoder_layers: int | None = None
    num_decoder_layers: int | None = None
    d_model: int = 256
    ffn_dim: int = 2048
    num_heads: int = 4
    dropout: float = 0.1
    frontend_channels: int = 256
    max_positions: int = 2048
    # schedule
    warmup_steps: int | None = None
    init_scale: float | None = None
    end_scale: float | None = None
    decay_at: int | None = None
    decay_steps: int | None = None
    # training
    steps: int = 1000
    label_smoothing: float = 0.1
    save_interval: int = 1000
    keep_checkpoints: int = 10
    eval_interval: int = 0
    spec_augment: bool = True
    init_checkpoint: str | None = None
    init_filter: str | None = None
    # decoding
    beam: int = 4
    max_len: int | None = None

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, allow_unicode=True)
        return path


KEYS = {f.name: f for f in fields(RunConfig)}


def _check_keys(mapping, origin):
    for key in mapping:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r} in {origin}")


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} does not parse: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping of keys to values")
    _check_keys(data, path)
    return data


def resolve_config(defaults=None, file=None, flags=None) -> RunConfig:
    """Layer ``flags`` over the config ``file`` over ``defaults``.

    Flags whose value is ``None`` count as not given. Unknown keys in any
    layer raise ConfigError naming the key.
    """
    merged = RunConfig().to_dict()
    for origin, layer in (("defaults", defaults or {}),
                          (str(file), load_config_file(file) if file else {}),
                          ("flags", {k: v for k, v in (flags or {}).items() if v is not None})):
        _check_keys(layer, origin)
        merged.update(layer)
    cfg = RunConfig(**merged)
    if cfg.task not in ("asr", "mt", "st"):
        raise ConfigError(f"task must be one of asr, mt, st; got {cfg.task!r}")
    return cfg
