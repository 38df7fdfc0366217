"""Model/training hyperparameters and the flat ``key = value`` config format."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .propagation import Mode

# search grids used by the reference experiments
LAMBDA_GRID = (0.0, 0.3, 0.5, 0.7, 1.0, 1.2, 1.5, 1.7, 2.0)
LEARNING_RATE_GRID = (0.001, 0.0005, 0.0001, 0.00005)
L2_GRID = tuple(10.0 ** -p for p in range(0, 8))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    k: int = 64
    num_layers: int = 3
    lam: float = 1.0
    alpha: float = 1e-4
    beta: float = 1e-4
    learning_rate: float = 0.001
    batch_size: int = 1024
    max_epochs: int = 400
    eval_every: int = 10
    patience: int = 5
    mode: str = "last_layer"
    reg_scope: str = "batch"
    seed: int = 0
    precision: str = "double"
    valid_fraction: float = 0.1

    def __post_init__(self):
        checks = [
            (self.k >= 1, "k must be >= 1"),
            (self.num_layers >= 0, "L must be >= 0"),
            (self.lam >= 0, "lambda must be >= 0"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.max_epochs >= 0, "max_epochs must be >= 0"),
            (self.eval_every >= 1, "eval_every must be >= 1"),
            (self.patience >= 0, "patience must be >= 0"),
            (self.mode in {m.value for m in Mode}, f"unknown mode {self.mode!r}"),
            (self.reg_scope in ("batch", "full"), f"unknown reg_scope {self.reg_scope!r}"),
            (self.precision in ("single", "double"), f"unknown precision {self.precision!r}"),
            (0.0 <= self.valid_fraction < 1.0, "valid_fraction must lie in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def set(self, key: str, value) -> "ModelConfig":
        """Return a copy with one field changed, by config-file key."""
        name = _ALIASES.get(key, key)
        fields = {f.name: f for f in dataclasses.fields(self)}
        if name not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        return self.replace(**{name: _coerce(fields[name].type, value, key)})


# file keys that differ from attribute names
_ALIASES = {"L": "num_layers", "lambda": "lam"}
_KEYS = {v: k for k, v in _ALIASES.items()}


def _coerce(type_name, value, key):
    if not isinstance(value, str):
        return value
    try:
        if type_name in ("int", int):
            return int(value)
        if type_name in ("float", float):
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def parse_config(text: str, base: ModelConfig | None = None) -> ModelConfig:
    cfg = base or ModelConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        try:
            cfg = cfg.set(key.strip(), value.strip())
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path: str | os.PathLike) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: ModelConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        lines.append(f"{_KEYS.get(f.name, f.name)} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"
