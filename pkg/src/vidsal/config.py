"""Flat key = value configuration with the experiment defaults baked in.

An empty file yields the full default parameter set; unknown keys are
rejected. Lists are comma-separated.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError, InvalidArgument


@dataclass(frozen=True)
class Config:
    scales: tuple[int, ...] = (100, 200, 300, 400)
    compactness: float = 10.0
    link_threshold: float = 0.3
    sigma: float = 2.0
    k_default: int = 16
    theta_u: float = 50.0
    theta_bs: float = 0.05
    theta_bt: float = 1000.0
    block_length: int = 16
    overlap: float = 0.5
    beta_norm: str = "sum"  # sum | mean
    provider: str = "rgb"  # rgb | file
    patch: int = 7
    search: int = 8
    seed: int = 0
    train_iterations: int = 300_000
    train_batch_size: int = 500
    train_momentum: float = 0.9
    train_weight_decay: float = 0.005
    train_base_lr: float = 0.001
    train_lr_drop_every: int = 50_000
    train_dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if not self.scales or any(s < 1 for s in self.scales):
            raise ConfigError("scales must be positive integers")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigError("scales must be strictly increasing")
        if self.compactness <= 0:
            raise ConfigError("compactness must be > 0")
        if not 0.0 < self.link_threshold <= 1.0:
            raise ConfigError("link_threshold must lie in (0, 1]")
        if self.sigma <= 0:
            raise ConfigError("sigma must be > 0")
        if self.k_default < 0 or self.k_default % 2:
            raise ConfigError("k_default must be an even integer >= 0")
        if min(self.theta_u, self.theta_bs, self.theta_bt) < 0:
            raise ConfigError("theta parameters must be >= 0")
        if self.block_length < 1:
            raise ConfigError("block_length must be >= 1")
        if not 0.0 <= self.overlap < 1.0:
            raise ConfigError("overlap must lie in [0, 1)")
        if self.beta_norm not in ("sum", "mean"):
            raise ConfigError("beta_norm must be 'sum' or 'mean'")
        if self.provider not in ("rgb", "file"):
            raise ConfigError("provider must be 'rgb' or 'file'")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ConfigError("patch must be odd and >= 1")
        if self.search < 0:
            raise ConfigError("search must be >= 0")
        if min(self.train_iterations, self.train_batch_size,
               self.train_lr_drop_every) < 1:
            raise ConfigError("training iteration/batch values must be >= 1")
        if self.train_base_lr <= 0:
            raise ConfigError("train_base_lr must be > 0")
        if self.train_momentum < 0 or self.train_weight_decay < 0:
            raise ConfigError("momentum and weight decay must be >= 0")
        if not 0.0 <= self.train_dropout < 1.0:
            raise ConfigError("train_dropout must lie in [0, 1)")


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype == "tuple[int, ...]":
            return tuple(int(p.strip()) for p in raw.split(",") if p.strip())
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Parse the config file (may be absent or empty) and apply overrides."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in _FIELD_TYPES:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _parse_value(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config override {key!r}")
        values[key] = value
    try:
        return Config(**values)
    except (InvalidArgument, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
