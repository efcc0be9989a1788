"""Flat ``key = value`` run configuration; command-line flags override file values."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import ConfigError
from .fieldnet import ACTIVATIONS, METHODS
from .schedule import KINDS


def _hidden(v) -> tuple:
    if isinstance(v, (tuple, list)):
        return tuple(int(h) for h in v)
    parts = [p for p in str(v).replace(" ", "").split(",") if p]
    return tuple(int(p) for p in parts)


def _radius(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "unbounded", "none"):
        return math.inf
    return float(v)


@dataclass(frozen=True)
class RunConfig:
    method: str = "rfm"
    schedule: str = "linear"
    t_clamp_min: float = 1e-4
    hidden: tuple = (256, 256, 256)
    time_dim: int = 64
    activation: str = "gelu"
    lr: float = 1e-3
    lr_final: float = 0.0          # 0 disables cosine decay
    batch_size: int = 256
    train_steps: int = 5000
    steps: int = 250               # sampler / ODE steps
    draws: int = 32
    density_steps: int = 200
    r_km: float = 50.0
    alpha: float = 0.8
    anchors: int = 3
    top_k: int = 10
    fallback: str = "generative"
    condition: str = "raw"
    localizability: int = 0
    proj_dim: int = 128
    tau: float = 0.07
    heads_steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.schedule not in KINDS:
            raise ConfigError(f"schedule must be one of {KINDS}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must list positive layer widths")
        if self.time_dim < 2 or self.time_dim % 2:
            raise ConfigError("time_dim must be even and >= 2")
        if not 0.0 < self.t_clamp_min < 1.0:
            raise ConfigError("t_clamp_min must lie in (0, 1)")
        if not (self.lr > 0 and self.lr_final >= 0 and self.tau > 0):
            raise ConfigError("lr and tau must be positive, lr_final non-negative")
        for name in ("batch_size", "train_steps", "steps", "draws", "density_steps", "anchors",
                     "top_k", "proj_dim", "heads_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.localizability < 0:
            raise ConfigError("localizability must be >= 0")
        if not self.r_km > 0:
            raise ConfigError("r_km must be positive or 'inf'")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.fallback not in ("generative", "global"):
            raise ConfigError("fallback must be 'generative' or 'global'")
        if self.condition not in ("raw", "projected"):
            raise ConfigError("condition must be 'raw' or 'projected'")


_CASTS = {"hidden": _hidden, "r_km": _radius}
KEYS = tuple(f.name for f in fields(RunConfig))


def _cast(name: str, value):
    f = next(f for f in fields(RunConfig) if f.name == name)
    cast = _CASTS.get(name) or {"int": int, "float": float, "str": str}.get(f.type, str)
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def coerce(values: dict) -> dict:
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return {k: _cast(k, v) for k, v in values.items()}


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[run]\n" + fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if len(parser.sections()) != 1:
        raise ConfigError(f"{path}: sections are not allowed in a flat config file")
    return coerce({k: v.strip().strip('"').strip("'") for k, v in parser["run"].items()})


def build(file_path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then non-None overrides; validated as a whole or not at all."""
    values = read_config_file(file_path) if file_path else {}
    values.update(coerce({k: v for k, v in (overrides or {}).items() if v is not None}))
    return RunConfig(**values)


def dump(cfg: RunConfig) -> str:
    lines = []
    for k, v in dataclasses.asdict(cfg).items():
        if k == "hidden":
            v = ",".join(str(h) for h in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
