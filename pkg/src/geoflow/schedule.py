"""Noise schedules beta(t) on [0, 1] with beta(0) = 0 and beta(1) = 1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

KINDS = ("linear", "cosine")


@dataclass(frozen=True)
class Schedule:
    kind: str = "linear"
    t_clamp_min: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown schedule {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.t_clamp_min < 1.0:
            raise DomainError("t_clamp_min must lie in (0, 1)")

    def beta(self, t):
        return beta(self, t)

    def beta_dot(self, t):
        return beta_dot(self, t)

    def rate(self, t):
        """beta_dot(t) / beta(t) with t clamped to at least ``t_clamp_min``."""
        tc = np.maximum(np.asarray(t, dtype=np.float64), self.t_clamp_min)
        return beta_dot(self, t) / beta(self, tc)


def _check(t):
    arr = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("schedule time outside [0, 1]")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def beta(s: Schedule, t):
    t = _check(t)
    if s.kind == "linear":
        return _out(t.copy())
    return _out(np.sin(0.5 * np.pi * t) ** 2)


def beta_dot(s: Schedule, t):
    t = _check(t)
    if s.kind == "linear":
        return _out(np.ones_like(t))
    return _out(0.5 * np.pi * np.sin(np.pi * t))
