"""Geodesic accuracy metrics and deterministic train/test splits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, LengthMismatchError
from .sphere import distance_km, geo_to_xyz

DEFAULT_RADII = (1.0, 25.0, 50.0, 200.0)
TEST_FRACTIONS = (0.2, 0.3)


@dataclass
class EvalReport:
    acc: dict
    mean_km: float
    median_km: float
    n: int
    split: str = ""
    distances: list | None = field(default=None, repr=False)

    def to_dict(self, with_distances: bool = False) -> dict:
        out = {f"acc@{_fmt(r)}km": v for r, v in sorted(self.acc.items())}
        out.update(mean_km=self.mean_km, median_km=self.median_km, n=self.n, split=self.split)
        if with_distances and self.distances is not None:
            out["distances_km"] = list(self.distances)
        return out


def _fmt(r):
    return f"{r:g}"


def pair_distances_km(preds, truths) -> np.ndarray:
    if len(preds) != len(truths):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(truths)} truths")
    if len(preds) == 0:
        raise LengthMismatchError("need at least one prediction")
    return distance_km(geo_to_xyz(preds), geo_to_xyz(truths))


def acc_at_k(preds, truths, radius_km: float) -> float:
    d = pair_distances_km(preds, truths)
    return float(np.mean(d <= radius_km))


def distance_stats(preds, truths) -> tuple[float, float]:
    d = pair_distances_km(preds, truths)
    return float(np.mean(d)), float(np.median(d))


def report_from_distances(d, radii=DEFAULT_RADII, split: str = "", keep: bool = True) -> EvalReport:
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        raise LengthMismatchError("no distances")
    acc = {float(r): float(np.mean(d <= r)) for r in radii}
    return EvalReport(acc, float(np.mean(d)), float(np.median(d)), int(d.size), split,
                      d.tolist() if keep else None)


def evaluate(preds, truths, radii=DEFAULT_RADII, split: str = "", keep: bool = True) -> EvalReport:
    return report_from_distances(pair_distances_km(preds, truths), radii, split, keep)


def split(ids, test_fraction: float, seed: int, allow_any: bool = False):
    """Seeded partition of ``ids`` into (train, test) with floor(n * fraction) test items."""
    ids = sorted(ids)
    if not ids:
        raise DomainError("cannot split an empty dataset")
    if len(set(ids)) != len(ids):
        raise DomainError("ids must be unique")
    if not allow_any and test_fraction not in TEST_FRACTIONS:
        raise DomainError(f"test fraction must be one of {TEST_FRACTIONS} (got {test_fraction})")
    if not 0.0 <= test_fraction <= 1.0:
        raise DomainError("test fraction outside [0, 1]")
    perm = np.random.default_rng(seed).permutation(len(ids))
    n_test = int(np.floor(len(ids) * test_fraction + 1e-9))
    test = [ids[i] for i in sorted(perm[:n_test])]
    train = [ids[i] for i in sorted(perm[n_test:])]
    return train, test
