"""Desk-scale cross-view world: clustered locations with paired VGI/RSI embeddings.

Each cluster k has a mode on the sphere and a latent vector z_k. Pair i in
cluster k gets a location drawn vMF(mode_k, kappa_k) and a pair latent u_i;
its VGI and RSI embeddings are ``z_k + u_i`` plus independent noise per
modality. Optional distractors are RSI-only records placed in a far cluster
whose embedding copies a real pair's content with less noise than the true
partner, so global nearest-neighbour search is drawn to the wrong continent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .retrieval import EmbeddingRecord
from .sphere import GeoCoord, latlon_to_xyz, vmf_batch, xyz_to_geo

DEFAULT_MODES = ((40.0, -100.0), (-15.0, -60.0), (50.0, 10.0), (0.0, 20.0),
                 (30.0, 80.0), (-25.0, 135.0), (60.0, 100.0), (35.0, 140.0))


def fibonacci_modes(n: int):
    i = np.arange(n) + 0.5
    lat = np.degrees(np.arcsin(1.0 - 2.0 * i / n))
    lon = (np.degrees(np.pi * (1.0 + 5.0 ** 0.5) * i) + 180.0) % 360.0 - 180.0
    return tuple(zip(lat.tolist(), lon.tolist()))


@dataclass
class SyntheticWorldSpec:
    n_clusters: int = 8
    modes: tuple = ()
    kappa: float | tuple = 200.0
    n_pairs: int = 500              # per cluster
    n_distractors: int = 0          # per cluster
    dim: int = 32
    cluster_scale: float = 3.0
    pair_scale: float = 1.0
    noise_vgi: float = 0.3
    noise_rsi: float = 0.3
    noise_distractor: float = 0.1
    onehot: bool = False            # embeddings are the one-hot cluster indicator
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if not self.modes:
            self.modes = DEFAULT_MODES if self.n_clusters == 8 else fibonacci_modes(self.n_clusters)
        self.modes = tuple((float(a), float(b)) for a, b in self.modes)
        if len(self.modes) != self.n_clusters:
            raise ConfigError(f"{len(self.modes)} modes given for {self.n_clusters} clusters")
        for lat, _ in self.modes:
            if not -90.0 <= lat <= 90.0:
                raise ConfigError(f"mode latitude {lat} outside [-90, 90]")
        ks = self.kappas
        if any(not (math.isfinite(k) and k >= 0) for k in ks):
            raise ConfigError("kappa must be finite and >= 0")
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be >= 1")
        if self.n_distractors < 0:
            raise ConfigError("n_distractors must be >= 0")
        if self.n_distractors > self.n_pairs:
            raise ConfigError("n_distractors cannot exceed n_pairs")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if min(self.noise_vgi, self.noise_rsi, self.noise_distractor, self.cluster_scale, self.pair_scale) < 0:
            raise ConfigError("scales and noise levels must be >= 0")

    @property
    def kappas(self) -> tuple:
        k = self.kappa
        if isinstance(k, (int, float)):
            return (float(k),) * self.n_clusters
        k = tuple(float(v) for v in k)
        if len(k) != self.n_clusters:
            raise ConfigError(f"{len(k)} kappas given for {self.n_clusters} clusters")
        return k

    @property
    def embedding_dim(self) -> int:
        return self.n_clusters if self.onehot else self.dim

    def mode_xyz(self) -> np.ndarray:
        lat, lon = zip(*self.modes)
        return latlon_to_xyz(np.array(lat), np.array(lon))


def pair_id(k: int, i: int) -> str:
    return f"c{k}-{i:05d}"


def distractor_id(k: int, i: int) -> str:
    # k is the cluster whose content is copied
    return f"d{k}-{i:05d}"


def cluster_of(rid: str) -> int:
    return int(rid[1:].split("-", 1)[0])


def far_cluster(spec: SyntheticWorldSpec, k: int) -> int:
    """Cluster whose mode is farthest from cluster k's mode."""
    m = spec.mode_xyz()
    return int(np.argmin(m @ m[k]))


def generate_synthetic(spec: SyntheticWorldSpec, seed: int = 0):
    """Returns (vgi records, rsi records, truth map id -> GeoCoord)."""
    rng = np.random.default_rng(seed)
    modes = spec.mode_xyz()
    d = spec.embedding_dim
    z = spec.cluster_scale * rng.standard_normal((spec.n_clusters, d))
    vgi, rsi, truth = [], [], {}
    for k, kappa in enumerate(spec.kappas):
        xyz = vmf_batch(rng, modes[k], kappa, spec.n_pairs)
        geos = xyz_to_geo(xyz)
        if spec.onehot:
            content = np.tile(np.eye(d)[k], (spec.n_pairs, 1))
        else:
            content = z[k] + spec.pair_scale * rng.standard_normal((spec.n_pairs, d))
        ev = content + spec.noise_vgi * rng.standard_normal((spec.n_pairs, d))
        er = content + spec.noise_rsi * rng.standard_normal((spec.n_pairs, d))
        for i in range(spec.n_pairs):
            rid = pair_id(k, i)
            vgi.append(EmbeddingRecord(rid, geos[i], "vgi", ev[i]))
            rsi.append(EmbeddingRecord(rid, geos[i], "rsi", er[i]))
            truth[rid] = geos[i]
        if spec.n_distractors:
            j = far_cluster(spec, k)
            dxyz = vmf_batch(rng, modes[j], spec.kappas[j], spec.n_distractors)
            dvec = content[:spec.n_distractors] + spec.noise_distractor * rng.standard_normal((spec.n_distractors, d))
            for i, g in enumerate(xyz_to_geo(dxyz)):
                rsi.append(EmbeddingRecord(distractor_id(k, i), g, "rsi", dvec[i]))
    return vgi, rsi, truth


def mode_of(spec: SyntheticWorldSpec, rid: str) -> GeoCoord:
    lat, lon = spec.modes[cluster_of(rid)]
    return GeoCoord(lat, lon)
