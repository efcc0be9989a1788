"""Generative prediction fused with radius-restricted retrieval and reranking."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .density import LocalizabilityScore, localizability
from .errors import ConfigError, DomainError, EmptyRegionError
from .evaluation import EvalReport, evaluate
from .flowmatch import predict_locations_batch
from .retrieval import (
    EmbeddingRecord, Gallery, ProjectionHead, RankedList, region_indices, rerank, retrieve_topk,
)
from .schedule import Schedule
from .sphere import GeoCoord, uniform_batch, xyz_to_geo

UNBOUNDED = math.inf
FALLBACKS = ("generative", "global")


@dataclass(frozen=True)
class ProbGLCConfig:
    r_km: float = 50.0
    rfm_steps: int = 250
    draws: int = 32
    top_k: int = 10
    n_anchors: int = 3
    alpha: float = 0.8
    localizability_samples: int = 0
    localizability_steps: int = 200
    fallback: str = "generative"
    condition: str = "raw"
    seed: int = 0

    def __post_init__(self):
        if not (self.r_km > 0):
            raise ConfigError(f"r_km must be positive (or inf), got {self.r_km}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.fallback not in FALLBACKS:
            raise ConfigError(f"fallback must be one of {FALLBACKS}")
        if self.condition not in ("raw", "projected"):
            raise ConfigError("condition must be 'raw' or 'projected'")
        for name in ("rfm_steps", "draws", "top_k", "n_anchors"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.r_km)


@dataclass
class GeolocationResult:
    query_id: str
    final: GeoCoord
    generative_center: GeoCoord
    retrieval_list: RankedList
    localizability: LocalizabilityScore | None = None
    used_fallback: bool = False
    n_candidates: int = 0


def query_rng(seed: int, query_id: str) -> np.random.Generator:
    """Per-query stream, independent of batch composition and order."""
    return np.random.default_rng([seed, zlib.crc32(query_id.encode("utf-8"))])


def condition_vectors(queries, heads: ProjectionHead, cfg: ProbGLCConfig) -> np.ndarray:
    c = np.stack([q.vector for q in queries])
    return heads.project(c, "vgi") if cfg.condition == "projected" else c


def _check_net(net, conds):
    if conds.shape[1] != net.cond_dim:
        raise ConfigError(f"condition dim {conds.shape[1]} does not match network cond_dim {net.cond_dim}")


def generative_centers(queries, net, heads, cfg: ProbGLCConfig, s: Schedule = Schedule()) -> list[GeoCoord]:
    queries = list(queries)
    for q in queries:
        if q.modality != "vgi":
            raise DomainError(f"query {q.id} is not VGI")
    conds = condition_vectors(queries, heads, cfg)
    _check_net(net, conds)
    x1 = np.stack([uniform_batch(query_rng(cfg.seed, q.id), cfg.draws) for q in queries])
    centers = predict_locations_batch(net, conds, cfg.rfm_steps, cfg.draws, x1, s)
    return xyz_to_geo(centers)


def _retrieve(query, gallery, heads, cfg, center):
    region = (center, cfg.r_km) if cfg.bounded else None
    base = retrieve_topk(query, gallery, heads, cfg.top_k, region)
    return rerank(query, base, gallery, heads, min(cfg.n_anchors, len(base)), cfg.alpha)


def fuse(query: EmbeddingRecord, center: GeoCoord, gallery: Gallery, heads: ProjectionHead,
         cfg: ProbGLCConfig) -> GeolocationResult:
    """Retrieval and reranking inside the ball around an already computed generative center."""
    if query.vector.shape[0] != heads.dims[0]:
        raise ConfigError(f"query {query.id}: dim {query.vector.shape[0]} != head input {heads.dims[0]}")
    try:
        ranked = _retrieve(query, gallery, heads, cfg, center)
    except EmptyRegionError:
        if cfg.fallback == "generative":
            return GeolocationResult(query.id, center, center, RankedList(), used_fallback=True)
        ranked = _retrieve(query, gallery, heads, replace(cfg, r_km=UNBOUNDED), center)
        return GeolocationResult(query.id, ranked.top.geo, center, ranked, used_fallback=True)
    n_cand = len(gallery) if not cfg.bounded else int(region_indices(gallery, center, cfg.r_km).size)
    return GeolocationResult(query.id, ranked.top.geo, center, ranked, n_candidates=n_cand)


def _attach_localizability(results, queries, net, heads, cfg, s):
    conds = condition_vectors(queries, heads, cfg)
    for res, q, c in zip(results, queries, conds):
        res.localizability = localizability(
            net, c, cfg.localizability_samples, cfg.localizability_steps,
            query_rng(cfg.seed + 1, q.id), s, sample_steps=cfg.rfm_steps)


def geolocate_batch(queries, gallery: Gallery, net, heads: ProjectionHead, cfg: ProbGLCConfig,
                    s: Schedule = Schedule(), centers=None) -> list[GeolocationResult]:
    queries = list(queries)
    if centers is None:
        centers = generative_centers(queries, net, heads, cfg, s)
    results = [fuse(q, c, gallery, heads, cfg) for q, c in zip(queries, centers)]
    if cfg.localizability_samples:
        _attach_localizability(results, queries, net, heads, cfg, s)
    return results


def geolocate(query: EmbeddingRecord, gallery: Gallery, net, heads: ProjectionHead,
              cfg: ProbGLCConfig, s: Schedule = Schedule()) -> GeolocationResult:
    return geolocate_batch([query], gallery, net, heads, cfg, s)[0]


def global_retrieval(queries, gallery, heads, k: int = 1, rerank_cfg: ProbGLCConfig | None = None):
    """Retrieval-only baseline over the whole gallery; optional reranking."""
    out = []
    for q in queries:
        base = retrieve_topk(q, gallery, heads, k if rerank_cfg is None else rerank_cfg.top_k)
        if rerank_cfg is not None:
            base = rerank(q, base, gallery, heads, min(rerank_cfg.n_anchors, len(base)), rerank_cfg.alpha)
        out.append(base)
    return out


@dataclass
class SweepRow:
    r_km: float
    report: EvalReport
    mean_candidates: float
    n_fallback: int
    results: list


def threshold_sweep(queries, gallery: Gallery, net, heads: ProjectionHead, cfg: ProbGLCConfig,
                    radii, s: Schedule = Schedule(), radii_eval=None) -> list[SweepRow]:
    """One generative pass per query, then retrieval at every radius."""
    radii = [float(r) for r in radii]
    if not radii or any(not r > 0 for r in radii):
        raise DomainError("radii must be non-empty and positive")
    queries = list(queries)
    centers = generative_centers(queries, net, heads, cfg, s)
    truths = [q.geo for q in queries]
    rows = []
    for r in radii:
        rcfg = replace(cfg, r_km=r, localizability_samples=0)
        res = geolocate_batch(queries, gallery, net, heads, rcfg, s, centers=centers)
        kw = {} if radii_eval is None else {"radii": radii_eval}
        rep = evaluate([x.final for x in res], truths, split=f"r={r:g}km", **kw)
        rows.append(SweepRow(r, rep, float(np.mean([x.n_candidates for x in res])),
                             sum(x.used_fallback for x in res), res))
    return rows
