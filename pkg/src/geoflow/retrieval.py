"""Cross-view retrieval over precomputed embeddings.

Per-modality affine heads map VGI (ground) and RSI (satellite) embeddings into a
shared space, trained with a symmetric InfoNCE loss. Retrieval is an exact cosine
scan, optionally restricted to a geodesic ball, followed by anchor reranking.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError, DomainError, DuplicateIdError, EmptyRegionError, NonFiniteError,
    ParseError, ZeroVectorError,
)
from .fieldnet import OptimizerState, adam_update
from .sphere import EARTH_RADIUS_KM, GeoCoord, distance_km, latlon_to_xyz

log = logging.getLogger(__name__)

MODALITIES = ("vgi", "rsi")
# BLAS may round identical rows differently; scores this close rank as ties
TIE_EPS = 1e-12


@dataclass
class EmbeddingRecord:
    id: str
    geo: GeoCoord
    modality: str
    vector: np.ndarray

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DomainError(f"unknown modality {self.modality!r}")
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1 or self.vector.size == 0:
            raise DimensionError(f"record {self.id}: vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(self.vector)):
            raise NonFiniteError(f"record {self.id}: non-finite embedding")


class Gallery:
    """Immutable set of RSI records with cached coordinate and embedding matrices."""

    def __init__(self, records):
        records = list(records)
        if not records:
            raise DomainError("gallery is empty")
        seen = set()
        for r in records:
            if r.modality != "rsi":
                raise DomainError(f"gallery record {r.id} is not RSI")
            if r.id in seen:
                raise DuplicateIdError(f"duplicate gallery id {r.id!r}")
            seen.add(r.id)
        dims = {r.vector.shape[0] for r in records}
        if len(dims) != 1:
            raise DimensionError(f"inconsistent gallery embedding dims {sorted(dims)}")
        self.records = records
        self.ids = np.array([r.id for r in records])
        self.index = {r.id: i for i, r in enumerate(records)}
        self.vectors = np.stack([r.vector for r in records])
        self.xyz = latlon_to_xyz(np.array([r.geo.lat_deg for r in records]),
                                 np.array([r.geo.lon_deg for r in records]))
        self._cache = {}

    def __len__(self):
        return len(self.records)

    def projected(self, heads: "ProjectionHead") -> np.ndarray:
        """Unit-normalized projected embeddings, cached per head object."""
        key = id(heads)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not heads:
            hit = (heads, _unit_rows(heads.project(self.vectors, "rsi")))
            self._cache = {key: hit}
        return hit[1]


@dataclass
class ProjectionHead:
    w_vgi: np.ndarray
    b_vgi: np.ndarray
    w_rsi: np.ndarray
    b_rsi: np.ndarray
    tau: float = 0.07
    loss_curve: list = field(default_factory=list)

    def __post_init__(self):
        if self.w_vgi.shape[1] != self.w_rsi.shape[1]:
            raise DimensionError("VGI and RSI heads must share an output dimension")

    @classmethod
    def init(cls, d_vgi: int, d_rsi: int, p: int = 128, tau: float = 0.07, seed: int = 0):
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((d_vgi, p)) / np.sqrt(d_vgi), np.zeros(p),
                   rng.standard_normal((d_rsi, p)) / np.sqrt(d_rsi), np.zeros(p), tau)

    @classmethod
    def identity(cls, d: int, tau: float = 0.07):
        return cls(np.eye(d), np.zeros(d), np.eye(d), np.zeros(d), tau)

    @property
    def dims(self):
        return self.w_vgi.shape[0], self.w_rsi.shape[0], self.w_vgi.shape[1]

    def params(self):
        return [self.w_vgi, self.b_vgi, self.w_rsi, self.b_rsi]

    def project(self, x, modality: str) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        w, b = (self.w_vgi, self.b_vgi) if modality == "vgi" else (self.w_rsi, self.b_rsi)
        if x.shape[-1] != w.shape[0]:
            raise DimensionError(f"{modality} embedding dim {x.shape[-1]} != head input {w.shape[0]}")
        return x @ w + b

    def save(self, path):
        np.savez(path, w_vgi=self.w_vgi, b_vgi=self.b_vgi, w_rsi=self.w_rsi, b_rsi=self.b_rsi,
                 meta=np.array(json.dumps({"tau": self.tau, "loss_curve": self.loss_curve})))

    @classmethod
    def load(cls, path):
        try:
            with np.load(path, allow_pickle=False) as z:
                meta = json.loads(str(z["meta"]))
                return cls(z["w_vgi"], z["b_vgi"], z["w_rsi"], z["b_rsi"], meta["tau"],
                           meta.get("loss_curve", []))
        except (OSError, KeyError, ValueError) as exc:
            raise ParseError(f"{path}: not a projection-head file ({exc})") from exc


@dataclass
class RankedItem:
    id: str
    score: float
    geo: GeoCoord


class RankedList(list):
    """List of :class:`RankedItem`, descending score, ties broken by ascending id."""

    @property
    def ids(self):
        return [it.id for it in self]

    @property
    def top(self) -> RankedItem:
        return self[0]


def _unit_rows(z):
    n = np.linalg.norm(z, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ZeroVectorError("zero embedding after projection")
    return z / n


def cosine_similarity(q, x) -> float:
    q = np.asarray(q, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if q.shape != x.shape:
        raise DimensionError(f"dimension mismatch {q.shape} vs {x.shape}")
    nq, nx = np.linalg.norm(q), np.linalg.norm(x)
    if nq == 0 or nx == 0:
        raise ZeroVectorError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(q, x) / (nq * nx), -1.0, 1.0))


def _log_softmax(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return a - m - np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))


def infonce_loss_and_grads(heads: ProjectionHead, vgi, rsi, tau: float | None = None):
    """Symmetric InfoNCE over in-batch negatives; returns (loss, grads per head param)."""
    tau = heads.tau if tau is None else tau
    vgi = np.asarray(vgi, dtype=np.float64)
    rsi = np.asarray(rsi, dtype=np.float64)
    n = vgi.shape[0]
    if n < 2 or rsi.shape[0] != n:
        raise DomainError("InfoNCE needs at least 2 aligned pairs")
    zv, zr = heads.project(vgi, "vgi"), heads.project(rsi, "rsi")
    nv = np.linalg.norm(zv, axis=1, keepdims=True)
    nr = np.linalg.norm(zr, axis=1, keepdims=True)
    if np.any(nv == 0) or np.any(nr == 0):
        raise ZeroVectorError("zero embedding after projection")
    uv, ur = zv / nv, zr / nr
    logits = (uv @ ur.T) / tau
    lr_ = _log_softmax(logits, 1)
    lc_ = _log_softmax(logits, 0)
    diag = np.arange(n)
    loss = float(-0.5 * (lr_[diag, diag].mean() + lc_[diag, diag].mean()))
    if not np.isfinite(loss):
        raise NonFiniteError("InfoNCE loss is not finite")
    eye = np.eye(n)
    g_logits = 0.5 * ((np.exp(lr_) - eye) + (np.exp(lc_) - eye)) / n
    g_s = g_logits / tau
    g_uv = g_s @ ur
    g_ur = g_s.T @ uv
    g_zv = (g_uv - uv * np.sum(uv * g_uv, axis=1, keepdims=True)) / nv
    g_zr = (g_ur - ur * np.sum(ur * g_ur, axis=1, keepdims=True)) / nr
    grads = [vgi.T @ g_zv, g_zv.sum(0), rsi.T @ g_zr, g_zr.sum(0)]
    return loss, grads


def infonce_loss(heads: ProjectionHead, vgi, rsi, tau: float | None = None) -> float:
    return infonce_loss_and_grads(heads, vgi, rsi, tau)[0]


def train_heads(vgi, rsi, p: int = 128, tau: float = 0.07, steps: int = 2000, batch_size: int = 256,
                lr: float = 1e-3, seed: int = 0, log_every: int = 0) -> ProjectionHead:
    """Fit projection heads on aligned pair matrices (row i of each is a positive pair)."""
    vgi = np.asarray(vgi, dtype=np.float64)
    rsi = np.asarray(rsi, dtype=np.float64)
    n = vgi.shape[0]
    if n < 2 or rsi.shape[0] != n:
        raise DomainError("need at least 2 aligned pairs")
    heads = ProjectionHead.init(vgi.shape[1], rsi.shape[1], p, tau, seed)
    rng = np.random.default_rng(seed + 1)
    state = OptimizerState.for_params(heads.params(), lr=lr)
    bs = min(batch_size, n)
    order, pos = rng.permutation(n), 0
    for step in range(steps):
        if pos + bs > n:
            order, pos = rng.permutation(n), 0
        idx = order[pos:pos + bs]
        pos += bs
        loss, grads = infonce_loss_and_grads(heads, vgi[idx], rsi[idx])
        adam_update(heads.params(), state, grads)
        heads.loss_curve.append(loss)
        if log_every and (step + 1) % log_every == 0:
            log.info("heads step %d loss %.4f", step + 1, loss)
    return heads


def _query_unit(query: EmbeddingRecord, heads: ProjectionHead) -> np.ndarray:
    if query.modality != "vgi":
        raise DomainError(f"query {query.id} is not VGI")
    return _unit_rows(heads.project(query.vector[None], "vgi"))[0]


def _ranked(gallery: Gallery, idx, scores) -> RankedList:
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    group = np.concatenate([[0], np.cumsum(s[:-1] - s[1:] > TIE_EPS)])
    order = order[np.lexsort((gallery.ids[idx[order]], group))]
    tied = s[np.searchsorted(group, group)]      # each tie group reports its top score
    return RankedList(RankedItem(str(gallery.ids[idx[o]]), float(v), gallery.records[idx[o]].geo)
                      for o, v in zip(order, tied))


def region_indices(gallery: Gallery, center: GeoCoord | None, radius_km: float | None) -> np.ndarray:
    if center is None or radius_km is None or not np.isfinite(radius_km):
        return np.arange(len(gallery))
    c = latlon_to_xyz(center.lat_deg, center.lon_deg)
    return np.flatnonzero(distance_km(gallery.xyz, c) <= radius_km)


def retrieve_topk(query: EmbeddingRecord, gallery: Gallery, heads: ProjectionHead, k: int,
                  region: tuple[GeoCoord, float] | None = None) -> RankedList:
    if k < 1:
        raise DomainError("k must be >= 1")
    idx = region_indices(gallery, *(region or (None, None)))
    if idx.size == 0:
        raise EmptyRegionError("no gallery record inside the search region")
    scores = gallery.projected(heads)[idx] @ _query_unit(query, heads)
    return RankedList(_ranked(gallery, idx, scores)[:k])


def rerank(query: EmbeddingRecord, base: RankedList, gallery: Gallery, heads: ProjectionHead,
           n_anchors: int, alpha: float) -> RankedList:
    """Rescore candidates by alpha * S(q, x) + (1 - alpha) * mean_j S(anchor_j, x)."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha {alpha} outside [0, 1]")
    if not base:
        raise DomainError("cannot rerank an empty list")
    if not 1 <= n_anchors <= len(base):
        raise DomainError(f"n_anchors must lie in [1, {len(base)}]")
    idx = np.array([gallery.index[i] for i in base.ids])
    u = gallery.projected(heads)[idx]
    s_q = u @ _query_unit(query, heads)
    s_a = u[:n_anchors] @ u.T
    scores = alpha * s_q + (1.0 - alpha) / n_anchors * s_a.sum(axis=0)
    return _ranked(gallery, idx, scores)
