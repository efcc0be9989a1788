"""Exact log-density of an RFM model via the divergence-augmented ODE.

Sampling flows noise at t=1 to data at t=t_min by stepping along +phi as t
decreases, so in forward time the points move with velocity -phi. Integrating
that forward flow from a query point, the log-density picks up the divergence of
the forward velocity; we carry ``f(t) = int div(phi) dt`` and return
``log p_noise(x(1)) - f(1)``. Densities are per steradian of the unit sphere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonFiniteError
from .fieldnet import divergence
from .flowmatch import rfm_sample_batch
from .schedule import Schedule
from .sphere import exp_map_batch, latlon_to_xyz, normalize, project

LOG_UNIFORM = -math.log(4.0 * math.pi)


@dataclass
class DensityGrid:
    n_lat: int
    n_lon: int
    lat: np.ndarray
    lon: np.ndarray
    log_density: np.ndarray
    solid_angle: np.ndarray
    n_failed: int = 0

    def integral(self) -> float:
        ok = np.isfinite(self.log_density)
        return float(np.sum(np.exp(self.log_density[ok]) * self.solid_angle[ok]))

    def argmax(self) -> tuple[float, float]:
        i = int(np.nanargmax(self.log_density))
        return float(self.lat.ravel()[i]), float(self.lon.ravel()[i])


@dataclass(frozen=True)
class LocalizabilityScore:
    bits: float
    n_samples: int
    std_error: float


def _velocity_and_div(field, x, t, c):
    div, v = divergence(field, x, t, c, with_value=True)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(div))):
        raise NonFiniteError("field or divergence is not finite")
    return -v, div


def log_prob_batch(field, x, c, n_steps: int = 200, s: Schedule = Schedule()) -> np.ndarray:
    """log P(x | c) for every row of ``x`` via fixed-step RK4 on the sphere."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    x = normalize(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    f = np.zeros(x.shape[0])
    ts = np.linspace(s.t_clamp_min, 1.0, n_steps + 1)
    for t0, t1 in zip(ts[:-1], ts[1:]):
        h = t1 - t0
        k1, d1 = _velocity_and_div(field, x, t0, c)
        k2, d2 = _velocity_and_div(field, exp_map_batch(x, 0.5 * h * k1), t0 + 0.5 * h, c)
        k3, d3 = _velocity_and_div(field, exp_map_batch(x, 0.5 * h * project(x, k2)), t0 + 0.5 * h, c)
        k4, d4 = _velocity_and_div(field, exp_map_batch(x, h * project(x, k3)), t1, c)
        step = project(x, k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
        x = exp_map_batch(x, step)
        f = f + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    out = LOG_UNIFORM - f
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("log-density integration produced non-finite values")
    return out


def log_prob(field, x_n, c, n_steps: int = 200, s: Schedule = Schedule()) -> float:
    return float(log_prob_batch(field, np.asarray(x_n, float).reshape(1, 3), c, n_steps, s)[0])


def grid_cells(n_lat: int, n_lon: int):
    """Cell-center lat/lon and solid angles of an equiangular grid."""
    if n_lat < 2 or n_lon < 2:
        raise DomainError("grid needs at least 2 cells per axis")
    lat_edges = np.linspace(-90.0, 90.0, n_lat + 1)
    lon_edges = np.linspace(-180.0, 180.0, n_lon + 1)
    lat_c = 0.5 * (lat_edges[:-1] + lat_edges[1:])
    lon_c = 0.5 * (lon_edges[:-1] + lon_edges[1:])
    band = np.diff(np.sin(np.radians(lat_edges)))
    dlon = np.radians(np.diff(lon_edges))
    lat, lon = np.meshgrid(lat_c, lon_c, indexing="ij")
    return lat, lon, np.outer(band, dlon)


def density_grid(field, c, n_lat: int = 72, n_lon: int = 144, n_steps: int = 200,
                 s: Schedule = Schedule(), chunk: int = 20000) -> DensityGrid:
    lat, lon, omega = grid_cells(n_lat, n_lon)
    pts = latlon_to_xyz(lat.ravel(), lon.ravel())
    logd = np.full(pts.shape[0], np.nan)
    failed = 0
    for i in range(0, pts.shape[0], chunk):
        sl = slice(i, i + chunk)
        try:
            logd[sl] = log_prob_batch(field, pts[sl], c, n_steps, s)
        except NonFiniteError:
            # redo cell by cell so one bad cell does not blank the chunk
            for j in range(sl.start, min(sl.stop, pts.shape[0])):
                try:
                    logd[j] = log_prob_batch(field, pts[j:j + 1], c, n_steps, s)[0]
                except NonFiniteError:
                    failed += 1
    return DensityGrid(n_lat, n_lon, lat, lon, logd.reshape(lat.shape), omega, failed)


def localizability(field, c, n_samples: int = 10_000, n_steps: int = 200, rng=None,
                   s: Schedule = Schedule(), sample_steps: int | None = None) -> LocalizabilityScore:
    """Monte-Carlo negative entropy, in bits, of the model's location distribution."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    x = rfm_sample_batch(field, c, sample_steps or max(n_steps, 1), rng, n_samples, s=s)
    lp2 = log_prob_batch(field, x, c, n_steps, s) / math.log(2.0)
    se = float(np.std(lp2, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return LocalizabilityScore(float(np.mean(lp2)), n_samples, se)
