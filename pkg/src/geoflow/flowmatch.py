"""Euclidean flow matching and Riemannian flow matching on S^2.

Sign convention: the network regresses the velocity that moves a noisy point back
toward its data point as t decreases, so both samplers step ``x <- x + dt * phi``
in the manifold sense (``x <- x - phi * dt`` for the Euclidean variant, whose
target is d x_t / dt).
"""
from __future__ import annotations

import numpy as np

from .errors import AntipodalError, DegenerateError, DomainError, NonFiniteError
from .schedule import Schedule
from .sphere import (
    ANTIPODAL_TOL, GeoCoord, exp_map_batch, interpolate_batch, log_map_batch,
    medoid_index, project, uniform_batch, xyz_to_geo,
)


# -- Euclidean ---------------------------------------------------------------

def fm_target(x0, eps, t, s: Schedule):
    b = np.asarray(s.beta(t), dtype=np.float64)
    bd = np.asarray(s.beta_dot(t), dtype=np.float64)
    if b.ndim == 1:
        b, bd = b[:, None], bd[:, None]
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    return (1.0 - b) * x0 + b * eps, bd * (eps - x0)


def fm_batch(x0, c, s: Schedule, rng):
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    t = rng.random(n)
    eps = rng.standard_normal((n, 3))
    xt, v = fm_target(x0, eps, t, s)
    return xt, t, c, v


def fm_loss(field, x0, c, s: Schedule, rng) -> float:
    xt, t, c, v = fm_batch(x0, c, s, rng)
    r = field(xt, t, c) - v
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not np.isfinite(loss):
        raise NonFiniteError("fm loss is not finite")
    return loss


def fm_sample_batch(field, c, n_steps: int, rng, n: int, x1=None) -> np.ndarray:
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    x = rng.standard_normal((n, 3)) if x1 is None else np.array(x1, dtype=np.float64)
    ts = np.linspace(1.0, 0.0, n_steps + 1)
    for t, t_next in zip(ts[:-1], ts[1:]):
        x = x - field(x, t, c) * (t - t_next)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("fm sampler diverged")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms < 1e-8):
        raise DegenerateError("integrated location collapsed to the origin")
    return x / norms[:, None]


def fm_sample(field, c, n_steps: int, rng) -> GeoCoord:
    return xyz_to_geo(fm_sample_batch(field, c, n_steps, rng, 1))[0]


# -- Riemannian --------------------------------------------------------------

def rfm_noisy_point(x0, eps, t, s: Schedule) -> np.ndarray:
    return interpolate_batch(np.atleast_2d(x0), np.atleast_2d(eps), np.atleast_1d(s.beta(t)))


def rfm_target(x0, xt, t, s: Schedule) -> np.ndarray:
    """Tangent vector at ``xt`` whose backward flow retraces the geodesic to ``x0``."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < s.t_clamp_min):
        raise DomainError(f"t below t_clamp_min={s.t_clamp_min}")
    rate = s.rate(t_arr)[:, None]
    return rate * log_map_batch(np.atleast_2d(xt), np.atleast_2d(x0))


def sample_noise_not_antipodal(rng, x0) -> np.ndarray:
    x0 = np.atleast_2d(x0)
    eps = uniform_batch(rng, x0.shape[0])
    while True:
        bad = np.sum(eps * x0, axis=1) <= -1.0 + ANTIPODAL_TOL
        if not np.any(bad):
            return eps
        eps[bad] = uniform_batch(rng, int(bad.sum()))


def rfm_batch(x0, c, s: Schedule, rng):
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    t = rng.uniform(s.t_clamp_min, 1.0, n)
    eps = sample_noise_not_antipodal(rng, x0)
    xt = rfm_noisy_point(x0, eps, t, s)
    return xt, t, c, rfm_target(x0, xt, t, s)


def rfm_loss(field, x0, c, s: Schedule, rng) -> float:
    xt, t, c, u = rfm_batch(x0, c, s, rng)
    r = project(xt, field(xt, t, c)) - u
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not np.isfinite(loss):
        raise NonFiniteError("rfm loss is not finite")
    return loss


def rfm_time_grid(n_steps: int, s: Schedule) -> np.ndarray:
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    return np.linspace(1.0, s.t_clamp_min, n_steps + 1)


def rfm_sample_batch(field, c, n_steps: int, rng=None, n: int = 1, x1=None,
                     s: Schedule = Schedule(), return_path: bool = False):
    """Integrate the learned field from uniform noise at t=1 down to t_clamp_min."""
    x = uniform_batch(rng, n) if x1 is None else np.array(x1, dtype=np.float64)
    ts = rfm_time_grid(n_steps, s)
    path = [x] if return_path else None
    for t, t_next in zip(ts[:-1], ts[1:]):
        u = project(x, field(x, t, c))
        x = exp_map_batch(x, (t - t_next) * u)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("rfm sampler diverged")
        if return_path:
            path.append(x)
    return (x, path) if return_path else x


def rfm_sample(field, c, n_steps: int, rng, s: Schedule = Schedule()) -> GeoCoord:
    return xyz_to_geo(rfm_sample_batch(field, c, n_steps, rng, 1, s=s))[0]


def medoids(draws) -> np.ndarray:
    """Spherical medoid of each group; ``draws`` has shape ``(Q, M, 3)``."""
    draws = np.asarray(draws, dtype=np.float64)
    return np.stack([g[medoid_index(g)] for g in draws])


def predict_locations_batch(field, conds, n_steps: int, n_draws: int, x1,
                            s: Schedule = Schedule()) -> np.ndarray:
    """Medoid point estimates for ``Q`` conditions from initial noise ``x1`` of shape (Q, M, 3)."""
    conds = np.atleast_2d(np.asarray(conds, dtype=np.float64))
    x1 = np.asarray(x1, dtype=np.float64)
    q = conds.shape[0]
    if x1.shape != (q, n_draws, 3):
        raise DomainError(f"initial noise must have shape {(q, n_draws, 3)}, got {x1.shape}")
    c_rep = np.repeat(conds, n_draws, axis=0)
    x = rfm_sample_batch(field, c_rep, n_steps, x1=x1.reshape(-1, 3), s=s)
    return medoids(x.reshape(q, n_draws, 3))


def predict_location(field, c, n_steps: int, n_draws: int, rng, s: Schedule = Schedule()) -> GeoCoord:
    if n_draws < 1:
        raise DomainError("n_draws must be >= 1")
    x = rfm_sample_batch(field, c, n_steps, rng, n_draws, s=s)
    return xyz_to_geo(x[medoid_index(x)])[0]
