"""DDPM baseline in R^3: closed-form noising, eps-prediction loss, denoising sampler."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateError, DomainError, NonFiniteError
from .schedule import Schedule
from .sphere import GeoCoord, xyz_to_geo

BETA_MAX = 1.0 - 1e-6


def forward_noise(x0, t, eps, s: Schedule):
    """x_t = sqrt(1 - beta(t)) x0 + sqrt(beta(t)) eps (rows, or a single point)."""
    b = np.asarray(s.beta(t), dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    return np.sqrt(1.0 - b) * np.asarray(x0, float) + np.sqrt(b) * np.asarray(eps, float)


def denoise_estimate(xt, t, eps_pred, s: Schedule):
    """Invert the noising map given a noise prediction (beta clamped below 1)."""
    b = np.minimum(np.asarray(s.beta(t), dtype=np.float64), BETA_MAX)
    if b.ndim == 1:
        b = b[:, None]
    return (np.asarray(xt, float) - np.sqrt(b) * eps_pred) / np.sqrt(1.0 - b)


def ddpm_batch(x0, c, s: Schedule, rng: np.random.Generator):
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    t = rng.random(n)
    eps = rng.standard_normal((n, 3))
    return forward_noise(x0, t, eps, s), t, c, eps


def ddpm_loss(field, x0, c, s: Schedule, rng) -> float:
    xt, t, c, eps = ddpm_batch(x0, c, s, rng)
    r = field(xt, t, c) - eps
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not np.isfinite(loss):
        raise NonFiniteError("ddpm loss is not finite")
    return loss


def _denoise_path(field, x, c, n_steps, s):
    ts = np.linspace(1.0, 0.0, n_steps + 1)
    xhat = x
    for t, t_next in zip(ts[:-1], ts[1:]):
        phi = field(x, t, c)
        xhat = denoise_estimate(x, t, phi, s)
        b_next = s.beta(t_next)
        x = np.sqrt(1.0 - b_next) * xhat + np.sqrt(b_next) * phi
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("ddpm sampler diverged")
    return x


def ddpm_sample_batch(field, c, n_steps: int, rng: np.random.Generator, n: int,
                      s: Schedule = Schedule(), x1=None) -> np.ndarray:
    """``n`` samples as unit vectors, shape ``(n, 3)``."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    x = rng.standard_normal((n, 3)) if x1 is None else np.asarray(x1, dtype=np.float64)
    x0 = _denoise_path(field, x, c, n_steps, s)
    norms = np.linalg.norm(x0, axis=1)
    bad = norms < 1e-8
    if np.any(bad):
        # one retry from fresh noise for the degenerate rows only
        cc = np.asarray(c)
        sub_c = cc[bad] if cc.ndim == 2 else cc
        x0[bad] = _denoise_path(field, rng.standard_normal((int(bad.sum()), 3)), sub_c, n_steps, s)
        norms = np.linalg.norm(x0, axis=1)
        if np.any(norms < 1e-8):
            raise DegenerateError("denoised location collapsed to the origin")
    return x0 / norms[:, None]


def ddpm_sample(field, c, n_steps: int, rng, s: Schedule = Schedule()) -> GeoCoord:
    return xyz_to_geo(ddpm_sample_batch(field, c, n_steps, rng, 1, s))[0]
