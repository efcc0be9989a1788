"""Minibatch Adam training of a FieldNet for any of the three methods."""
from __future__ import annotations

import logging

import numpy as np

from . import diffusion, flowmatch
from .errors import DomainError
from .fieldnet import Checkpoint, FieldNet, OptimizerState, adam_update
from .schedule import Schedule

log = logging.getLogger(__name__)

BATCHERS = {
    "ddpm": (diffusion.ddpm_batch, False),
    "fm": (flowmatch.fm_batch, False),
    "rfm": (flowmatch.rfm_batch, True),
}


def fit(net: FieldNet, method: str, x0, conds, s: Schedule, steps: int, batch_size: int = 256,
        lr: float = 1e-3, seed: int = 0, lr_final: float | None = None, log_every: int = 0):
    """Train ``net`` in place; returns the per-step loss curve.

    ``lr_final`` enables cosine decay from ``lr`` to ``lr_final`` over ``steps``.
    """
    if method not in BATCHERS:
        raise DomainError(f"unknown method {method!r}")
    make_batch, tangent = BATCHERS[method]
    x0 = np.asarray(x0, dtype=np.float64)
    conds = np.asarray(conds, dtype=np.float64)
    n = x0.shape[0]
    if n == 0 or conds.shape[0] != n:
        raise DomainError("need one condition per training location")
    rng = np.random.default_rng(seed)
    state = OptimizerState.for_params(net.params(), lr=lr)
    params = net.params()
    bs = min(batch_size, n)
    order = rng.permutation(n)
    pos = 0
    curve = []
    for step in range(steps):
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + bs]
        pos += bs
        xt, t, c, target = make_batch(x0[idx], conds[idx], s, rng)
        loss, grads = net.loss_and_grads(xt, t, c, target, tangent=tangent)
        if lr_final is not None:
            state.lr = lr_final + 0.5 * (lr - lr_final) * (1 + np.cos(np.pi * step / max(steps, 1)))
        adam_update(params, state, grads)
        curve.append(loss)
        if log_every and (step + 1) % log_every == 0:
            log.info("step %d loss %.5f", step + 1, float(np.mean(curve[-log_every:])))
    return curve


def train_checkpoint(method: str, x0, conds, schedule: Schedule, steps: int, hidden=(256, 256, 256),
                     time_dim: int = 64, activation: str = "gelu", batch_size: int = 256,
                     lr: float = 1e-3, lr_final: float | None = None, seed: int = 0) -> Checkpoint:
    conds = np.asarray(conds, dtype=np.float64)
    net = FieldNet(conds.shape[1], hidden=hidden, time_dim=time_dim, activation=activation, seed=seed)
    curve = fit(net, method, x0, conds, schedule, steps, batch_size, lr, seed, lr_final=lr_final)
    n = len(x0)
    meta = {
        "seed": seed,
        "steps": steps,
        "epochs": steps * min(batch_size, n) / n,
        "batch_size": batch_size,
        "lr": lr,
        # thin the curve so checkpoints stay small
        "loss_curve": [float(v) for v in curve[:: max(1, len(curve) // 200)]],
    }
    return Checkpoint(net, method, schedule.kind, schedule.t_clamp_min, meta)
