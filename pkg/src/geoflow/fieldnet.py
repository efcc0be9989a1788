"""Conditional field network phi(x_t | c, t) with hand-written backprop.

The same MLP predicts noise (DDPM), Euclidean velocity (FM) or tangent velocity
(RFM). Inputs are the 3-d point, a sinusoidal embedding of t and the condition
vector, concatenated. The first layer is split by input block so a shared t or c
is applied once per batch instead of once per row.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, NonFiniteError, ParseError, ShapeError
from .sphere import exp_map_batch, project, tangent_basis

ACTIVATIONS = ("gelu", "relu")
METHODS = ("ddpm", "fm", "rfm")
MAGIC = b"GEOFLOW1"
FORWARD_BLOCK = 512


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal features of ``t`` at frequencies geometric from 1 to 1e4."""
    if dim <= 0 or dim % 2:
        raise ShapeError(f"time embedding dim must be even and positive, got {dim}")
    freqs = np.geomspace(1.0, 1e4, dim // 2)
    ang = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _act(kind, z, need_grad):
    if kind == "gelu":
        if need_grad:
            return kernels.gelu_and_grad(z)
        return kernels.gelu(z), None
    y = np.maximum(z, 0.0)
    return y, ((z > 0).astype(np.float64) if need_grad else None)


class FieldNet:
    def __init__(self, cond_dim: int, hidden=(256, 256, 256), time_dim: int = 64,
                 activation: str = "gelu", seed: int = 0, rng=None):
        if activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {activation!r}")
        if cond_dim < 0:
            raise ShapeError("cond_dim must be non-negative")
        time_embedding(0.0, time_dim)  # validates time_dim
        self.cond_dim = int(cond_dim)
        self.time_dim = int(time_dim)
        self.activation = activation
        self.widths = [3 + self.time_dim + self.cond_dim, *[int(h) for h in hidden], 3]
        rng = np.random.default_rng(seed) if rng is None else rng
        self.weights, self.biases = [], []
        n_layers = len(self.widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            if i == n_layers - 1:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    # -- parameter plumbing -------------------------------------------------
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, arrays):
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.weights):
            raise ShapeError("parameter count mismatch")
        for i in range(len(self.weights)):
            w, b = np.asarray(arrays[2 * i], float), np.asarray(arrays[2 * i + 1], float)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(f"layer {i}: shape mismatch")
            self.weights[i] = w.copy()
            self.biases[i] = b.copy()

    def copy(self) -> "FieldNet":
        other = object.__new__(FieldNet)
        other.__dict__.update(self.__dict__)
        other.widths = list(self.widths)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    # -- forward / backward -------------------------------------------------
    def _check_inputs(self, x, t, c):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ShapeError(f"points must have shape (N, 3), got {x.shape}")
        t = np.asarray(t, dtype=np.float64)
        if t.ndim > 1 or (t.ndim == 1 and t.shape[0] != x.shape[0]):
            raise ShapeError("t must be a scalar or have one entry per point")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise DomainError("t outside [0, 1]")
        c = np.asarray(c, dtype=np.float64)
        if c.shape[-1:] != (self.cond_dim,) or c.ndim > 2 or (c.ndim == 2 and c.shape[0] != x.shape[0]):
            raise ShapeError(f"condition must have trailing dim {self.cond_dim}, got {c.shape}")
        return x, t, c

    def _side_pre(self, t, c):
        """First-layer contribution of time and condition: one row if both are shared."""
        w, td = self.weights[0], self.time_dim
        pre = time_embedding(t, td) @ w[3:3 + td] + self.biases[0]
        if self.cond_dim:
            pre = pre + c @ w[3 + td:]
        return pre

    def __call__(self, x, t, c) -> np.ndarray:
        x, t, c = self._check_inputs(x, t, c)
        side = self._side_pre(t, c)
        shared = side.ndim == 1
        w0 = self.weights[0][:3]
        out = np.empty((x.shape[0], 3))
        # row blocks keep the hidden activations cache resident
        for i in range(0, x.shape[0], FORWARD_BLOCK):
            sl = slice(i, i + FORWARD_BLOCK)
            h = x[sl] @ w0
            h += side if shared else side[sl]
            for w, b in zip(self.weights[1:], self.biases[1:]):
                h, _ = _act(self.activation, h, False)
                h = h @ w
                h += b
            out[sl] = h
        return out

    def loss_and_grads(self, x, t, c, target, tangent=False):
        """Mean squared error of the (optionally tangent-projected) output and its gradients."""
        x, t, c = self._check_inputs(x, t, c)
        target = np.asarray(target, dtype=np.float64)
        n = x.shape[0]
        if n == 0:
            raise ShapeError("empty batch")
        if target.shape != x.shape:
            raise ShapeError(f"target shape {target.shape} != {x.shape}")
        inp = np.concatenate(
            [x, np.broadcast_to(time_embedding(t, self.time_dim), (n, self.time_dim)),
             np.broadcast_to(c, (n, self.cond_dim))], axis=1)
        hs, dacts = [inp], []
        z = inp @ self.weights[0] + self.biases[0]
        for w, b in zip(self.weights[1:], self.biases[1:]):
            a, da = _act(self.activation, z, True)
            hs.append(a)
            dacts.append(da)
            z = a @ w + b
        pred = project(x, z) if tangent else z
        resid = pred - target
        loss = float(np.mean(np.sum(resid * resid, axis=1)))
        if not np.isfinite(loss):
            raise NonFiniteError("loss is not finite")
        g = (2.0 / n) * (project(x, resid) if tangent else resid)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = hs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = (g @ self.weights[i].T) * dacts[i - 1]
        return loss, grads

    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def forward(net: FieldNet, x, t: float, c) -> np.ndarray:
    """Single-point evaluation; returns a 3-vector."""
    x = np.asarray(x, dtype=np.float64).reshape(1, 3)
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.shape[0] != net.cond_dim:
        raise ShapeError(f"condition must have shape ({net.cond_dim},), got {c.shape}")
    return net(x, float(t), c)[0]


def backward(net: FieldNet, x, t, c, target, loss_kind="euclidean"):
    if loss_kind not in ("euclidean", "tangent"):
        raise DomainError(f"unknown loss kind {loss_kind!r}")
    return net.loss_and_grads(x, t, c, target, tangent=loss_kind == "tangent")


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_update(params, state: OptimizerState, grads):
    """In-place bias-corrected Adam step on a list of arrays."""
    if len(grads) != len(params):
        raise ShapeError("gradient count does not match parameter count")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise NonFiniteError("parameters became non-finite")


def adam_step(net: FieldNet, state: OptimizerState, grads):
    adam_update(net.params(), state, grads)
    return net, state


# ---------------------------------------------------------------------------
# divergence on the sphere


def divergence(field, x, t, c, h: float = 1e-4, with_value: bool = False):
    """Divergence of the tangent-projected ``field`` at points ``x``.

    Central differences along geodesics through ``x`` in an orthonormal tangent
    frame. The ambient difference of the projected field dotted with the frame
    vector equals the covariant derivative component to O(h^2), so no parallel
    transport is needed. With ``with_value`` the symmetric mean of the four
    samples, projected at ``x``, is returned as well: it matches the projected
    field at ``x`` to O(h^2) and saves a forward pass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    e1, e2 = tangent_basis(x)
    pts = np.concatenate([
        exp_map_batch(x, h * e1), exp_map_batch(x, -h * e1),
        exp_map_batch(x, h * e2), exp_map_batch(x, -h * e2)])
    t_arr = np.asarray(t, dtype=np.float64)
    tt = np.tile(t_arr, 4) if t_arr.ndim == 1 else t_arr
    c_arr = np.asarray(c, dtype=np.float64)
    cc = np.tile(c_arr, (4, 1)) if c_arr.ndim == 2 else c_arr
    v = project(pts, field(pts, tt, cc))
    dv1 = v[:n] - v[n:2 * n]
    dv2 = v[2 * n:3 * n] - v[3 * n:]
    div = (np.sum(dv1 * e1, axis=1) + np.sum(dv2 * e2, axis=1)) / (2.0 * h)
    if not with_value:
        return div
    mean = 0.25 * (v[:n] + v[n:2 * n] + v[2 * n:3 * n] + v[3 * n:])
    return div, project(x, mean)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    net: FieldNet
    method: str
    schedule: str = "linear"
    t_clamp_min: float = 1e-4
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method tag {self.method!r}")

    @property
    def cond_dim(self) -> int:
        return self.net.cond_dim

    def require(self, method: str):
        if method != self.method:
            raise DomainError(f"checkpoint was trained with {self.method!r}, not {method!r}")


def save_checkpoint(path, ckpt: Checkpoint):
    net = ckpt.net
    arrays = net.params()
    header = {
        "method": ckpt.method,
        "schedule": ckpt.schedule,
        "t_clamp_min": ckpt.t_clamp_min,
        "cond_dim": net.cond_dim,
        "time_dim": net.time_dim,
        "activation": net.activation,
        "widths": net.widths,
        "shapes": [list(a.shape) for a in arrays],
        "metadata": ckpt.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint (bad magic)")
    try:
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt header ({exc})") from exc
    widths = header["widths"]
    net = FieldNet(header["cond_dim"], hidden=widths[1:-1], time_dim=header["time_dim"],
                   activation=header["activation"])
    off = 12 + hlen
    arrays = []
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        chunk = raw[off:off + 8 * count]
        if len(chunk) != 8 * count:
            raise ParseError(f"{path}: truncated parameter data")
        arrays.append(np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape))
        off += 8 * count
    if off != len(raw):
        raise ParseError(f"{path}: trailing bytes after parameter data")
    net.set_params(arrays)
    return Checkpoint(net, header["method"], header["schedule"], header["t_clamp_min"],
                      header.get("metadata", {}))
