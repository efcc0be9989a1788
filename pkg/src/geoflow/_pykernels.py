"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature and
semantics; :mod:`geoflow.kernels` picks one at import time.
"""
import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def exp_map(x, v):
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    nz = n > 0
    sinc = np.where(nz, np.sin(n) / np.where(nz, n, 1.0), 1.0)
    out = np.cos(n) * x + sinc * v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def log_map(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = np.sum(x * y, axis=-1, keepdims=True)
    s = np.linalg.norm(np.cross(x, y), axis=-1, keepdims=True)
    theta = np.arctan2(s, d)
    u = y - d * x
    nu = np.linalg.norm(u, axis=-1, keepdims=True)
    nz = nu > 0
    return np.where(nz, u * (theta / np.where(nz, nu, 1.0)), 0.0)


def arc(a, b):
    """Elementwise central angle between rows of ``a`` and ``b`` (broadcasting)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(s, np.sum(a * b, axis=-1))


def pairwise_arc(a):
    a = np.asarray(a, dtype=np.float64)
    return arc(a[:, None, :], a[None, :, :])


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_and_grad(x):
    x = np.asarray(x, dtype=np.float64)
    th = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    y = 0.5 * x * (1.0 + th)
    dy = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return y, dy
