# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Point arrays are handled as flat row-major buffers of length 3 * N.
"""
import numpy as np
from libc.math cimport sin, cos, sqrt, atan2, exp

cdef double GELU_C = 0.7978845608028654
cdef double GELU_A = 0.044715


cdef inline double _tanh(double u) noexcept nogil:
    # exp-based form is several times faster than libm tanh; saturates cleanly
    return 1.0 - 2.0 / (exp(2.0 * u) + 1.0)


def _flat_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1:] != (3,) or b.shape[-1:] != (3,):
        raise ValueError("expected trailing dimension 3")
    a, b = np.broadcast_arrays(a, b)
    return a.shape, np.ascontiguousarray(a).reshape(-1), np.ascontiguousarray(b).reshape(-1)


def exp_map(x, v):
    shape, xf, vf = _flat_pair(x, v)
    cdef const double[::1] X = xf
    cdef const double[::1] V = vf
    cdef Py_ssize_t n = X.shape[0] // 3
    out = np.empty(3 * n, dtype=np.float64)
    cdef double[::1] O = out
    cdef Py_ssize_t i, k
    cdef double nv, c, s, o0, o1, o2, no
    with nogil:
        for i in range(n):
            k = 3 * i
            nv = sqrt(V[k] * V[k] + V[k + 1] * V[k + 1] + V[k + 2] * V[k + 2])
            c = cos(nv)
            s = sin(nv) / nv if nv > 0 else 1.0
            o0 = c * X[k] + s * V[k]
            o1 = c * X[k + 1] + s * V[k + 1]
            o2 = c * X[k + 2] + s * V[k + 2]
            no = sqrt(o0 * o0 + o1 * o1 + o2 * o2)
            O[k] = o0 / no
            O[k + 1] = o1 / no
            O[k + 2] = o2 / no
    return out.reshape(shape)


def log_map(x, y):
    shape, xf, yf = _flat_pair(x, y)
    cdef const double[::1] X = xf
    cdef const double[::1] Y = yf
    cdef Py_ssize_t n = X.shape[0] // 3
    out = np.empty(3 * n, dtype=np.float64)
    cdef double[::1] O = out
    cdef Py_ssize_t i, k
    cdef double d, c0, c1, c2, theta, u0, u1, u2, nu, f
    with nogil:
        for i in range(n):
            k = 3 * i
            d = X[k] * Y[k] + X[k + 1] * Y[k + 1] + X[k + 2] * Y[k + 2]
            c0 = X[k + 1] * Y[k + 2] - X[k + 2] * Y[k + 1]
            c1 = X[k + 2] * Y[k] - X[k] * Y[k + 2]
            c2 = X[k] * Y[k + 1] - X[k + 1] * Y[k]
            theta = atan2(sqrt(c0 * c0 + c1 * c1 + c2 * c2), d)
            u0 = Y[k] - d * X[k]
            u1 = Y[k + 1] - d * X[k + 1]
            u2 = Y[k + 2] - d * X[k + 2]
            nu = sqrt(u0 * u0 + u1 * u1 + u2 * u2)
            f = theta / nu if nu > 0 else 0.0
            O[k] = u0 * f
            O[k + 1] = u1 * f
            O[k + 2] = u2 * f
    return out.reshape(shape)


cdef inline double _arc(const double[::1] A, Py_ssize_t i, const double[::1] B, Py_ssize_t j) noexcept nogil:
    cdef double c0 = A[i + 1] * B[j + 2] - A[i + 2] * B[j + 1]
    cdef double c1 = A[i + 2] * B[j] - A[i] * B[j + 2]
    cdef double c2 = A[i] * B[j + 1] - A[i + 1] * B[j]
    return atan2(sqrt(c0 * c0 + c1 * c1 + c2 * c2),
                 A[i] * B[j] + A[i + 1] * B[j + 1] + A[i + 2] * B[j + 2])


def arc(a, b):
    shape, af, bf = _flat_pair(a, b)
    cdef const double[::1] A = af
    cdef const double[::1] B = bf
    cdef Py_ssize_t n = A.shape[0] // 3
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] O = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            O[i] = _arc(A, 3 * i, B, 3 * i)
    return out.reshape(shape[:-1])


def pairwise_arc(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError("expected shape (N, 3)")
    cdef const double[::1] A = np.ascontiguousarray(a).reshape(-1)
    cdef Py_ssize_t n = a.shape[0]
    out = np.zeros(n * n, dtype=np.float64)
    cdef double[::1] O = out
    cdef Py_ssize_t i, j
    cdef double v
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                v = _arc(A, 3 * i, A, 3 * j)
                O[i * n + j] = v
                O[j * n + i] = v
    return out.reshape(n, n)


def gelu(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    cdef const double[::1] X = x.reshape(-1)
    cdef double[::1] Y = out.reshape(-1)
    cdef Py_ssize_t i, n = X.shape[0]
    cdef double v
    with nogil:
        for i in range(n):
            v = X[i]
            Y[i] = 0.5 * v * (1.0 + _tanh(GELU_C * (v + GELU_A * v * v * v)))
    return out


def gelu_and_grad(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    grad = np.empty_like(x)
    cdef const double[::1] X = x.reshape(-1)
    cdef double[::1] Y = out.reshape(-1)
    cdef double[::1] G = grad.reshape(-1)
    cdef Py_ssize_t i, n = X.shape[0]
    cdef double v, th
    with nogil:
        for i in range(n):
            v = X[i]
            th = _tanh(GELU_C * (v + GELU_A * v * v * v))
            Y[i] = 0.5 * v * (1.0 + th)
            G[i] = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * v * v)
    return out, grad
