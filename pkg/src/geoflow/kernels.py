"""Backend selection for the hot kernels.

The compiled extension ``geoflow._ckernels`` is used when it imports; otherwise the
numpy versions in ``geoflow._pykernels`` are used. Set ``GEOFLOW_KERNELS=python`` to
force the fallback.
"""
import contextlib
import importlib
import os

from . import _pykernels

_NAMES = ("exp_map", "log_map", "arc", "pairwise_arc", "gelu", "gelu_and_grad")


def available_backends():
    """Return ``{name: module}`` for every backend that imports on this machine."""
    out = {"python": _pykernels}
    try:
        out["cython"] = importlib.import_module("geoflow._ckernels")
    except ImportError:
        pass
    return out


def _select():
    backends = available_backends()
    if os.environ.get("GEOFLOW_KERNELS", "").lower() == "python":
        return "python", _pykernels
    if "cython" in backends:
        return "cython", backends["cython"]
    return "python", _pykernels


def set_backend(name: str) -> str:
    """Rebind the kernel functions of this module to backend ``name``; returns the old name."""
    global BACKEND
    backends = available_backends()
    if name not in backends:
        raise ValueError(f"kernel backend {name!r} not available (have {sorted(backends)})")
    old = BACKEND
    impl = backends[name]
    g = globals()
    for k in _NAMES:
        g[k] = getattr(impl, k)
    BACKEND = name
    return old


@contextlib.contextmanager
def backend(name: str):
    old = set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


BACKEND, _impl = _select()

exp_map = _impl.exp_map
log_map = _impl.log_map
arc = _impl.arc
pairwise_arc = _impl.pairwise_arc
gelu = _impl.gelu
gelu_and_grad = _impl.gelu_and_grad

__all__ = ["BACKEND", "available_backends", "backend", "set_backend", *_NAMES]
