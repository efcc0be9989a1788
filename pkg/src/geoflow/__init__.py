"""Probabilistic cross-view geolocalization on the sphere."""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
