"""Geometry of the unit sphere.

Two layers live here: small immutable value types (:class:`GeoCoord`,
:class:`UnitVec3`, :class:`TangentVec`) with scalar operations on them, and the
batched ``(N, 3)`` array functions everything else in the package runs on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AntipodalError, DegenerateError, DomainError

EARTH_RADIUS_KM = 6371.0  # spherical Earth; pole to pole = pi * R = 20015.09 km
ANTIPODAL_TOL = 1e-12


@dataclass(frozen=True)
class GeoCoord:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        lat = float(self.lat_deg)
        lon = float(self.lon_deg)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise DomainError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise DomainError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", normalize_lon(lon))


def normalize_lon(lon):
    """Map longitudes (scalar or array) into [-180, 180)."""
    out = np.mod(np.asarray(lon, dtype=np.float64) + 180.0, 360.0) - 180.0
    # fmod rounding can land exactly on +180
    out = np.where(out >= 180.0, out - 360.0, out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class UnitVec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n == 0.0:
            raise DegenerateError("cannot normalize a zero or non-finite vector")
        object.__setattr__(self, "x", float(self.x) / n)
        object.__setattr__(self, "y", float(self.y) / n)
        object.__setattr__(self, "z", float(self.z) / n)

    @classmethod
    def from_array(cls, a) -> "UnitVec3":
        a = np.asarray(a, dtype=np.float64).reshape(3)
        return cls(a[0], a[1], a[2])

    def as_array(self) -> np.ndarray:
        a = np.array([self.x, self.y, self.z])
        assert abs(np.linalg.norm(a) - 1.0) < 1e-9
        return a


@dataclass(frozen=True)
class TangentVec:
    base: UnitVec3
    dir: tuple

    def __post_init__(self):
        b = self.base.as_array()
        d = np.asarray(self.dir, dtype=np.float64).reshape(3)
        d = d - np.dot(d, b) * b
        object.__setattr__(self, "dir", tuple(float(v) for v in d))

    def vector(self) -> np.ndarray:
        d = np.array(self.dir)
        assert abs(np.dot(d, self.base.as_array())) < 1e-9
        return d

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.dir))

    def scaled(self, s: float) -> "TangentVec":
        return TangentVec(self.base, tuple(s * v for v in self.dir))


# ---------------------------------------------------------------------------
# batched array layer


def latlon_to_xyz(lat_deg, lon_deg) -> np.ndarray:
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_latlon(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    h = np.hypot(x[..., 0], x[..., 1])
    lat = np.degrees(np.arctan2(x[..., 2], h))
    lon = np.where(h > 1e-15, np.degrees(np.arctan2(x[..., 1], x[..., 0])), 0.0)
    return lat, normalize_lon(lon)


def normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0) or not np.all(np.isfinite(n)):
        raise DegenerateError("cannot normalize a zero or non-finite vector")
    return x / n


def project(base, v) -> np.ndarray:
    """Remove the component of ``v`` along ``base`` (rows are points)."""
    base = np.asarray(base, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return v - np.sum(v * base, axis=-1, keepdims=True) * base


def arc_length(a, b) -> np.ndarray:
    """Central angle in radians between rows of ``a`` and ``b``."""
    return kernels.arc(a, b)


def distance_km(a, b) -> np.ndarray:
    return EARTH_RADIUS_KM * kernels.arc(a, b)


def check_not_antipodal(a, b):
    d = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    if np.any(d <= -1.0 + ANTIPODAL_TOL):
        raise AntipodalError("log map undefined for antipodal points")


def log_map_batch(base, target, check=True) -> np.ndarray:
    if check:
        check_not_antipodal(base, target)
    return kernels.log_map(base, target)


def exp_map_batch(base, v) -> np.ndarray:
    return kernels.exp_map(base, v)


def interpolate_batch(x0, x1, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    return kernels.exp_map(x0, s * log_map_batch(x0, x1))


def tangent_basis(x) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal tangent frame ``(e1, e2)`` at every row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    helper = np.zeros_like(x)
    use_x = np.abs(x[:, 2]) > 0.9
    helper[use_x, 0] = 1.0
    helper[~use_x, 2] = 1.0
    e1 = normalize(project(x, helper))
    e2 = np.cross(x, e1)
    return e1, e2


def uniform_batch(rng: np.random.Generator, n: int) -> np.ndarray:
    while True:
        g = rng.standard_normal((n, 3))
        n_ = np.linalg.norm(g, axis=1, keepdims=True)
        if np.all(n_ > 1e-12):
            return g / n_


def vmf_batch(rng: np.random.Generator, mode, kappa: float, n: int) -> np.ndarray:
    """Von Mises-Fisher draws on S^2 via the exact inverse CDF of the cosine."""
    if not math.isfinite(kappa) or kappa < 0:
        raise DomainError(f"kappa must be finite and non-negative, got {kappa}")
    mode = normalize(np.asarray(mode, dtype=np.float64).reshape(1, 3))
    u = 1.0 - rng.random(n)
    if kappa == 0:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    e1, e2 = tangent_basis(mode)
    r = np.sqrt(np.maximum(0.0, 1.0 - w * w))[:, None]
    t = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    return normalize(w[:, None] * mode + r * t)


def medoid_index(points) -> int:
    """Index of the row minimizing summed geodesic distance to all rows."""
    d = kernels.pairwise_arc(points)
    return int(np.argmin(d.sum(axis=1)))


# ---------------------------------------------------------------------------
# scalar value API


def to_unit_vec(g: GeoCoord) -> UnitVec3:
    return UnitVec3.from_array(latlon_to_xyz(g.lat_deg, g.lon_deg))


def to_geo(v: UnitVec3) -> GeoCoord:
    lat, lon = xyz_to_latlon(v.as_array())
    return GeoCoord(float(lat), float(lon))


def geodesic_distance_km(a: UnitVec3, b: UnitVec3) -> float:
    return float(distance_km(a.as_array(), b.as_array()))


def log_map(base: UnitVec3, target: UnitVec3) -> TangentVec:
    d = log_map_batch(base.as_array()[None], target.as_array()[None])[0]
    return TangentVec(base, tuple(d))


def exp_map(t: TangentVec) -> UnitVec3:
    return UnitVec3.from_array(exp_map_batch(t.base.as_array()[None], t.vector()[None])[0])


def geodesic_interpolate(x0: UnitVec3, x1: UnitVec3, s: float) -> UnitVec3:
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"interpolation parameter {s} outside [0, 1]")
    return exp_map(log_map(x0, x1).scaled(s))


def project_to_tangent(base: UnitVec3, v) -> TangentVec:
    return TangentVec(base, tuple(np.asarray(v, dtype=np.float64).reshape(3)))


def sample_uniform_sphere(rng: np.random.Generator) -> UnitVec3:
    return UnitVec3.from_array(uniform_batch(rng, 1)[0])


def sample_vmf(rng: np.random.Generator, mode: UnitVec3, kappa: float) -> UnitVec3:
    return UnitVec3.from_array(vmf_batch(rng, mode.as_array(), kappa, 1)[0])


def geo_to_xyz(coords) -> np.ndarray:
    """Stack a sequence of :class:`GeoCoord` into an ``(N, 3)`` array."""
    lat = np.array([g.lat_deg for g in coords], dtype=np.float64)
    lon = np.array([g.lon_deg for g in coords], dtype=np.float64)
    return latlon_to_xyz(lat, lon)


def xyz_to_geo(x) -> list[GeoCoord]:
    lat, lon = xyz_to_latlon(np.atleast_2d(x))
    return [GeoCoord(float(a), float(b)) for a, b in zip(lat, lon)]
