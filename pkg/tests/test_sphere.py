import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow.errors import AntipodalError, DomainError
from geoflow.sphere import (
    EARTH_RADIUS_KM, GeoCoord, TangentVec, UnitVec3, arc_length, distance_km, exp_map, exp_map_batch,
    geodesic_distance_km, geodesic_interpolate, interpolate_batch, latlon_to_xyz, log_map, log_map_batch,
    medoid_index, project_to_tangent, sample_uniform_sphere, sample_vmf, to_geo, to_unit_vec, uniform_batch,
    vmf_batch, xyz_to_latlon,
)

from conftest import unit_rows

lat_st = st.floats(-89.9, 89.9)
lon_st = st.floats(-180.0, 179.999)


def haversine_km(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * 6371.0 * math.asin(min(1.0, math.sqrt(a)))


def test_to_unit_vec_examples(backend):
    assert to_unit_vec(GeoCoord(0, 0)).as_array() == pytest.approx([1, 0, 0], abs=1e-15)
    assert to_unit_vec(GeoCoord(90, 0)).as_array() == pytest.approx([0, 0, 1], abs=1e-15)
    assert to_unit_vec(GeoCoord(45, 45)).as_array() == pytest.approx([0.5, 0.5, 0.70710678118654752], abs=1e-12)


def test_to_geo_pole_convention():
    g = to_geo(UnitVec3(0, 0, 1))
    assert (g.lat_deg, g.lon_deg) == (90.0, 0.0)
    g = to_geo(UnitVec3(1, 0, 0))
    assert (g.lat_deg, g.lon_deg) == (0.0, 0.0)


def test_geocoord_validation():
    with pytest.raises(DomainError):
        GeoCoord(91.0, 0.0)
    assert GeoCoord(0.0, 180.0).lon_deg == -180.0
    assert GeoCoord(0.0, 540.0).lon_deg == -180.0
    assert GeoCoord(0.0, -190.0).lon_deg == pytest.approx(170.0)


def test_roundtrip_geo(rng):
    lat = np.degrees(np.arcsin(rng.uniform(-1, 1, 10_000)))
    lon = rng.uniform(-180, 180, 10_000)
    la, lo = xyz_to_latlon(latlon_to_xyz(lat, lon))
    assert np.max(np.abs(la - lat)) < 1e-9
    dlon = (lo - lon + 180) % 360 - 180
    assert np.max(np.abs(dlon)) < 1e-9


def test_distance_examples(backend):
    n, s = UnitVec3(0, 0, 1), UnitVec3(0, 0, -1)
    assert geodesic_distance_km(n, s) == pytest.approx(20015.0868, abs=0.01)
    a, b = to_unit_vec(GeoCoord(0, 0)), to_unit_vec(GeoCoord(0, 90))
    assert geodesic_distance_km(a, b) == pytest.approx(math.pi / 2 * EARTH_RADIUS_KM, abs=1e-9)
    assert geodesic_distance_km(a, a) == 0.0


@given(lat_st, lon_st, lat_st, lon_st)
def test_distance_matches_haversine(la1, lo1, la2, lo2):
    d = float(distance_km(latlon_to_xyz(la1, lo1), latlon_to_xyz(la2, lo2)))
    assert d == pytest.approx(haversine_km(la1, lo1, la2, lo2), abs=1e-6)


def test_log_map_examples(backend):
    t = log_map(UnitVec3(1, 0, 0), UnitVec3(0, 1, 0))
    assert t.vector() == pytest.approx([0, math.pi / 2, 0], abs=1e-15)
    assert log_map(UnitVec3(0, 0, 1), UnitVec3(0, 0, 1)).norm == 0.0
    with pytest.raises(AntipodalError):
        log_map(UnitVec3(1, 0, 0), UnitVec3(-1, 0, 0))


def test_exp_map_examples(backend):
    x = UnitVec3(1, 0, 0)
    assert exp_map(TangentVec(x, (0.0, 0.0, 0.0))).as_array() == pytest.approx([1, 0, 0])
    assert exp_map(TangentVec(x, (0.0, math.pi, 0.0))).as_array() == pytest.approx([-1, 0, 0], abs=1e-15)


def test_exp_log_identities(backend, rng):
    a, b = unit_rows(rng, 10_000), unit_rows(rng, 10_000)
    v = log_map_batch(a, b)
    assert np.max(np.linalg.norm(exp_map_batch(a, v) - b, axis=1)) < 1e-9
    # log o exp for tangents with norm < pi
    d = rng.standard_normal((10_000, 3))
    d -= np.sum(d * a, axis=1, keepdims=True) * a
    d *= (rng.uniform(0, 0.999 * math.pi, 10_000) / np.linalg.norm(d, axis=1))[:, None]
    assert np.max(np.abs(log_map_batch(a, exp_map_batch(a, d)) - d)) < 1e-9
    # distance consistency
    dist = np.linalg.norm(v, axis=1) * EARTH_RADIUS_KM
    assert np.max(np.abs(dist - distance_km(a, b))) < 1e-6


def test_log_map_direction_is_tangent(rng):
    a, b = unit_rows(rng, 1000), unit_rows(rng, 1000)
    v = log_map_batch(a, b)
    assert np.max(np.abs(np.sum(v * a, axis=1))) < 1e-12


def test_interpolation(backend, rng):
    x0, x1 = UnitVec3(1, 0, 0), UnitVec3(0, 1, 0)
    assert geodesic_interpolate(x0, x1, 0.5).as_array() == pytest.approx([2 ** -0.5, 2 ** -0.5, 0])
    assert geodesic_interpolate(x0, x1, 0.0) == x0
    assert geodesic_interpolate(x0, x1, 1.0).as_array() == pytest.approx(x1.as_array())
    with pytest.raises(DomainError):
        geodesic_interpolate(x0, x1, 1.5)
    a, b = unit_rows(rng, 2000), unit_rows(rng, 2000)
    s = rng.uniform(0, 1, 2000)
    lin = np.abs(arc_length(a, interpolate_batch(a, b, s)) - s * arc_length(a, b))
    assert lin.max() < 1e-9


def test_project_to_tangent(rng):
    base = UnitVec3(0, 0, 1)
    assert project_to_tangent(base, [0, 0, 5]).norm == 0.0
    assert project_to_tangent(base, [1, 2, 0]).dir == (1.0, 2.0, 0.0)
    for _ in range(100):
        b = UnitVec3.from_array(unit_rows(rng, 1)[0])
        t = project_to_tangent(b, rng.standard_normal(3))
        assert abs(np.dot(t.vector(), b.as_array())) < 1e-12


def test_unit_invariants():
    with pytest.raises(Exception):
        UnitVec3(0, 0, 0)
    v = UnitVec3(3, 0, 4)
    assert np.linalg.norm(v.as_array()) == pytest.approx(1.0, abs=1e-15)


def test_uniform_sampler(rng):
    x = uniform_batch(rng, 100_000)
    assert np.max(np.abs(np.linalg.norm(x, axis=1) - 1)) < 1e-12
    assert np.linalg.norm(x.mean(0)) < 0.02
    y = uniform_batch(rng, 80_000)
    octant = (y[:, 0] > 0) * 4 + (y[:, 1] > 0) * 2 + (y[:, 2] > 0)
    counts = np.bincount(octant, minlength=8)
    assert np.all(np.abs(counts - 10_000) <= 400)
    assert abs(np.linalg.norm(sample_uniform_sphere(rng).as_array()) - 1) < 1e-12


def test_vmf_sampler(rng):
    z = np.array([0.0, 0.0, 1.0])
    counts = np.bincount(
        (lambda y: (y[:, 0] > 0) * 4 + (y[:, 1] > 0) * 2 + (y[:, 2] > 0))(vmf_batch(rng, z, 0.0, 80_000)),
        minlength=8)
    assert np.all(np.abs(counts - 10_000) <= 400)
    dev = np.degrees(arc_length(vmf_batch(rng, z, 1000.0, 20_000), z))
    assert dev.mean() < 4.0
    assert dev.mean() == pytest.approx(np.degrees(math.sqrt(math.pi / 2000)), rel=0.03)
    x = vmf_batch(rng, z, 100.0, 50_000)
    m = x.mean(0)
    assert np.degrees(math.acos(m[2] / np.linalg.norm(m))) < 1.0
    # closed form: E[cos] = coth(k) - 1/k
    assert m[2] == pytest.approx(1 / math.tanh(100.0) - 0.01, abs=2e-4)
    assert isinstance(sample_vmf(rng, UnitVec3(0, 0, 1), 5.0), UnitVec3)
    with pytest.raises(DomainError):
        vmf_batch(rng, z, -1.0, 3)


def test_vmf_huge_kappa(rng):
    x = vmf_batch(rng, np.array([1.0, 0, 0]), 1e6, 5000)
    assert np.degrees(arc_length(x, np.array([1.0, 0, 0]))).max() < 0.5


def test_medoid_index(rng):
    pts = unit_rows(rng, 31)
    brute = np.argmin([sum(math.acos(np.clip(np.dot(p, q), -1, 1)) for q in pts) for p in pts])
    assert medoid_index(pts) == brute
