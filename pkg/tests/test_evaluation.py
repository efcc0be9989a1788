import numpy as np
import pytest
from hypothesis import given, strategies as st

from geoflow.errors import DomainError, LengthMismatchError
from geoflow.evaluation import (
    EvalReport, acc_at_k, distance_stats, evaluate, report_from_distances, split,
)
from geoflow.sphere import GeoCoord

import oracles


def random_geos(rng, n):
    return [GeoCoord(float(a), float(b)) for a, b in zip(rng.uniform(-90, 90, n), rng.uniform(-180, 180, n))]


def near(rng, geos, km):
    out = []
    for g in geos:
        dlat = rng.normal(0, km / 111.0)
        out.append(GeoCoord(float(np.clip(g.lat_deg + dlat, -90, 90)), g.lon_deg + rng.normal(0, km / 111.0)))
    return out


def test_trivial_cases(rng):
    g = random_geos(rng, 20)
    assert acc_at_k(g, g, 0.0) == 1.0 and distance_stats(g, g) == (0.0, 0.0)
    anti = [GeoCoord(-x.lat_deg, x.lon_deg + 180) for x in g]
    assert acc_at_k(anti, g, 20_015.0) == 0.0
    with pytest.raises(LengthMismatchError):
        acc_at_k(g, g[:-1], 1.0)
    with pytest.raises(LengthMismatchError):
        distance_stats([], [])


def test_two_pairs_mean_median():
    base = [GeoCoord(0, 0), GeoCoord(10, 10)]
    deg = 180.0 / (np.pi * 6371.0)
    preds = [GeoCoord(10 * deg, 0), GeoCoord(10 + 30 * deg, 10)]
    mean, med = distance_stats(preds, base)
    assert mean == pytest.approx(20.0, abs=1e-9) and med == pytest.approx(20.0, abs=1e-9)


def test_brute_force_oracle(rng):
    truths = random_geos(rng, 1000)
    preds = near(rng, truths, 120.0)
    d = [oracles.haversine_km(p.lat_deg, p.lon_deg, t.lat_deg, t.lon_deg) for p, t in zip(preds, truths)]
    for r in (1, 25, 50, 200):
        assert acc_at_k(preds, truths, r) == sum(x <= r for x in d) / 1000
    mean, med = distance_stats(preds, truths)
    assert mean == pytest.approx(sum(d) / 1000, rel=1e-9)
    assert med == pytest.approx(oracles.median(d), rel=1e-9)
    m_odd = distance_stats(preds[:999], truths[:999])[1]
    assert m_odd == pytest.approx(oracles.median(d[:999]), rel=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_acc_monotone_and_regeneration(seed):
    rng = np.random.default_rng(seed)
    t = random_geos(rng, 50)
    p = near(rng, t, 300.0)
    radii = sorted(rng.uniform(0, 2000, 6).tolist())
    rep = evaluate(p, t, radii)
    vals = [rep.acc[float(r)] for r in radii]
    assert all(0 <= a <= b <= 1 for a, b in zip(vals, vals[1:]))
    assert rep.n == 50
    again = report_from_distances(rep.distances, radii)
    assert again.acc == rep.acc and again.mean_km == rep.mean_km and again.median_km == rep.median_km


def test_report_dict_keys(rng):
    t = random_geos(rng, 5)
    d = evaluate(t, t).to_dict()
    assert set(d) >= {"acc@1km", "acc@25km", "acc@50km", "acc@200km", "mean_km", "median_km", "n"}


def test_split_examples():
    ids = [f"id{i}" for i in range(10)]
    tr, te = split(ids, 0.2, seed=1)
    assert len(te) == 2 and len(tr) == 8 and not set(tr) & set(te)
    assert split(ids, 0.2, 1) == (tr, te)
    assert split(list(reversed(ids)), 0.2, 1) == (tr, te)
    tr, te = split(ids, 0.3, seed=1)
    assert len(te) == 3
    with pytest.raises(DomainError):
        split(ids, 0.25, 1)
    assert len(split(ids, 0.25, 1, allow_any=True)[1]) == 2
    with pytest.raises(DomainError):
        split([], 0.2, 1)


def test_split_partition_property():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 300))
        ids = [f"x{v}" for v in rng.choice(10**6, n, replace=False)]
        frac = float(rng.choice([0.2, 0.3]))
        seed = int(rng.integers(1000))
        tr, te = split(ids, frac, seed)
        assert set(tr) | set(te) == set(ids) and not set(tr) & set(te)
        assert len(te) == int(np.floor(n * frac + 1e-9))
        assert (tr, te) == split(ids, frac, seed)
