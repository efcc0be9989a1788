import math

import numpy as np
import pytest

from geoflow.density import (
    LOG_UNIFORM, density_grid, grid_cells, localizability, log_prob, log_prob_batch,
)
from geoflow.errors import DomainError, NonFiniteError
from geoflow.schedule import Schedule
from geoflow.sphere import latlon_to_xyz, uniform_batch

import oracles
from conftest import unit_rows

S = Schedule("linear")
T = 1.0 - S.t_clamp_min
K = np.array([0.3, -0.4, 0.866])
K = K / np.linalg.norm(K)


def zero(x, t, c):
    return np.zeros_like(x)


def test_zero_field_uniform(rng):
    lp = log_prob_batch(zero, unit_rows(rng, 300), None, 20)
    assert np.max(np.abs(lp - LOG_UNIFORM)) < 1e-6
    assert LOG_UNIFORM == pytest.approx(-2.5310242, abs=1e-7)
    assert log_prob(zero, unit_rows(rng, 1)[0], None, 5) == pytest.approx(LOG_UNIFORM, abs=1e-12)


def test_killing_field_uniform(rng):
    w = np.array([0.4, 1.1, -0.7])
    lp = log_prob_batch(lambda x, t, c: np.cross(w, x), unit_rows(rng, 300), None, 50)
    assert np.max(np.abs(lp - LOG_UNIFORM)) < 1e-3


@pytest.mark.parametrize("a", [0.7, 2.0])
def test_dilation_matches_closed_form(a, rng):
    x = np.vstack([unit_rows(rng, 300), K, -K])
    lp = log_prob_batch(oracles.dilation_field(K, a), x, None, 200, S)
    want = oracles.dilation_log_density(x, K, a, T)
    assert np.max(np.abs(lp - want)) < 1e-3


def test_grid_solid_angles():
    for n_lat, n_lon in ((2, 2), (7, 13), (72, 144), (180, 360)):
        _, _, om = grid_cells(n_lat, n_lon)
        assert abs(om.sum() - 4 * math.pi) < 1e-6
    with pytest.raises(DomainError):
        grid_cells(1, 10)


def test_grid_zero_field_and_dilation():
    g = density_grid(zero, None, 8, 16, 5)
    assert np.all(np.abs(g.log_density - LOG_UNIFORM) < 1e-9) and g.n_failed == 0
    assert g.integral() == pytest.approx(1.0, abs=1e-6)
    g = density_grid(oracles.dilation_field(K, 1.0), None, 72, 144, 100, S)
    assert 0.85 <= g.integral() <= 1.15
    lat, lon = g.argmax()
    (klat, klon), = [(math.degrees(math.asin(K[2])), math.degrees(math.atan2(K[1], K[0])))]
    assert abs(lat - klat) <= 2 * 2.5 and abs(lon - klon) <= 2 * 2.5


def test_grid_reports_failed_cells():
    def north_bad(x, t, c):
        out = np.zeros_like(x)
        out[x[:, 2] > 0.9] = np.nan
        return out
    g = density_grid(north_bad, None, 12, 8, 3)
    assert 0 < g.n_failed < g.log_density.size
    assert g.n_failed == int(np.sum(np.isnan(g.log_density)))
    with pytest.raises(NonFiniteError):
        log_prob_batch(north_bad, np.array([[0.0, 0.0, 1.0]]), None, 3)


def test_localizability_uniform():
    sc = localizability(zero, None, 2000, 10, np.random.default_rng(0))
    assert sc.n_samples == 2000
    assert abs(sc.bits + math.log2(4 * math.pi)) <= 3 * sc.std_error + 1e-12
    with pytest.raises(DomainError):
        localizability(zero, None, 0, 10)


def test_localizability_dilation_calibrated_and_monotone():
    scores = []
    for a in (0.3, 1.0, 2.5):
        f = oracles.dilation_field(K, a)
        sc = localizability(f, None, 400, 100, np.random.default_rng(1), S)
        want = oracles.dilation_neg_entropy_bits(a, T)
        assert abs(sc.bits - want) < 3 * sc.std_error + 0.02
        scores.append(sc.bits)
    assert scores[0] < scores[1] < scores[2]


def test_localizability_seed_invariance():
    f = oracles.dilation_field(K, 1.5)
    a = localizability(f, None, 400, 60, np.random.default_rng(11), S)
    b = localizability(f, None, 400, 60, np.random.default_rng(12), S)
    assert abs(a.bits - b.bits) < 3 * math.hypot(a.std_error, b.std_error)
