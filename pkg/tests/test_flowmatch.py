import math

import numpy as np
import pytest
from scipy.integrate import quad

from geoflow.errors import DomainError, NonFiniteError
from geoflow.fieldnet import FieldNet
from geoflow.flowmatch import (
    fm_loss, fm_sample, fm_sample_batch, fm_target, medoids, predict_location,
    predict_locations_batch, rfm_loss, rfm_noisy_point, rfm_sample, rfm_sample_batch, rfm_target,
    sample_noise_not_antipodal,
)
from geoflow.schedule import Schedule
from geoflow.sphere import arc_length, exp_map_batch, geo_to_xyz, uniform_batch, vmf_batch
from geoflow.training import fit

import oracles
from conftest import unit_rows

LIN = Schedule("linear")
COS = Schedule("cosine")


def zero(x, t, c):
    return np.zeros_like(x)


# -- Euclidean ---------------------------------------------------------------

def test_fm_target_linear_and_fd(rng):
    x0, eps = unit_rows(rng, 1)[0], rng.standard_normal(3)
    _, v1 = fm_target(x0, eps, 0.2, LIN)
    _, v2 = fm_target(x0, eps, 0.9, LIN)
    assert np.allclose(v1, eps - x0) and np.allclose(v2, eps - x0)
    _, v0 = fm_target(x0, x0, 0.4, COS)
    assert np.all(v0 == 0)
    h, t = 1e-4, 0.37
    for s in (LIN, COS):
        xp, _ = fm_target(x0, eps, t + h, s)
        xm, _ = fm_target(x0, eps, t - h, s)
        _, v = fm_target(x0, eps, t, s)
        np.testing.assert_allclose((xp - xm) / (2 * h), v, atol=1e-5)
    with pytest.raises(DomainError):
        fm_target(x0, eps, -0.1, LIN)


def test_fm_loss_moments(rng):
    x0 = uniform_batch(rng, 10_000)
    c = np.zeros((10_000, 1))
    assert fm_loss(zero, x0, c, LIN, np.random.default_rng(1)) == pytest.approx(4.0, abs=0.1)
    # per-row oracle: recompute eps from x_t under the linear schedule
    def oracle(xt, t, c):
        eps = (xt - (1 - t[:, None]) * x0) / t[:, None]
        return eps - x0
    assert fm_loss(oracle, x0, c, LIN, np.random.default_rng(2)) < 1e-10


def test_fm_sample_zero_and_oracle(rng):
    eps = rng.standard_normal((10, 3))
    out = fm_sample_batch(zero, None, 5, rng, 10, x1=eps)
    np.testing.assert_allclose(out, eps / np.linalg.norm(eps, axis=1, keepdims=True), atol=1e-15)
    x0 = unit_rows(rng, 10)
    for n in (1, 3, 50):
        out = fm_sample_batch(lambda x, t, c: eps - x0, None, n, rng, 10, x1=eps)
        np.testing.assert_allclose(out, x0, atol=1e-6)
    assert fm_sample(zero, None, 3, np.random.default_rng(4)) == fm_sample(zero, None, 3, np.random.default_rng(4))


# -- Riemannian --------------------------------------------------------------

def test_noisy_point_properties(rng):
    x0 = unit_rows(rng, 10_000)
    eps = sample_noise_not_antipodal(rng, x0)
    t = rng.uniform(0, 1, 10_000)
    for s in (LIN, COS):
        xt = rfm_noisy_point(x0, eps, t, s)
        assert np.max(np.abs(np.linalg.norm(xt, axis=1) - 1)) < 1e-12
        np.testing.assert_allclose(arc_length(x0, xt), s.beta(t) * arc_length(x0, eps), atol=1e-9)
    np.testing.assert_allclose(rfm_noisy_point(x0[:5], eps[:5], np.zeros(5), LIN), x0[:5], atol=1e-15)
    np.testing.assert_allclose(rfm_noisy_point(x0[:5], eps[:5], np.ones(5), LIN), eps[:5], atol=1e-12)


def test_rfm_target_examples(rng):
    x0 = unit_rows(rng, 200)
    eps = sample_noise_not_antipodal(rng, x0)
    theta = arc_length(x0, eps)
    xt = rfm_noisy_point(x0, eps, np.full(200, 0.5), LIN)
    u = rfm_target(x0, xt, np.full(200, 0.5), LIN)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), theta, atol=1e-9)
    t = rng.uniform(0.01, 1, 200)
    xt = rfm_noisy_point(x0, eps, t, LIN)
    land = exp_map_batch(xt, t[:, None] * rfm_target(x0, xt, t, LIN))
    assert np.max(arc_length(land, x0)) < 1e-9
    assert np.all(rfm_target(x0, x0, np.full(200, 0.3), LIN) == 0)
    with pytest.raises(DomainError):
        rfm_target(x0[:1], xt[:1], 1e-6, LIN)


def test_rfm_loss_zero_net_oracle(rng):
    exact, _ = quad(lambda th: th * th * math.sin(th) / 2.0, 0.0, math.pi)
    assert exact == pytest.approx((math.pi ** 2 - 4) / 2, rel=1e-12)
    x0 = np.tile(unit_rows(rng, 1), (20_000, 1))
    loss = rfm_loss(zero, x0, np.zeros((20_000, 1)), LIN, np.random.default_rng(5))
    assert loss == pytest.approx(exact, rel=0.02)


def test_rfm_loss_exact_stub(rng):
    x0 = unit_rows(rng, 500)
    def stub(xt, t, c):
        return rfm_target(x0, xt, t, COS)
    assert rfm_loss(stub, x0, np.zeros((500, 1)), COS, np.random.default_rng(6)) < 1e-25
    with pytest.raises(NonFiniteError):
        rfm_loss(lambda x, t, c: np.full_like(x, np.inf), x0, np.zeros((500, 1)), COS, rng)


def test_rfm_sample_zero_field_and_closure(rng):
    x1 = uniform_batch(rng, 50)
    out, path = rfm_sample_batch(zero, None, 20, x1=x1, return_path=True)
    np.testing.assert_allclose(out, x1, atol=1e-14)
    x0 = unit_rows(rng, 50)
    field = oracles.exact_rfm_field(x0, LIN.beta, LIN.beta_dot, LIN.t_clamp_min)
    _, path = rfm_sample_batch(field, None, 50, x1=x1, return_path=True)
    assert max(np.max(np.abs(np.linalg.norm(p, axis=1) - 1)) for p in path) < 1e-9
    a = rfm_sample(zero, None, 5, np.random.default_rng(9))
    assert a == rfm_sample(zero, None, 5, np.random.default_rng(9))


def test_oracle_field_converges(rng):
    x0 = unit_rows(rng, 100)
    x1 = sample_noise_not_antipodal(rng, x0)
    field = oracles.exact_rfm_field(x0, LIN.beta, LIN.beta_dot, LIN.t_clamp_min)
    out = rfm_sample_batch(field, None, 1000, x1=x1, s=LIN)
    assert np.max(arc_length(out, x0)) < 1e-3
    # O(dt): halving the step at least roughly halves the median terminal error
    field = oracles.exact_rfm_field(x0, COS.beta, COS.beta_dot, COS.t_clamp_min)
    e1 = np.median(arc_length(rfm_sample_batch(field, None, 250, x1=x1, s=COS), x0))
    e2 = np.median(arc_length(rfm_sample_batch(field, None, 500, x1=x1, s=COS), x0))
    assert e2 / e1 <= 0.6


def test_predict_location(rng):
    g1 = predict_location(zero, None, 5, 1, np.random.default_rng(3))
    assert g1 == rfm_sample(zero, None, 5, np.random.default_rng(3))
    p = unit_rows(rng, 1)
    same = np.tile(p, (1, 7, 1))
    np.testing.assert_allclose(predict_locations_batch(zero, np.zeros((1, 2)), 3, 7, same), p)
    with pytest.raises(DomainError):
        predict_location(zero, None, 5, 0, rng)
    with pytest.raises(DomainError):
        predict_locations_batch(zero, np.zeros((2, 2)), 3, 7, same)


def test_medoid_beats_worst_draw(rng):
    mode = unit_rows(rng, 1)[0]
    groups = np.stack([vmf_batch(rng, mode, 50.0, 33) for _ in range(100)])
    med = medoids(groups)
    for g, m in zip(groups, med):
        assert arc_length(m, mode) < np.max(arc_length(g, mode))


def test_rfm_training_decreases():
    from geoflow.synthetic import SyntheticWorldSpec, generate_synthetic
    spec = SyntheticWorldSpec(n_pairs=100, onehot=True)
    vgi, _, _ = generate_synthetic(spec, seed=0)
    x0 = geo_to_xyz([r.geo for r in vgi])
    c = np.array([r.vector for r in vgi])
    net = FieldNet(8, hidden=(32, 32), time_dim=8, seed=0)
    curve = fit(net, "rfm", x0, c, COS, 600, batch_size=128, lr=3e-3, seed=0)
    assert np.mean(curve[-100:]) < 0.8 * np.mean(curve[:100])
