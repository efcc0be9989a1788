import math

import numpy as np
import pytest

from geoflow.errors import DomainError
from geoflow.schedule import Schedule, beta, beta_dot

LIN, COS = Schedule("linear"), Schedule("cosine")


def test_examples():
    assert beta(LIN, 0.5) == 0.5
    assert beta(COS, 0.0) == 0.0 and beta(COS, 1.0) == 1.0
    assert beta(COS, 0.5) == pytest.approx(0.5, abs=1e-15)
    assert beta_dot(LIN, 0.3) == 1.0
    assert beta_dot(COS, 0.5) == pytest.approx(math.pi / 2, abs=1e-12)


@pytest.mark.parametrize("s", [LIN, COS])
def test_endpoints_exact(s):
    assert beta(s, 0.0) == 0.0
    assert beta(s, 1.0) == 1.0


@pytest.mark.parametrize("s", [LIN, COS])
def test_monotone_and_bounded(s):
    t = np.linspace(0, 1, 10_001)
    b = beta(s, t)
    assert np.all(np.diff(b) >= 0) and b.min() >= 0 and b.max() <= 1


@pytest.mark.parametrize("s", [LIN, COS])
def test_beta_dot_matches_fd(s, rng):
    h = 1e-6
    t = rng.uniform(h, 1 - h, 1000)
    fd = (beta(s, t + h) - beta(s, t - h)) / (2 * h)
    assert np.max(np.abs(beta_dot(s, t) - fd)) < 1e-6
    fd5 = (beta(s, 0.5 + h) - beta(s, 0.5 - h)) / (2 * h)
    assert abs(beta_dot(s, 0.5) - fd5) < 1e-8


@pytest.mark.parametrize("t", [-0.1, 1.1, float("nan")])
def test_domain(t):
    with pytest.raises(DomainError):
        beta(LIN, t)
    with pytest.raises(DomainError):
        beta_dot(COS, t)


def test_rate_clamp():
    assert LIN.rate(0.5) == pytest.approx(2.0)
    assert LIN.rate(0.0) == pytest.approx(1.0 / LIN.t_clamp_min)
    assert np.isfinite(COS.rate(0.0))
    with pytest.raises(DomainError):
        Schedule("quadratic")
