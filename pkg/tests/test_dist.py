import math

import numpy as np
import pytest
from scipy import integrate, stats

from tailrisk.dist import DomainError, Gaussian, WeibullIID, from_config, seed_stream


def test_sample_is_deterministic_for_a_seed():
    g = Gaussian(np.zeros(2), np.eye(2))
    a = g.sample(seed_stream(7, 0), 3)
    b = g.sample(seed_stream(7, 0), 3)
    assert a.shape == (3, 2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, g.sample(seed_stream(7, 1), 3))


def test_weibull_cdf_at_one():
    w = WeibullIID(0.6, 1.0, 2)
    x = w.sample(np.random.default_rng(1), 100_000)
    assert abs(np.mean(x[:, 0] <= 1.0) - (1 - math.exp(-1))) < 0.01
    assert np.all(x > 0)


def test_gaussian_sample_mean():
    g = Gaussian([1.0, 2.0], np.eye(2))
    x = g.sample(np.random.default_rng(2), 100_000)
    assert np.all(np.abs(x.mean(axis=0) - [1, 2]) < 0.02)


def test_sample_requires_positive_n():
    with pytest.raises(ValueError):
        Gaussian([0.0], [[1.0]]).sample(np.random.default_rng(0), 0)


@pytest.mark.parametrize("model,x,expected", [
    (Gaussian([0.0], [[1.0]]), [0.0], -0.5 * math.log(2 * math.pi)),
    (WeibullIID(1.0, 1.0, 1), [2.0], -2.0),
    (WeibullIID(0.6, 1.0, 2), [1.0, 1.0], 2 * (math.log(0.6) - 1)),
])
def test_log_density_examples(model, x, expected):
    assert model.log_density(np.array(x)) == pytest.approx(expected, abs=1e-12)


def test_log_density_matches_scipy():
    m, S = np.array([0.3, -1.0]), np.array([[2.0, 0.4], [0.4, 0.7]])
    x = np.random.default_rng(3).normal(size=(20, 2))
    assert np.allclose(Gaussian(m, S).log_density(x), stats.multivariate_normal(m, S).logpdf(x))
    w = WeibullIID(1.7, 2.5, 3)
    y = np.abs(x[:, :1]) * np.ones((1, 3)) + 0.1
    ref = stats.weibull_min(1.7, scale=2.5).logpdf(y).sum(axis=1)
    assert np.allclose(w.log_density(y), ref)


def test_outside_support_is_minus_inf():
    w = WeibullIID(0.6, 1.0, 2)
    out = w.log_density(np.array([[1.0, -1.0], [0.0, 1.0], [1.0, 1.0]]))
    assert out[0] == -np.inf and out[1] == -np.inf and np.isfinite(out[2])


@pytest.mark.parametrize("model", [Gaussian([0.5], [[2.0]]), WeibullIID(0.8, 1.3, 1), WeibullIID(2.0, 1.0, 1)])
def test_density_normalizes(model):
    f = lambda t: math.exp(model.log_density(np.array([t])))  # noqa: E731
    total = integrate.quad(f, 0.0, np.inf, limit=200)[0]
    if isinstance(model, Gaussian):
        total += integrate.quad(f, -np.inf, 0.0, limit=200)[0]
    assert 0.999 <= total <= 1.001


def test_log_mgf_examples():
    assert Gaussian([0.0], [[1.0]]).log_mgf([2.0]) == 2.0
    assert Gaussian([1.0, 0.0], np.eye(2)).log_mgf([0.0, 0.0]) == 0.0
    with pytest.raises(DomainError):
        WeibullIID(0.6, 1.0, 1).log_mgf([0.1])
    assert WeibullIID(0.6, 1.0, 1).log_mgf([0.0]) == 0.0


def test_grad_log_mgf_examples():
    assert np.allclose(Gaussian(np.zeros(2), np.eye(2)).grad_log_mgf([3.0, 0.0]), [3, 0])
    assert np.allclose(Gaussian([1.0, 1.0], np.diag([2.0, 2.0])).grad_log_mgf([1.0, 0.0]), [3, 1])
    g = Gaussian([0.2, -0.4], [[1.0, 0.2], [0.2, 0.5]])
    assert np.allclose(g.grad_log_mgf([0, 0]), g.mean)
    w = WeibullIID(2.0, 1.5, 2)
    assert np.allclose(w.grad_log_mgf([0.0, 0.0]), 1.5 * math.gamma(1.5))


def test_log_mgf_matches_monte_carlo():
    g = Gaussian([0.1, -0.2], [[1.0, 0.3], [0.3, 0.6]])
    r = np.array([0.4, -0.3])
    x = g.sample(np.random.default_rng(4), 400_000)
    assert g.log_mgf(r) == pytest.approx(math.log(np.mean(np.exp(x @ r))), abs=5e-3)


def test_rate_conjugate_examples():
    assert Gaussian([0.0], [[1.0]]).rate_conjugate([2.0]) == pytest.approx(2.0)
    g = Gaussian([0.3, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    assert g.rate_conjugate(g.mean) == 0.0
    assert Gaussian([0.0], [[4.0]]).rate_conjugate([2.0]) == pytest.approx(0.5)
    with pytest.raises(NotImplementedError):
        WeibullIID(0.6).rate_conjugate([1.0])


def test_rate_conjugate_is_legendre_transform():
    g = Gaussian([0.5], [[2.0]])
    r = np.linspace(-5, 5, 20001)
    sup = np.max(r * 1.7 - (0.5 * r + r * r))
    assert g.rate_conjugate([1.7]) == pytest.approx(sup, abs=1e-6)


def test_tilt_examples():
    t = Gaussian(np.zeros(2), np.eye(2)).tilt([3.0, 0.0])
    assert np.array_equal(t.mean, [3.0, 0.0]) and np.array_equal(t.cov, np.eye(2))
    g = Gaussian([1.0, 2.0], [[1.0, 0.1], [0.1, 1.0]])
    assert g.tilt([0.0, 0.0]) is g
    with pytest.raises(DomainError):
        WeibullIID(0.6, 1.0, 2).tilt([0.1, 0.0])
    with pytest.raises(DomainError):
        g.tilt([np.inf, 0.0])


def test_tilted_density_is_exponential_reweighting():
    g = Gaussian([0.2, -0.1], [[1.0, 0.25], [0.25, 0.5]])
    b = np.array([0.7, -1.2])
    z = np.random.default_rng(5).normal(size=(10, 2))
    expected = g.log_density(z) + z @ b - g.log_mgf(b)
    assert np.allclose(g.tilt(b).log_density(z), expected)


def test_constructor_validation():
    with pytest.raises(ValueError):
        Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        Gaussian([0.0], np.eye(2))
    with pytest.raises(ValueError):
        WeibullIID(-1.0)
    with pytest.raises(ValueError):
        WeibullIID(1.0, 1.0, 0)


def test_from_config_roundtrip_and_unknown_keys():
    g = from_config({"kind": "gaussian", "mean": [0.0, 1.0], "cov": [[1.0, 0.0], [0.0, 2.0]]})
    assert from_config(g.to_config()).to_config() == g.to_config()
    w = from_config({"kind": "weibull_iid", "shape": 0.6, "dim": 2})
    assert w.scale == 1.0 and w.dim == 2
    with pytest.raises(ValueError, match="unknown keys"):
        from_config({"kind": "gaussian", "mean": [0.0], "cov": [[1.0]], "extra": 1})
    with pytest.raises(ValueError):
        from_config({"kind": "cauchy"})
