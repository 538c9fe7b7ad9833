"""Compiled kernels against the numpy fallback, and both against plain loops."""
import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from tailrisk import _kernels

BACKENDS = ["python"]
try:
    _kernels.get("cython")
    BACKENDS.append("cython")
except ImportError:
    pass

needs_two = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def _features(seed, n=400, M=3, p=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, M, p)), np.exp(rng.normal(scale=0.5, size=n))


def loop_objective(F, w, u, theta, beta):
    n = F.shape[0]
    obj, gu, gt = u, 1.0, np.zeros(F.shape[2])
    for i in range(n):
        vals = [float(theta @ F[i, m]) for m in range(F.shape[1])]
        m = int(np.argmax(vals))
        if vals[m] > u:
            obj += w[i] * (vals[m] - u) / (n * beta)
        if vals[m] >= u:
            gu -= w[i] / (n * beta)
            gt += w[i] * F[i, m] / (n * beta)
    return obj, gu, gt


@pytest.mark.parametrize("name", BACKENDS)
def test_objective_subgrad_matches_loop(name):
    F, w = _features(0)
    theta = np.array([0.2, 0.5, 0.3])
    for u in (-1.0, 0.3, 1.5):
        got = _kernels.get(name).objective_subgrad(F, w, u, theta, 0.1)
        want = loop_objective(F, w, u, theta, 0.1)
        assert got[0] == pytest.approx(want[0], rel=1e-12)
        assert got[1] == pytest.approx(want[1], rel=1e-12, abs=1e-12)
        assert np.allclose(got[2], want[2], rtol=1e-12, atol=1e-12)


@needs_two
def test_objective_subgrad_backends_agree():
    F, w = _features(1, n=2000)
    theta = np.array([0.1, 0.1, 0.8])
    a, b = (_kernels.get(n).objective_subgrad(F, w, 0.7, theta, 0.05) for n in BACKENDS)
    assert a[0] == pytest.approx(b[0], rel=1e-13)
    assert a[1] == pytest.approx(b[1], rel=1e-13, abs=1e-13)
    assert np.allclose(a[2], b[2], rtol=1e-13, atol=1e-13)


@needs_two
@pytest.mark.parametrize("flags", list(itertools.product([True, False], repeat=3)))
def test_project_backends_agree(flags):
    has_target, nonneg, sum_to_one = flags
    rng = np.random.default_rng(2)
    mu = np.array([0.3, 0.1, 0.2])
    for _ in range(20):
        y = rng.normal(scale=2.0, size=3)
        outs = [_kernels.get(n).project(y, mu, 0.22, has_target, nonneg, sum_to_one) for n in BACKENDS]
        assert np.allclose(outs[0], outs[1], atol=1e-10)


@needs_two
def test_sa_steps_backends_agree():
    F, w = _features(3, n=500, M=2, p=2)
    mu = np.array([0.05, 0.03])
    args = (F, w, 0.0, np.array([0.5, 0.5]), 0.0, np.zeros(2), 0, 1.0, 0.7, 0.05,
            mu, 0.035, True, True, True, np.inf, -np.inf, 0.5)
    a, b = (_kernels.get(n).sa_steps(*args) for n in BACKENDS)
    assert a[6:] == b[6:]
    for x, y in zip(a[:6], b[:6]):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


@needs_two
@pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
def test_selfstruct_map_backends_agree(s):
    rng = np.random.default_rng(4)
    X = rng.standard_t(3, size=(500, 3))
    X[0] = 0.0
    (za, la), (zb, lb) = (_kernels.get(n).selfstruct_map(X, s, 1.0) for n in BACKENDS)
    assert np.allclose(za, zb, rtol=1e-13, atol=1e-15)
    assert np.isnan(la[0]) and np.isnan(lb[0])
    assert np.allclose(la[1:], lb[1:], rtol=1e-12, atol=1e-13)


def test_selfstruct_map_is_identity_at_unit_stretch():
    X = np.random.default_rng(5).normal(size=(50, 2))
    Z, logJ = _kernels.get("python").selfstruct_map(X, 1.0, 1.0)
    assert np.array_equal(Z, X)
    assert np.allclose(logJ, 0.0)


def test_unknown_backend_is_rejected():
    with pytest.raises(ValueError):
        _kernels.get("fortran")


def test_environment_forces_the_fallback():
    env = dict(os.environ, TAILRISK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import tailrisk; print(tailrisk.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
