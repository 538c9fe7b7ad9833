"""Closed forms for losses that are linear in a Gaussian vector.

If ``X ~ N(m, S)`` and ``l(x, theta) = theta . (A x)`` then the loss is normal
with mean ``theta . A m`` and variance ``theta . A S A' theta``, which makes
VaR, CVaR and the excess-loss objective available exactly.  These serve as
reference values for estimators and solvers.
"""
from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np

from .dist import Gaussian
from .loss import LinearPortfolio, MaxAffine

_STD = NormalDist()
_erfc = np.frompyfunc(math.erfc, 1, 1)


def norm_sf(x):
    """Upper tail ``P(N(0,1) > x)``, elementwise."""
    out = 0.5 * np.asarray(_erfc(np.asarray(x, dtype=float) / math.sqrt(2.0)), dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def loss_moments(dist, loss, theta) -> tuple[float, float] | None:
    """Mean and standard deviation of the loss, or None when no closed form applies."""
    if not isinstance(dist, Gaussian):
        return None
    if isinstance(loss, LinearPortfolio):
        A = -np.eye(loss.dim)
    elif isinstance(loss, MaxAffine) and loss.n_pieces == 1:
        A = loss.A[0]
    else:
        return None
    direction = A.T @ np.asarray(theta, dtype=float)
    return float(direction @ dist.mean), math.sqrt(float(direction @ dist.cov @ direction))


def _moments_or_raise(dist, loss, theta):
    mom = loss_moments(dist, loss, theta)
    if mom is None:
        raise NotImplementedError("closed form requires a gaussian model with a loss linear in x")
    return mom


def var(dist, loss, theta, beta: float) -> float:
    mu, sd = _moments_or_raise(dist, loss, theta)
    return mu + sd * _STD.inv_cdf(1.0 - beta)


def cvar(dist, loss, theta, beta: float) -> float:
    mu, sd = _moments_or_raise(dist, loss, theta)
    return mu + sd * norm_pdf(_STD.inv_cdf(1.0 - beta)) / beta


def objective(dist, loss, u, theta, beta: float):
    """Exact ``u + E(l - u)^+ / beta`` (vectorized over ``u``)."""
    mu, sd = _moments_or_raise(dist, loss, theta)
    k = (np.asarray(u, dtype=float) - mu) / sd
    out = np.asarray(u, dtype=float) + sd * (norm_pdf(k) - k * norm_sf(k)) / beta
    return float(out) if out.ndim == 0 else out


def tail_prob(dist, loss, u: float, theta) -> float:
    mu, sd = _moments_or_raise(dist, loss, theta)
    return norm_sf((u - mu) / sd)


def excess_moments(dist, loss, u: float, theta) -> tuple[float, float]:
    """First and second moments of ``(l - u)^+``."""
    mu, sd = _moments_or_raise(dist, loss, theta)
    k = (u - mu) / sd
    q, phi = norm_sf(k), norm_pdf(k)
    first = sd * (phi - k * q)
    second = sd * sd * ((1.0 + k * k) * q - k * phi)
    return first, second


def grid_oracle(dist, loss, beta: float, mu, target, n_grid: int = 200,
                u_range: tuple[float, float] | None = None) -> dict:
    """Grid search over ``(u, theta_1)`` for a two-asset portfolio on the simplex.

    ``theta = (t1, 1 - t1)`` with ``t1`` restricted to the return-feasible
    interval; the objective is evaluated exactly at every grid node.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (2,):
        raise ValueError("grid oracle is defined for two assets")
    lo, hi = 0.0, 1.0
    if target is not None:
        # mu2 + t1 (mu1 - mu2) >= target
        slope, base = mu[0] - mu[1], mu[1]
        if slope > 0:
            lo = max(lo, (target - base) / slope)
        elif slope < 0:
            hi = min(hi, (target - base) / slope)
        elif base < target:
            raise ValueError("infeasible return target")
    t1 = np.linspace(lo, hi, n_grid)
    if u_range is None:
        vs = [var(dist, loss, np.array([a, 1 - a]), beta) for a in (lo, hi)]
        cs = [cvar(dist, loss, np.array([a, 1 - a]), beta) for a in (lo, hi)]
        span = max(cs) - min(vs)
        u_range = (min(vs) - 0.5 * span - 0.5, max(cs) + 0.1)
    us = np.linspace(u_range[0], u_range[1], n_grid)
    best = (math.inf, math.nan, math.nan)
    for a in t1:
        vals = objective(dist, loss, us, np.array([a, 1.0 - a]), beta)
        j = int(np.argmin(vals))
        if vals[j] < best[0]:
            best = (float(vals[j]), float(us[j]), float(a))
    return {"objective": best[0], "u": best[1], "theta": [best[2], 1.0 - best[2]],
            "n_grid": n_grid, "u_range": list(u_range), "theta1_range": [float(lo), float(hi)]}
