"""Exponential-tilting importance sampling for piecewise-linear losses under a Gaussian.

The excess set ``{x: max_i theta . A_i x >= u}`` is the union of half-spaces
``R_i = {x: theta . A_i x >= u}``.  Each rare ``R_i`` gets a dominating point
(the minimum-rate point of ``R_i``) and a tilt that moves the mean onto it; the
proposal is a mixture of the tilted Gaussians.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dist import Gaussian
from .loss import as_max_affine
from .risk import WeightedSampleBatch

ROOT_TOL = 1e-8


class DominatingPoint(NamedTuple):
    point: np.ndarray
    rare: bool
    degenerate: bool


def _require_gaussian(dist):
    if not isinstance(dist, Gaussian):
        raise NotImplementedError(
            "exponential tilting needs a light-tailed model whose log-MGF is finite near the "
            f"origin; {dist.kind} does not qualify"
        )


def dominating_points(dist: Gaussian, loss, u: float, theta) -> list[DominatingPoint]:
    """Closed-form KKT solution of ``min rate(x) s.t. theta . A_i x >= u`` for every piece."""
    _require_gaussian(dist)
    A = as_max_affine(loss).A
    theta = np.asarray(theta, dtype=float)
    out = []
    for Ai in A:
        c = Ai.T @ theta
        at_mean = float(c @ dist.mean)
        spread = float(c @ dist.cov @ c)
        if spread <= 0.0:
            out.append(DominatingPoint(dist.mean.copy(), u > at_mean, True))
        elif u <= at_mean:
            out.append(DominatingPoint(dist.mean.copy(), False, False))
        else:
            a = dist.mean + dist.cov @ c * ((u - at_mean) / spread)
            out.append(DominatingPoint(a, True, False))
    return out


def tilt_parameters(dist: Gaussian, points) -> list[np.ndarray]:
    """Roots ``b`` of ``grad log-MGF(b) = a``: ``b = S^{-1} (a - m)``."""
    _require_gaussian(dist)
    return [dist.precision @ (np.asarray(a, dtype=float) - dist.mean) for a in points]


def mixture_weights(dist: Gaussian, points, floor: float = 1e-3) -> np.ndarray:
    """Weights proportional to ``exp(-rate(a_i))``, floored at ``floor / M``."""
    rates = np.array([dist.rate_conjugate(a) for a in points])
    raw = np.exp(-(rates - rates.min()))
    p = raw / raw.sum()
    p = np.maximum(p, floor / len(points))
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class TiltMixture:
    """Mixture of exponentially tilted copies of a Gaussian base model."""

    base: Gaussian
    dominating_points: tuple
    tilts: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.tilts) != w.shape[0] or len(self.dominating_points) != w.shape[0]:
            raise ValueError("one weight, tilt and dominating point per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to one")
        object.__setattr__(self, "weights", w)
        tilts = np.array(self.tilts, dtype=float).reshape(len(self.tilts), self.base.dim)
        object.__setattr__(self, "_b", tilts)
        object.__setattr__(self, "_logmgf", np.array([self.base.log_mgf(b) for b in tilts]))
        object.__setattr__(self, "_components", tuple(self.base.tilt(b) for b in tilts))

    @classmethod
    def identity(cls, base: Gaussian) -> "TiltMixture":
        return cls(base, (base.mean.copy(),), (np.zeros(base.dim),), np.ones(1))

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def root_residual(self) -> float:
        return max(float(np.max(np.abs(self.base.grad_log_mgf(b) - a)))
                   for b, a in zip(self._b, self.dominating_points))

    def log_weight(self, z) -> np.ndarray:
        """``log f_X(z) - log sum_i p_i g_i(z)`` via log-sum-exp."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        terms = np.log(self.weights) + z @ self._b.T - self._logmgf
        top = terms.max(axis=1)
        lse = top + np.log(np.exp(terms - top[:, None]).sum(axis=1))
        return 0.0 - lse

    def log_density(self, z) -> np.ndarray:
        return self.base.log_density(z) - self.log_weight(z)

    def sample(self, rng: np.random.Generator, n: int, label: str = "exptilt") -> WeightedSampleBatch:
        if self.n_components == 1:
            z = self._components[0].sample(rng, n)
        else:
            idx = rng.choice(self.n_components, size=n, p=self.weights)
            means = np.array([c.mean for c in self._components])
            z = means[idx] + rng.standard_normal((n, self.base.dim)) @ self.base.chol.T
        return WeightedSampleBatch(z, self.log_weight(z), None, (label,))

    draw = sample

    def describe(self) -> dict:
        return {"components": self.n_components,
                "weights": self.weights.tolist(),
                "tilts": self._b.tolist()}


def oracle_exptilt(u: float, theta, dist, loss) -> TiltMixture:
    """IS law for the decision ``(u, theta)``; the base itself when ``u`` is not rare."""
    _require_gaussian(dist)
    pts = dominating_points(dist, loss, u, theta)
    if not any(p.rare for p in pts) or any(not p.rare and not p.degenerate for p in pts):
        return TiltMixture.identity(dist)
    rare = [p.point for p in pts if p.rare and not p.degenerate]
    if not rare:
        return TiltMixture.identity(dist)
    tilts = tilt_parameters(dist, rare)
    return TiltMixture(dist, tuple(rare), tuple(tilts), mixture_weights(dist, rare))
