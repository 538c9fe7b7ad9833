"""Self-structuring importance sampling.

Samples of ``X`` are pushed through a componentwise stretch
``T(x)_i = x_i * s ** kappa_i(x)`` whose exponent grows with how large ``x_i`` is
relative to ``|x|_inf``.  The stretched samples land in the rare excess set far
more often, and the likelihood ratio is available in closed form via the
Jacobian of ``T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from ._pykernels import ZERO_NORM
from .risk import WeightedSampleBatch

MAX_RESAMPLE = 10


class DegeneratePointError(ValueError):
    pass


def stretch_factor(h: float, beta: float) -> float:
    """``h * max(log log(1/beta), 1)``; the inner term counts as below 1 once ``beta >= 1/e``."""
    if not h > 0:
        raise ValueError("h must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    inner = math.log(1.0 / beta)
    loglog = math.log(inner) if inner > 1.0 else -math.inf
    return h * max(loglog, 1.0)


@dataclass(frozen=True)
class SelfStructParams:
    h: float
    beta: float
    rho: float = 1.0
    s: float = field(init=False)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "s", stretch_factor(self.h, self.beta))

    @classmethod
    def from_stretch(cls, s: float, beta: float, rho: float = 1.0) -> "SelfStructParams":
        """Parameters whose stretch is exactly ``s``."""
        params = cls(1.0, beta, rho)
        object.__setattr__(params, "h", s / stretch_factor(1.0, beta))
        object.__setattr__(params, "s", float(s))
        return params


def kappa(x, rho: float) -> np.ndarray:
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    top = np.max(np.abs(x), axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.log1p(np.abs(x)) / (rho * np.log1p(top))
    return np.where(top > 0, k, 1.0 / rho)


def transform(x, params: SelfStructParams) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * np.power(params.s, kappa(x, params.rho))


def log_jacobian(x, params: SelfStructParams) -> np.ndarray:
    """Log of the Jacobian determinant of ``transform`` at each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, logJ = _kernels.selfstruct_map(x, params.s, params.rho)
    if np.any(np.isnan(logJ)):
        raise DegeneratePointError("Jacobian is undefined at x = 0")
    return logJ


def jacobian(x, params: SelfStructParams):
    x = np.asarray(x, dtype=float)
    out = np.exp(log_jacobian(x, params))
    return float(out[0]) if x.ndim == 1 else out


@dataclass(frozen=True)
class SelfStructLaw:
    """Law of ``T_h(X)`` for a base model, as an importance sampler."""

    base: object
    params: SelfStructParams

    def sample(self, rng: np.random.Generator, n: int, label: str = "selfstruct") -> WeightedSampleBatch:
        batch, _, _ = sample_selfstruct(self.base, self.params, rng, n, label=label)
        return batch

    draw = sample

    def describe(self) -> dict:
        return {"h": self.params.h, "s": self.params.s, "rho": self.params.rho}


def _draw_nondegenerate(dist, rng, n):
    x = dist.sample(rng, n)
    retries = 0
    bad = np.max(np.abs(x), axis=1) <= ZERO_NORM
    while bad.any():
        if retries >= MAX_RESAMPLE:
            raise DegeneratePointError("could not draw a non-zero point after repeated retries")
        x[bad] = dist.sample(rng, int(bad.sum()))
        bad = np.max(np.abs(x), axis=1) <= ZERO_NORM
        retries += 1
    return x, retries


def sample_selfstruct(dist, params: SelfStructParams, rng: np.random.Generator, n: int,
                      label: str = "selfstruct", with_base: bool = False):
    """Draw ``X``, map it, and weight by ``f(T(X)) J(X) / f(X)``.

    Returns ``(batch, resample_rounds, X)``; ``X`` is only returned when
    ``with_base`` is set.
    """
    x, retries = _draw_nondegenerate(dist, rng, n)
    z, logJ = _kernels.selfstruct_map(x, params.s, params.rho)
    with np.errstate(invalid="ignore"):
        lw = dist.log_density(z) + logJ - dist.log_density(x)
    lw = np.where(np.isnan(lw), -np.inf, lw)
    batch = WeightedSampleBatch(z, lw, None, (label,))
    return batch, retries, (x if with_base else None)


def second_moment(h: float, u: float, theta, base_points, dist, loss, beta: float, rho: float,
                  squared_weight: bool = False) -> float:
    """Second-moment proxy used to rank stretch parameters.

    Default: ``mean[((l(T(X)) - u)^+)^2 * L]`` with a single likelihood-ratio
    factor.  ``squared_weight=True`` uses ``L**2``, the second moment of the
    weighted excess under the proposal.
    """
    params = SelfStructParams(h, beta, rho)
    x = np.atleast_2d(np.asarray(base_points, dtype=float))
    z, logJ = _kernels.selfstruct_map(x, params.s, params.rho)
    ok = ~np.isnan(logJ)
    with np.errstate(invalid="ignore", over="ignore"):
        lw = dist.log_density(z) + logJ - dist.log_density(x)
    lw = np.where(ok & ~np.isnan(lw), lw, -np.inf)
    excess = np.maximum(np.asarray(loss.value(z, theta)) - u, 0.0)
    power = 2.0 if squared_weight else 1.0
    with np.errstate(over="ignore"):
        terms = np.where(excess > 0, excess**2 * np.exp(power * lw), 0.0)
    return float(terms.sum() / x.shape[0])


class HSelection(NamedTuple):
    h: float
    moments: np.ndarray
    no_signal: bool


def default_h_grid(size: int = 8) -> np.ndarray:
    return np.geomspace(0.25, 4.0, size)


def select_h(u: float, theta, base_points, dist, loss, beta: float, rho: float,
             grid=None, squared_weight: bool = False) -> HSelection:
    """Grid argmin of ``second_moment`` on one shared set of base points.

    Ties go to the smallest ``h``.  If no base point produces excess loss for
    any ``h``, the grid midpoint is returned with ``no_signal`` set.
    """
    grid = default_h_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("h grid must not be empty")
    moments = np.array([second_moment(h, u, theta, base_points, dist, loss, beta, rho, squared_weight)
                        for h in grid])
    if not np.any(moments > 0):
        ordered = np.sort(grid)
        return HSelection(float(ordered[(ordered.size - 1) // 2]), moments, True)
    # a zero moment means no signal for that h, not an ideal sampler
    ranked = np.where(moments > 0, moments, np.inf)
    best = ranked.min()
    candidates = grid[ranked == best]
    return HSelection(float(candidates.min()), moments, False)
