"""CVaR objectives over (possibly importance-weighted) sample batches."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


class DegenerateBatchError(ValueError):
    """The batch carries no probability mass (every likelihood ratio is zero)."""


@dataclass(frozen=True)
class RiskParams:
    beta: float
    lam: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True, eq=False)
class WeightedSampleBatch:
    """Sample points with log likelihood ratios and the index of the law that drew each.

    ``sources`` labels the laws; ``source[i]`` indexes into it.
    """

    points: np.ndarray
    log_weights: np.ndarray
    source: np.ndarray = None
    sources: tuple = ("base",)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        lw = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if pts.shape[0] < 1:
            raise ValueError("batch must contain at least one point")
        if lw.shape[0] != pts.shape[0]:
            raise ValueError("one log-weight per point is required")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValueError("log-weights must be finite or -inf")
        src = np.zeros(pts.shape[0], dtype=np.int64) if self.source is None else np.asarray(self.source, dtype=np.int64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "sources", tuple(self.sources))

    @classmethod
    def unweighted(cls, points, label: str = "base") -> "WeightedSampleBatch":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.zeros(pts.shape[0]), None, (label,))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def concat(self, other: "WeightedSampleBatch") -> "WeightedSampleBatch":
        return WeightedSampleBatch(
            np.vstack([self.points, other.points]),
            np.concatenate([self.log_weights, other.log_weights]),
            np.concatenate([self.source, other.source + len(self.sources)]),
            self.sources + other.sources,
        )


def excess_objective(loss_value, u: float, beta: float):
    """``u + (l - u)^+ / beta`` for a loss value (or array of them)."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    return u + np.maximum(np.asarray(loss_value, dtype=float) - u, 0.0) / beta


def is_objective(batch: WeightedSampleBatch, loss, u: float, theta, beta: float) -> float:
    """Importance-weighted estimate of ``u + E(l - u)^+ / beta``."""
    losses = np.asarray(loss.value(batch.points, theta))
    return _weighted_objective(losses, batch.weights, u, beta)


def _weighted_objective(losses, weights, u, beta) -> float:
    excess = np.maximum(losses - u, 0.0)
    contrib = np.where(weights > 0, excess * weights, 0.0)
    return float(u + contrib.sum() / (losses.shape[0] * beta))


def saa_objective(points, loss, u: float, theta, beta: float) -> float:
    return is_objective(WeightedSampleBatch.unweighted(points), loss, u, theta, beta)


def empirical_var_cvar(batch: WeightedSampleBatch, loss, theta, beta: float) -> tuple[float, float]:
    """Minimize the weighted objective over ``u`` exactly.

    The objective is piecewise linear in ``u`` with kinks at the sample losses,
    so the minimum is attained at one of them; the smallest minimizer is the VaR
    estimate and the minimum value the CVaR estimate.
    """
    losses = np.asarray(loss.value(batch.points, theta), dtype=float)
    return var_cvar_from_losses(losses, batch.weights, beta)


def var_cvar_from_losses(losses, weights, beta: float) -> tuple[float, float]:
    """:func:`empirical_var_cvar` on precomputed losses and likelihood ratios.

    If the weights sum to less than ``n * beta`` the objective decreases without
    bound as ``u`` falls; the search stays on the sample losses regardless.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    losses = np.asarray(losses, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not np.sum(w) > 0:
        raise DegenerateBatchError("all likelihood ratios are zero")
    order = np.argsort(losses, kind="stable")
    ls, ws = losses[order], w[order]
    n = ls.shape[0]
    # tail sums over strictly later sorted positions; ties contribute zero excess
    tail_w = np.concatenate([np.cumsum(ws[::-1])[::-1][1:], [0.0]])
    tail_wl = np.concatenate([np.cumsum((ws * ls)[::-1])[::-1][1:], [0.0]])
    objs = ls + (tail_wl - ls * tail_w) / (n * beta)
    lowest = objs.min()
    tol = 1e-12 * max(1.0, abs(lowest))
    j = int(np.nonzero(objs <= lowest + tol)[0][0])
    v = float(ls[j])
    return v, _weighted_objective(losses, w, v, beta)


def mean_cvar_objective(batch: WeightedSampleBatch, loss, u: float, theta, risk: RiskParams) -> float:
    losses = np.asarray(loss.value(batch.points, theta))
    w = batch.weights
    mean = float(np.where(w > 0, losses * w, 0.0).sum() / batch.n)
    return risk.lam * mean + (1.0 - risk.lam) * _weighted_objective(losses, w, u, risk.beta)


def subgrad_G(x, u: float, theta, beta: float, loss) -> np.ndarray:
    """Subgradient of ``u + (l(x, theta) - u)^+ / beta`` in ``(u, theta)``.

    The indicator uses the closed set ``l >= u``.
    """
    x = np.asarray(x, dtype=float)
    ell = loss.value(x, theta)
    g_theta = np.asarray(loss.subgrad_theta(x, theta), dtype=float)
    on = (ell >= u) / beta
    if x.ndim == 1:
        return np.concatenate([[1.0 - on], on * g_theta])
    return np.column_stack([1.0 - on, on[:, None] * g_theta])


def batch_objective_subgrad(batch: WeightedSampleBatch, loss, u: float, theta, beta: float):
    """Full-batch weighted objective and subgradient ``(obj, g_u, g_theta)``."""
    return _kernels.objective_subgrad(loss.features(batch.points), batch.weights, float(u),
                                      np.asarray(theta, dtype=float), beta)
