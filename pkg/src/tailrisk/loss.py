"""Loss models ``l(x, theta)`` used in the CVaR objective.

Every built-in loss is a pointwise maximum of functions that are linear in the
decision: ``l(x, theta) = max_m theta . F_m(x)``.  The ``features`` method
returns the ``(n, M, p)`` array of ``F_m(x)`` so the solver kernels can work on
any of them without knowing the kind.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np


def _rows(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


class _MaxLinear:
    """Shared evaluation for losses of the form ``max_m theta . F_m(x)``."""

    dim: int
    n_params: int
    rho: float

    def features(self, x) -> np.ndarray:
        raise NotImplementedError

    def _check(self, x: np.ndarray, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if x.shape[-1] != self.dim:
            raise ValueError(f"x has dimension {x.shape[-1]}, loss expects {self.dim}")
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta has shape {theta.shape}, loss expects ({self.n_params},)")
        return theta

    def value(self, x, theta):
        """Loss at each row of ``x`` (a scalar for a single point)."""
        x, single = _rows(x)
        theta = self._check(x, theta)
        vals = (self.features(x) @ theta).max(axis=1)
        return float(vals[0]) if single else vals

    __call__ = value

    def subgrad_theta(self, x, theta) -> np.ndarray:
        """A subgradient in ``theta``; ties go to the lowest-index active piece."""
        x, single = _rows(x)
        theta = self._check(x, theta)
        feats = self.features(x)
        active = np.argmax(feats @ theta, axis=1)
        g = feats[np.arange(x.shape[0]), active]
        return g[0] if single else g

    def growth_rate(self) -> float:
        return self.rho


@dataclass(frozen=True)
class LinearPortfolio(_MaxLinear):
    """Portfolio loss ``-theta . x`` (negative return)."""

    dim: int

    kind = "linear_portfolio"
    rho = 1.0

    @property
    def n_params(self) -> int:
        return self.dim

    def features(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -x[:, None, :]

    def linear_map(self) -> np.ndarray:
        return -np.eye(self.dim)

    def to_config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True, eq=False)
class MaxAffine(_MaxLinear):
    """Piecewise-linear loss ``max_i theta . (A_i x)`` with ``A`` of shape ``(M, p, d)``."""

    A: np.ndarray

    kind = "max_affine"
    rho = 1.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[0] < 1:
            raise ValueError("A must be a non-empty stack of equally shaped p x d matrices")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.A.shape[2]

    @property
    def n_params(self) -> int:
        return self.A.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.A.shape[0]

    def features(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.einsum("mpd,nd->nmp", self.A, x)

    def to_config(self) -> dict:
        return {"kind": self.kind, "A": self.A.tolist()}


@dataclass(frozen=True, eq=False)
class Quadratic(_MaxLinear):
    """Scalar-exposure quadratic loss ``theta_1 * (x'Qx + q'x)``."""

    Q: np.ndarray
    q: np.ndarray | None = None

    kind = "quadratic"
    rho = 2.0
    n_params = 1

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        d = Q.shape[0]
        if Q.shape != (d, d) or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric square matrix")
        q = np.zeros(d) if self.q is None else np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (d,):
            raise ValueError("q must have the same dimension as Q")
        Q.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    def features(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        base = np.einsum("ni,ij,nj->n", x, self.Q, x) + x @ self.q
        return base[:, None, None]

    def to_config(self) -> dict:
        return {"kind": self.kind, "Q": self.Q.tolist(), "q": self.q.tolist()}


LossModel = Union[LinearPortfolio, MaxAffine, Quadratic]


def as_max_affine(loss: LossModel) -> MaxAffine:
    """View a loss that is linear in ``x`` as a :class:`MaxAffine` model."""
    if isinstance(loss, MaxAffine):
        return loss
    if isinstance(loss, LinearPortfolio):
        return MaxAffine(-np.eye(loss.dim)[None])
    raise TypeError(f"{loss.kind} loss is not piecewise linear in x")


@dataclass(frozen=True, eq=False)
class DecisionConstraint:
    """``{theta >= 0, sum(theta) = 1, mu . theta >= target}``; each part can be switched off."""

    mu: np.ndarray | None = None
    target: float | None = None
    nonneg: bool = True
    sum_to_one: bool = True

    def __post_init__(self):
        if self.target is not None:
            if self.mu is None:
                raise ValueError("a return target needs a mean vector")
            mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
            object.__setattr__(self, "mu", mu)
            if not np.any(mu):
                raise ValueError("mean vector must be non-zero for a return constraint")
            if self.nonneg and self.sum_to_one and mu.max() < self.target:
                raise ValueError(
                    f"infeasible constraint set: max mean {mu.max():g} is below target {self.target:g}"
                )
        elif self.mu is not None:
            object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))

    @property
    def has_target(self) -> bool:
        return self.target is not None

    def violation(self, theta) -> float:
        """Largest constraint violation of ``theta`` (0 when feasible)."""
        theta = np.asarray(theta, dtype=float)
        v = 0.0
        if self.nonneg:
            v = max(v, float(-theta.min()))
        if self.sum_to_one:
            v = max(v, abs(float(theta.sum()) - 1.0))
        if self.has_target:
            v = max(v, float(self.target - self.mu @ theta))
        return v

    def to_config(self) -> dict:
        return {
            "mu": None if self.mu is None else self.mu.tolist(),
            "target": self.target,
            "nonneg": self.nonneg,
            "sum_to_one": self.sum_to_one,
        }


class MonotoneReport(NamedTuple):
    violations: int
    checked: int


def validate_orthogonal_monotone(loss: LossModel, theta, u: float, trials: int,
                                 rng: np.random.Generator, spread: float | None = None) -> MonotoneReport:
    """Randomized witness for upward-closedness of ``{x: l(x, theta) >= u}``.

    Draws pairs ``x <= x1`` and counts the pairs where ``x`` is in the excess
    set while ``x1`` is not.  Zero violations is necessary, not sufficient.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spread = (1.0 + abs(u)) if spread is None else spread
    x = spread * rng.standard_normal((trials, loss.dim)) * 2.0
    x1 = x + spread * rng.exponential(size=(trials, loss.dim))
    inside = np.asarray(loss.value(x, theta)) >= u
    escaped = np.asarray(loss.value(x1, theta)) < u
    return MonotoneReport(int(np.sum(inside & escaped)), int(np.sum(inside)))


def from_config(cfg: dict) -> LossModel:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    keys = {"linear_portfolio": ({"dim"}, {"dim"}),
            "max_affine": ({"A"}, {"A"}),
            "quadratic": ({"Q", "q"}, {"Q"})}
    if kind not in keys:
        raise ValueError(f"unknown loss kind {kind!r}")
    allowed, required = keys[kind]
    if set(cfg) - allowed:
        raise ValueError(f"unknown keys in loss config: {sorted(set(cfg) - allowed)}")
    if required - set(cfg):
        raise ValueError(f"missing keys in loss config: {sorted(required - set(cfg))}")
    if kind == "linear_portfolio":
        return LinearPortfolio(int(cfg["dim"]))
    if kind == "max_affine":
        return MaxAffine(cfg["A"])
    return Quadratic(cfg["Q"], cfg.get("q"))
