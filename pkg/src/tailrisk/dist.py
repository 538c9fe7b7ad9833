"""Distribution models for the uncertain vector ``X``.

Two families are built in: a multivariate Gaussian (light tailed, with a full
large-deviations toolkit) and a vector of i.i.d. Weibull marginals (heavy
tailed when ``shape < 1``, so no exponential tilting is available).

All densities are handled on the log scale.  Points outside the support get a
log-density of ``-inf`` instead of raising, so likelihood ratios of such points
simply vanish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Raised when an argument lies outside the effective domain of an operation."""


def seed_stream(root_seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator number ``index`` derived from ``root_seed``."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=(index,)))


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal ``N(mean, cov)``; the Cholesky factor is cached."""

    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)
    _prec: np.ndarray = field(init=False, repr=False)
    _logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        chol.setflags(write=False)
        prec = np.linalg.inv(cov)
        prec.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", prec)
        object.__setattr__(self, "_logdet", 2.0 * float(np.log(np.diag(chol)).sum()))

    kind = "gaussian"

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    @property
    def precision(self) -> np.ndarray:
        return self._prec

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.mean + rng.standard_normal((n, self.dim)) @ self._chol.T

    def log_density(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        diff = x - self.mean
        maha = np.einsum("...i,ij,...j->...", diff, self._prec, diff)
        out = -0.5 * (self.dim * _LOG_2PI + self._logdet + maha)
        return float(out) if out.ndim == 0 else out

    def log_mgf(self, r) -> float:
        r = self._vec(r)
        return float(self.mean @ r + 0.5 * r @ self.cov @ r)

    def grad_log_mgf(self, r) -> np.ndarray:
        r = self._vec(r)
        return self.mean + self.cov @ r

    def rate_conjugate(self, x) -> float:
        diff = self._vec(x) - self.mean
        return float(0.5 * diff @ self._prec @ diff)

    def tilt(self, b) -> "Gaussian":
        b = self._vec(b)
        if not np.all(np.isfinite(b)):
            raise DomainError("tilt must be finite")
        if not np.any(b):
            return self
        return Gaussian(self.mean + self.cov @ b, self.cov)

    def mean_vector(self) -> np.ndarray:
        return self.mean

    def to_config(self) -> dict:
        return {"kind": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    def _vec(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if r.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {r.shape}")
        return r


@dataclass(frozen=True)
class WeibullIID:
    """``dim`` independent Weibull marginals with ``P(X_i > x) = exp(-(x/scale)**shape)``."""

    shape: float
    scale: float = 1.0
    dim: int = 1

    kind = "weibull_iid"

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ValueError("shape must be a positive finite number")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite number")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.scale * rng.weibull(self.shape, size=(n, self.dim))

    def log_density(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        c, lam = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = x / lam
            per = math.log(c / lam) + (c - 1.0) * np.log(y) - y**c
            per = np.where(x > 0, per, -np.inf)
        out = per.sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def log_mgf(self, r) -> float:
        r = self._vec(r)
        if np.any(r):
            raise DomainError(
                "Weibull marginals have no log-MGF representation away from r = 0 "
                "(light-tail requirement for exponential tilting fails)"
            )
        return 0.0

    def grad_log_mgf(self, r) -> np.ndarray:
        self.log_mgf(r)
        return self.mean_vector()

    def rate_conjugate(self, x) -> float:
        raise NotImplementedError("rate function is only available in closed form for gaussian models")

    def tilt(self, b) -> "WeibullIID":
        b = self._vec(b)
        if np.any(b):
            raise DomainError("no non-zero exponential tilt is admissible for weibull_iid (MGF is infinite)")
        return self

    def mean_vector(self) -> np.ndarray:
        return np.full(self.dim, self.scale * math.gamma(1.0 + 1.0 / self.shape))

    def to_config(self) -> dict:
        return {"kind": "weibull_iid", "shape": self.shape, "scale": self.scale, "dim": self.dim}

    def _vec(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if r.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {r.shape}")
        return r


DistributionModel = Union[Gaussian, WeibullIID]


def from_config(cfg: dict) -> DistributionModel:
    """Build a model from its JSON description."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "gaussian":
        allowed = {"mean", "cov"}
        required = allowed
        make = lambda s: Gaussian(s["mean"], s["cov"])  # noqa: E731
    elif kind == "weibull_iid":
        allowed = {"shape", "scale", "dim"}
        required = {"shape", "dim"}
        make = lambda s: WeibullIID(float(s["shape"]), float(s.get("scale", 1.0)), int(s["dim"]))  # noqa: E731
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown keys in distribution config: {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ValueError(f"missing keys in distribution config: {sorted(missing)}")
    return make(cfg)
