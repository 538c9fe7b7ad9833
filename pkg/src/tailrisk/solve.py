"""Solvers for ``min_{u, theta} u + E(l(X, theta) - u)^+ / beta``.

* :func:`solve_subproblem` minimizes the sampled (weighted) objective by
  projected subgradient descent.
* :func:`run_ra` is retrospective approximation: a sequence of growing sampled
  problems, each warm-started from the last, with the IS law refreshed between
  epochs.
* :func:`run_sa` is Robbins-Monro stochastic approximation with importance
  weights and iterate averaging.
"""
from __future__ import annotations

import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .loss import DecisionConstraint
from .risk import WeightedSampleBatch, is_objective

FEAS_TOL = 1e-8


class DivergenceError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def project_theta(theta, constraint: DecisionConstraint) -> np.ndarray:
    """Euclidean projection onto the decision set (Dykstra's alternating projections)."""
    theta = np.asarray(theta, dtype=float)
    mu = constraint.mu if constraint.mu is not None else np.zeros_like(theta)
    target = constraint.target if constraint.has_target else 0.0
    return _kernels.project(theta, mu, float(target), constraint.has_target,
                            constraint.nonneg, constraint.sum_to_one)


def _kernel_constraint(constraint: DecisionConstraint, p: int):
    mu = constraint.mu if constraint.mu is not None else np.zeros(p)
    target = float(constraint.target) if constraint.has_target else 0.0
    return (np.ascontiguousarray(mu, dtype=float), target, constraint.has_target,
            constraint.nonneg, constraint.sum_to_one)


class SubproblemResult(NamedTuple):
    u: float
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool


def solve_subproblem(batch: WeightedSampleBatch, loss, beta: float, constraint: DecisionConstraint,
                     init, eps: float, window: int = 50, max_iter: int = 100_000) -> SubproblemResult:
    """Projected subgradient descent on the weighted sampled objective.

    Stops once the best objective has not improved by ``eps`` for ``window``
    consecutive iterations (``converged=True``) or after ``max_iter``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    u0, theta0 = init
    F = loss.features(batch.points)
    mu, target, has_target, nonneg, s1 = _kernel_constraint(constraint, loss.n_params)
    u, theta, obj, iters, converged = _kernels.psg_minimize(
        F, batch.weights, float(beta), float(u0), np.asarray(theta0, dtype=float),
        mu, target, has_target, nonneg, s1, float(eps), int(window), int(max_iter))
    return SubproblemResult(float(u), np.asarray(theta), float(obj), int(iters), bool(converged))


@dataclass(frozen=True)
class RASchedule:
    """Sample sizes and tolerances for retrospective approximation.

    ``linear``: ``n_k = ceil(growth * n_{k-1})``; ``polynomial``:
    ``n_k = ceil(n_{k-1} ** growth)``.  Tolerances are ``K_tol / sqrt(n_k)``.
    """

    mode: str = "linear"
    n1: int = 500
    growth: float = 2.0
    K_tol: float | None = None
    max_epochs: int = 6

    def __post_init__(self):
        if self.mode not in ("linear", "polynomial"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if self.n1 < 1 or self.max_epochs < 1:
            raise ValueError("n1 and max_epochs must be positive")
        if self.K_tol is not None and not self.K_tol > 0:
            raise ValueError("K_tol must be positive")

    def sizes(self, upto: int | None = None) -> list[int]:
        upto = self.max_epochs if upto is None else upto
        out = [int(self.n1)]
        while len(out) < upto:
            prev = out[-1]
            nxt = math.ceil(self.growth * prev) if self.mode == "linear" else math.ceil(prev ** self.growth)
            out.append(max(int(nxt), prev + 1))
        return out


def ra_schedule_next(sched: RASchedule, k: int) -> tuple[int, float]:
    """Sample size and tolerance of epoch ``k`` (1-based)."""
    if k < 1:
        raise ValueError("epochs are numbered from 1")
    if sched.K_tol is None:
        raise ValueError("schedule has no tolerance constant yet")
    sizes = sched.sizes(k)
    check_schedule(sched, k)
    return sizes[k - 1], sched.K_tol / math.sqrt(sizes[k - 1])


def check_schedule(sched: RASchedule, upto: int) -> None:
    """Runtime checks that sample sizes and tolerances stay balanced."""
    sizes = sched.sizes(upto)
    K = 1.0 if sched.K_tol is None else sched.K_tol
    c = sched.growth
    running = 0
    for k, n in enumerate(sizes, start=1):
        running += n
        if k > 1:
            eps_prev = K / math.sqrt(sizes[k - 2])
            if eps_prev * math.sqrt(n) < K / math.sqrt(c) * (1 - 1e-12):
                raise AssertionError(f"tolerance decays too fast at epoch {k}")
        if running / n > c / (c - 1) + 1 + 1e-12:
            raise AssertionError(f"sample sizes grow too slowly at epoch {k}")


@dataclass
class SolveReport:
    solver: str
    strategy: str
    u: float
    theta: list
    objective: float
    total_samples: int
    wall_time: float
    epochs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _progress(verbose, **fields):
    if verbose:
        print(" ".join(f"{k}={_fmt(v)}" for k, v in fields.items()), file=sys.stderr)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(float(x)) for x in v)
    return str(v)


def _default_init(constraint, p):
    return 0.0, project_theta(np.full(p, 1.0 / p), constraint)


def run_ra(dist, loss, beta: float, constraint: DecisionConstraint, strategy, sched: RASchedule,
           init=None, rng: np.random.Generator | None = None, window: int = 50,
           max_iter: int = 100_000, verbose: bool = False) -> SolveReport:
    """Retrospective approximation with an IS oracle refreshed after every epoch.

    Points drawn in epoch ``k`` keep the likelihood ratio of the law that drew
    them, and every epoch solves over all points retained so far.
    """
    rng = np.random.default_rng() if rng is None else rng
    start = time.perf_counter()
    u, theta = _default_init(constraint, loss.n_params) if init is None else init
    theta = project_theta(theta, constraint)
    u = float(u)
    law = strategy.oracle(u, theta, rng)
    sizes = sched.sizes()
    check_schedule(sched, len(sizes))
    report = SolveReport("ra", strategy.name, u, theta.tolist(), math.nan, 0, 0.0)
    batch = None
    K = sched.K_tol
    prev_n = 0
    for k, n_k in enumerate(sizes, start=1):
        fresh = law.sample(rng, n_k - prev_n, label=f"epoch{k}")
        batch = fresh if batch is None else batch.concat(fresh)
        prev_n = n_k
        if K is None:
            obj0 = is_objective(batch, loss, u, theta, beta)
            K = 0.05 * max(abs(obj0), 1e-8) * math.sqrt(n_k)
        eps_k = K / math.sqrt(n_k)
        res = solve_subproblem(batch, loss, beta, constraint, (u, theta), eps_k, window, max_iter)
        u, theta = res.u, res.theta
        if constraint.violation(theta) > FEAS_TOL:
            raise AssertionError(f"epoch {k} iterate violates the constraints by {constraint.violation(theta):g}")
        record = {"k": k, "n": n_k, "eps": eps_k, "u": u, "theta": theta.tolist(),
                  "objective": res.objective, "iterations": res.iterations,
                  "converged": res.converged, "law": law.describe()}
        if not res.converged:
            report.warnings.append(f"epoch {k}: iteration cap reached before the tolerance test")
        try:
            law = strategy.oracle(u, theta, rng)
        except Exception as exc:  # keep the previous IS law
            msg = f"epoch {k}: oracle failed ({exc}); keeping previous IS parameters"
            report.warnings.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        report.epochs.append(record)
        _progress(verbose, epoch=k, n=n_k, eps=eps_k, u=u, theta=theta, objective=res.objective,
                  iterations=res.iterations)
    report.u = u
    report.theta = theta.tolist()
    report.objective = report.epochs[-1]["objective"]
    report.total_samples = prev_n
    report.wall_time = time.perf_counter() - start
    return report


def sa_step_size(n, c: float, gamma: float):
    """Robbins-Monro step ``c * n ** -gamma``."""
    return c * np.power(np.asarray(n, dtype=float), -gamma)


def run_sa(dist, loss, beta: float, constraint: DecisionConstraint, strategy, steps: int,
           c: float = 1.0, gamma: float = 0.75, init=None, rng: np.random.Generator | None = None,
           period: int = 100, margin: float = 0.5, verbose: bool = False) -> SolveReport:
    """Importance-weighted stochastic approximation with Polyak-Ruppert averaging.

    The IS law is refreshed every ``period`` steps at the current iterate;
    ``period=1`` refreshes it at every step.  The reported solution is the
    running average of the iterates.
    """
    if not 0.5 < gamma < 1.0:
        raise ValueError("gamma must lie in (1/2, 1)")
    if steps < 1 or period < 1:
        raise ValueError("steps and period must be positive")
    if not c > 0:
        raise ValueError("c must be positive")
    rng = np.random.default_rng() if rng is None else rng
    start = time.perf_counter()
    u, theta = _default_init(constraint, loss.n_params) if init is None else init
    theta = project_theta(theta, constraint)
    u = float(u)
    mu, target, has_target, nonneg, s1 = _kernel_constraint(constraint, loss.n_params)
    sum_u, sum_theta = 0.0, np.zeros(loss.n_params)
    lo, hi = math.inf, -math.inf
    report = SolveReport("sa", strategy.name, u, theta.tolist(), math.nan, 0, 0.0)
    kept = None
    done = 0
    law = strategy.oracle(u, theta, rng)
    while done < steps:
        block = min(period, steps - done)
        batch = law.sample(rng, block, label=f"step{done + 1}")
        F = loss.features(batch.points)
        u, theta, sum_u, sum_theta, lo, hi, did, ok = _kernels.sa_steps(
            F, batch.weights, u, theta, sum_u, sum_theta, done, float(c), float(gamma), float(beta),
            mu, target, has_target, nonneg, s1, lo, hi, float(margin))
        theta = np.asarray(theta)
        done += did
        if not ok:
            report.u, report.theta, report.total_samples = u, theta.tolist(), done
            report.wall_time = time.perf_counter() - start
            raise DivergenceError(f"iterate became non-finite at step {done + 1}", report)
        if constraint.violation(theta) > FEAS_TOL:
            raise AssertionError(f"step {done} iterate violates the constraints")
        kept = batch if kept is None else kept.concat(batch)
        report.epochs.append({"step": done, "u": u, "theta": theta.tolist(),
                              "u_avg": sum_u / done, "theta_avg": (sum_theta / done).tolist(),
                              "law": law.describe()})
        if done < steps:
            try:
                law = strategy.oracle(u, theta, rng)
            except Exception as exc:
                report.warnings.append(f"step {done}: oracle failed ({exc}); keeping previous IS parameters")
        if verbose and (done % (period * 100) == 0 or done == steps):
            _progress(verbose, step=done, u=u, u_avg=sum_u / done, theta_avg=sum_theta / done)
    u_bar = sum_u / steps
    theta_bar = project_theta(sum_theta / steps, constraint)
    report.u = float(u_bar)
    report.theta = theta_bar.tolist()
    report.objective = is_objective(kept, loss, u_bar, theta_bar, beta)
    report.total_samples = steps
    report.wall_time = time.perf_counter() - start
    return report
