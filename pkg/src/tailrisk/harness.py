"""Experiment drivers behind the command line: estimation, optimization, comparison.

Replication ``r`` always draws from the seed stream ``r`` of the root seed, so
different estimators see common random numbers and reruns are reproducible.
Pilot and reference draws use separate streams.
"""
from __future__ import annotations

import csv
import io
import math

import numpy as np

from . import analytic
from .dist import seed_stream
from .risk import (DegenerateBatchError, RiskParams, empirical_var_cvar, mean_cvar_objective,
                   var_cvar_from_losses)
from .solve import RASchedule, project_theta, run_ra, run_sa
from .strategy import make_strategy

PILOT_STREAM = 1_000_000
REFERENCE_STREAM = 2_000_000
PILOT_QUANTILE_N = 100_000
REFERENCE_CHUNK = 1_000_000

ESTIMATE_COLUMNS = ("estimator", "beta", "n", "replications", "mean", "std_error", "analytic")
TRAJECTORY_COLUMNS = ("index", "samples", "u", "theta", "objective", "iterations", "converged")
COMPARE_COLUMNS = ("beta", "strategy", "eps_rel", "confidence", "replications", "n_required",
                   "status", "n_fail_max", "quantile_rel_err", "ratio_saa")


def fmt(v) -> str:
    """Shortest round-trip text for CSV cells."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(fmt(float(x)) for x in v)
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def decision(cfg) -> np.ndarray:
    """Fixed decision for estimation: configured, the bundled optimum, or the projected uniform weights."""
    if cfg.theta is not None:
        return project_theta(cfg.theta, cfg.constraint)
    if cfg.instance is not None and "grid_oracle" in cfg.instance:
        return np.asarray(cfg.instance["grid_oracle"]["theta"], dtype=float)
    p = cfg.loss.n_params
    return project_theta(np.full(p, 1.0 / p), cfg.constraint)


def design_level(cfg, theta, beta: float) -> float:
    """Threshold the IS law is built for: configured ``u``, the exact VaR, or a pilot quantile."""
    if cfg.u is not None:
        return float(cfg.u)
    if analytic.loss_moments(cfg.dist, cfg.loss, theta) is not None:
        return analytic.var(cfg.dist, cfg.loss, theta, beta)
    x = cfg.dist.sample(seed_stream(cfg.seed, PILOT_STREAM + 1), PILOT_QUANTILE_N)
    return float(np.quantile(cfg.loss.value(x, theta), 1.0 - beta))


def build_law(cfg, strat, beta: float, theta):
    """Instantiate a strategy and its sampling law for fixed-decision estimation."""
    strategy = make_strategy(strat.name, cfg.dist, cfg.loss, beta, **strat.options)
    u = design_level(cfg, theta, beta)
    return strategy.oracle(u, theta, seed_stream(cfg.seed, PILOT_STREAM))


def estimate_once(batch, loss, theta, beta: float, lam: float, u: float | None) -> float:
    """One replication: objective at fixed ``u``, else the empirical (mean-)CVaR."""
    risk = RiskParams(beta, lam)
    if u is not None:
        return mean_cvar_objective(batch, loss, u, theta, risk)
    _, c = empirical_var_cvar(batch, loss, theta, beta)
    if lam == 0.0:
        return c
    mean = float(np.where(batch.weights > 0, loss.value(batch.points, theta) * batch.weights, 0.0).mean())
    return lam * mean + (1.0 - lam) * c


def analytic_value(cfg, theta, beta: float, lam: float, u: float | None):
    mom = analytic.loss_moments(cfg.dist, cfg.loss, theta)
    if mom is None:
        return None
    if u is not None:
        tail = analytic.objective(cfg.dist, cfg.loss, u, theta, beta)
    else:
        tail = analytic.cvar(cfg.dist, cfg.loss, theta, beta)
    return lam * mom[0] + (1.0 - lam) * tail


def _within_se(batch, loss, theta, beta, u):
    if u is None:
        u, _ = empirical_var_cvar(batch, loss, theta, beta)
    terms = u + np.maximum(np.asarray(loss.value(batch.points, theta)) - u, 0.0) * batch.weights / beta
    return float(terms.std(ddof=1) / math.sqrt(batch.n)) if batch.n > 1 else math.nan


def cmd_estimate(cfg) -> list[dict]:
    """One row per strategy: replication mean and standard error of the estimate."""
    theta = decision(cfg)
    rows = []
    for strat in cfg.strategies:
        law = build_law(cfg, strat, cfg.beta, theta)
        vals = []
        batch = None
        for r in range(cfg.replications):
            batch = law.sample(seed_stream(cfg.seed, r), cfg.n)
            vals.append(estimate_once(batch, cfg.loss, theta, cfg.beta, cfg.lam, cfg.u))
        vals = np.asarray(vals)
        if cfg.replications > 1:
            se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        else:
            se = _within_se(batch, cfg.loss, theta, cfg.beta, cfg.u)
        rows.append({"estimator": strat.label, "beta": cfg.beta, "n": cfg.n,
                     "replications": cfg.replications, "mean": float(vals.mean()), "std_error": se,
                     "analytic": analytic_value(cfg, theta, cfg.beta, cfg.lam, cfg.u)})
    return rows


def ra_schedule(options: dict) -> RASchedule:
    keys = ("mode", "n1", "growth", "K_tol", "max_epochs")
    return RASchedule(**{k: options[k] for k in keys if k in options})


def cmd_optimize(cfg):
    """Run the configured solver; returns ``(trajectory rows, report dict)``."""
    if cfg.lam != 0.0:
        raise ValueError("the solvers minimize CVaR only; lambda must be 0 for optimize")
    if len(cfg.strategies) != 1:
        raise ValueError("optimize takes exactly one strategy")
    strat = cfg.strategies[0]
    strategy = make_strategy(strat.name, cfg.dist, cfg.loss, cfg.beta, **strat.options)
    rng = seed_stream(cfg.seed, 0)
    opts = dict(cfg.solver.options)
    if cfg.solver.name == "ra":
        extra = {k: int(opts[k]) for k in ("window", "max_iter") if k in opts}
        rep = run_ra(cfg.dist, cfg.loss, cfg.beta, cfg.constraint, strategy, ra_schedule(opts),
                     rng=rng, verbose=cfg.verbose, **extra)
        rows = [{"index": e["k"], "samples": e["n"], "u": e["u"], "theta": e["theta"],
                 "objective": e["objective"], "iterations": e["iterations"], "converged": e["converged"]}
                for e in rep.epochs]
    else:
        steps = int(opts.pop("steps", 100_000))
        rep = run_sa(cfg.dist, cfg.loss, cfg.beta, cfg.constraint, strategy, steps, rng=rng,
                     verbose=cfg.verbose, **opts)
        rows = [{"index": i, "samples": e["step"], "u": e["u_avg"], "theta": e["theta_avg"]}
                for i, e in enumerate(rep.epochs, start=1)]
        rows[-1]["objective"] = rep.objective
    report = rep.to_dict()
    if cfg.instance is not None and "grid_oracle" in cfg.instance and cfg.beta == cfg.instance.get("beta"):
        ref = cfg.instance["grid_oracle"]["objective"]
        report["reference"] = {"name": cfg.instance.get("name"), "grid_oracle": ref,
                               "relative_error": (rep.objective - ref) / abs(ref)}
    return rows, report


def reference_cvar(cfg, theta, beta: float, index: int) -> float:
    """Exact CVaR when available, else a large plain Monte Carlo run."""
    exact = analytic_value(cfg, theta, beta, 0.0, None)
    if exact is not None:
        return float(exact)
    rng = seed_stream(cfg.seed, REFERENCE_STREAM + index)
    parts, left = [], cfg.reference_n
    while left > 0:
        m = min(left, REFERENCE_CHUNK)
        parts.append(np.asarray(cfg.loss.value(cfg.dist.sample(rng, m), theta)))
        left -= m
    losses = np.concatenate(parts)
    return var_cvar_from_losses(losses, np.ones_like(losses), beta)[1]


class _Prober:
    """Cached ``(1 - alpha)``-quantile of the relative error at sample size ``n``."""

    def __init__(self, cfg, law, theta, beta, ref):
        self.cfg, self.law, self.theta, self.beta, self.ref = cfg, law, theta, beta, ref
        self.cache = {}

    def quantile(self, n: int) -> float:
        if n not in self.cache:
            errs = np.empty(self.cfg.replications)
            for r in range(self.cfg.replications):
                batch = self.law.sample(seed_stream(self.cfg.seed, r), n)
                try:
                    est = estimate_once(batch, self.cfg.loss, self.theta, self.beta, 0.0, None)
                    errs[r] = min(abs(est - self.ref) / abs(self.ref), 1.0)
                except DegenerateBatchError:
                    errs[r] = 1.0
            self.cache[n] = float(np.quantile(errs, 1.0 - self.cfg.alpha, method="inverted_cdf"))
        return self.cache[n]


def n_required_search(passes, start: int, n_max: int, rel_tol: float = 0.05):
    """Doubling from ``start`` to bracket, then bisection.

    Returns ``(n, largest failing n probed, status)``; ``n`` is None when the
    budget ``n_max`` runs out first.  If ``start`` already passes it is
    returned as is, so callers pass a known lower bound.
    """
    n, fail = min(max(1, int(start)), n_max), 0
    while not passes(n):
        fail = n
        if n >= n_max:
            return None, fail, "budget"
        n = min(2 * n, n_max)
    lo, hi = fail, n
    if lo == 0:
        return hi, 0, "ok"
    while hi - lo > max(1, rel_tol * hi):
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi, lo, "ok"


def cmd_compare(cfg) -> list[dict]:
    """Sample requirement for each tail level, strategy and target relative error."""
    if cfg.lam != 0.0:
        raise ValueError("compare measures CVaR; lambda must be 0")
    theta = decision(cfg)
    rows = []
    for bi, beta in enumerate(cfg.betas):
        ref = reference_cvar(cfg, theta, beta, bi)
        found = {}
        for strat in cfg.strategies:
            prober = _Prober(cfg, build_law(cfg, strat, beta, theta), theta, beta, ref)
            start = 1
            for eps in cfg.eps_rel:  # sorted from loose to tight
                n, fail, status = n_required_search(lambda m: prober.quantile(m) <= eps, start, cfg.n_max)
                if n is not None:
                    start = n
                found[(strat.label, eps)] = n
                rows.append({"beta": beta, "strategy": strat.label, "eps_rel": eps,
                             "confidence": 1.0 - cfg.alpha, "replications": cfg.replications,
                             "n_required": n, "status": status, "n_fail_max": fail,
                             "quantile_rel_err": prober.quantile(n if n is not None else fail)})
                if n is None:
                    break
        saa = [s.label for s in cfg.strategies if s.name == "saa"]
        for row in rows:
            if row["beta"] != beta or not saa:
                continue
            base = found.get((saa[0], row["eps_rel"]))
            if base is not None and row["n_required"] is not None:
                row["ratio_saa"] = base / row["n_required"]
    _check_monotone(rows)
    return rows


def _check_monotone(rows):
    last = {}
    for row in rows:
        key = (row["beta"], row["strategy"])
        n = row["n_required"]
        if n is None:
            continue
        if key in last and n < last[key]:
            raise AssertionError(f"n_required decreased for {key} at eps_rel={row['eps_rel']}")
        last[key] = n
