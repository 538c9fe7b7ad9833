"""Pure numpy/Python implementations of the hot kernels.

These are the fallback when the compiled ``_ckernels`` extension is missing,
and the reference the compiled versions are tested against.  Signatures must
stay in sync with ``_ckernels.pyx``.

Losses arrive as feature tensors ``F`` of shape ``(n, M, p)`` with
``l(z_i, theta) = max_m theta . F[i, m]``; weights ``w`` are plain likelihood
ratios (``exp`` of the log-weights, zero for out-of-support points).
"""
from __future__ import annotations

import math

import numpy as np

ZERO_NORM = 1e-12


def project_simplex(y: np.ndarray) -> np.ndarray:
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, y.shape[0] + 1)
    k = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(y - css[k] / (k + 1), 0.0)


def _project_base(y, nonneg, sum_to_one):
    if nonneg and sum_to_one:
        return project_simplex(y)
    if nonneg:
        return np.maximum(y, 0.0)
    if sum_to_one:
        return y - (y.sum() - 1.0) / y.shape[0]
    return y.copy()


def project(theta, mu, target, has_target, nonneg, sum_to_one, tol=1e-12, max_rounds=200):
    """Euclidean projection onto base set ∩ {mu . theta >= target}.

    The projection is ``P_base(y + lam mu)`` for the smallest ``lam >= 0`` with
    ``mu . P_base(y + lam mu) >= target``; the left side is nondecreasing and
    piecewise linear in ``lam``, so a bracketed Illinois search finds it in a
    few steps.  The returned point is always on the feasible side.
    """
    y = np.asarray(theta, dtype=float)
    base = _project_base(y, nonneg, sum_to_one)
    if not has_target:
        return base
    # rescaling leaves the halfspace unchanged and keeps mu . mu away from underflow
    mu = np.asarray(mu, dtype=float)
    scale = float(np.max(np.abs(mu)))
    mu, target = mu / scale, target / scale
    slack = tol * (1.0 + abs(target))
    f_lo = float(mu @ base) - target
    if f_lo >= -slack:
        return base
    mu2 = float(mu @ mu)
    lo, hi = 0.0, -f_lo / mu2
    for _ in range(2000):
        z = _project_base(y + hi * mu, nonneg, sum_to_one)
        f_hi = float(mu @ z) - target
        if f_hi >= 0.0:
            break
        lo, f_lo, hi = hi, f_hi, 2.0 * hi
    else:
        raise ValueError("return target is unreachable")
    best = z
    side = 0
    for _ in range(max_rounds):
        if f_hi <= slack or hi - lo <= 1e-15 * max(1.0, hi):
            break
        lam = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not lo < lam < hi:
            lam = 0.5 * (lo + hi)
        z = _project_base(y + lam * mu, nonneg, sum_to_one)
        f = float(mu @ z) - target
        if f >= 0.0:
            hi, f_hi, best = lam, f, z
            if side == 1:
                f_lo *= 0.5
            side = 1
        else:
            lo, f_lo = lam, f
            if side == -1:
                f_hi *= 0.5
            side = -1
    return best


def objective_subgrad(F, w, u, theta, beta):
    """Weighted CVaR objective and a subgradient in ``(u, theta)``."""
    n = F.shape[0]
    vals = F @ theta
    idx = np.argmax(vals, axis=1)
    rows = np.arange(n)
    ell = vals[rows, idx]
    active = ell >= u
    scale = 1.0 / (n * beta)
    excess = np.where(ell > u, ell - u, 0.0)
    obj = u + scale * float(np.sum(w * excess))
    wa = np.where(active, w, 0.0)
    gu = 1.0 - scale * float(np.sum(wa))
    gtheta = scale * (wa @ F[rows, idx])
    return obj, gu, gtheta


def psg_minimize(F, w, beta, u0, theta0, mu, target, has_target, nonneg, sum_to_one,
                 eps, window=50, max_iter=100_000):
    """Projected subgradient descent with steps ``a0 / sqrt(t)``.

    Returns ``(u, theta, objective, iterations, converged)`` for the best
    iterate seen; ``converged`` is False when ``max_iter`` ran out first.
    """
    F = np.ascontiguousarray(F, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    u = float(u0)
    theta = project(np.asarray(theta0, dtype=float), mu, target, has_target, nonneg, sum_to_one)
    obj, gu, gtheta = objective_subgrad(F, w, u, theta, beta)
    best_obj, best_u, best_theta = obj, u, theta.copy()
    # scale by the feasible part of the first step; pinned coordinates do not count
    d = theta - project(theta - gtheta, mu, target, has_target, nonneg, sum_to_one)
    a0 = 1.0 / (1.0 + math.sqrt(gu * gu + float(d @ d)))
    ref = best_obj
    stall = 0
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        step = a0 / math.sqrt(it)
        u = u - step * gu
        theta = project(theta - step * gtheta, mu, target, has_target, nonneg, sum_to_one)
        obj, gu, gtheta = objective_subgrad(F, w, u, theta, beta)
        if obj < best_obj:
            best_obj, best_u, best_theta = obj, u, theta.copy()
        if best_obj <= ref - eps:
            ref = best_obj
            stall = 0
        else:
            stall += 1
            if stall >= window:
                converged = True
                break
    return best_u, best_theta, best_obj, it, converged


def sa_steps(F, w, u, theta, sum_u, sum_theta, n0, c, gamma, beta,
             mu, target, has_target, nonneg, sum_to_one, lo, hi, margin):
    """Run ``len(w)`` Robbins-Monro steps on pre-drawn samples.

    Returns ``(u, theta, sum_u, sum_theta, lo, hi, steps_done, ok)``; ``ok`` is
    False if the iterate became non-finite (state is left at the last finite step).
    """
    theta = np.array(theta, dtype=float)
    sum_theta = np.array(sum_theta, dtype=float)
    inv_beta = 1.0 / beta
    for j in range(w.shape[0]):
        n = n0 + j + 1
        vals = F[j] @ theta
        m = int(np.argmax(vals))
        ell = float(vals[m])
        lo = min(lo, ell)
        hi = max(hi, ell)
        step = c * n ** (-gamma) * w[j]
        if ell >= u:
            new_u = u - step * (1.0 - inv_beta)
            new_theta = theta - (step * inv_beta) * F[j, m]
        else:
            new_u = u - step
            new_theta = theta
        if not (math.isfinite(new_u) and np.all(np.isfinite(new_theta))):
            return u, theta, sum_u, sum_theta, lo, hi, j, False
        new_theta = project(new_theta, mu, target, has_target, nonneg, sum_to_one)
        pad = margin * (1.0 + hi - lo)
        u = min(max(new_u, lo - pad), hi + pad)
        theta = new_theta
        sum_u += u
        sum_theta += theta
    return u, theta, sum_u, sum_theta, lo, hi, w.shape[0], True


def selfstruct_map(X, s, rho):
    """Self-structuring map and its log-Jacobian, row by row.

    Rows with sup-norm <= ``ZERO_NORM`` are returned unchanged with a NaN
    log-Jacobian; callers resample them.
    """
    X = np.asarray(X, dtype=float)
    absx = np.abs(X)
    top = absx.max(axis=1)
    degenerate = top <= ZERO_NORM
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = np.log1p(top)
        kappa = np.log1p(absx) / (rho * denom[:, None])
        kappa[degenerate] = 1.0 / rho
        Z = X * np.power(s, kappa)
        log_s = math.log(s)
        jt = 1.0 + (log_s / (rho * denom))[:, None] * (absx / (1.0 + absx))
        # the row of the largest coordinate only has its diagonal entry
        lead = np.take_along_axis(jt, absx.argmax(axis=1)[:, None], axis=1)[:, 0]
        logJ = np.log(np.abs(jt)).sum(axis=1) - np.log(np.abs(lead)) + kappa.sum(axis=1) * log_s
    Z[degenerate] = X[degenerate]
    logJ[degenerate] = np.nan
    return Z, logJ
