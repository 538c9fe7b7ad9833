# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``; same signatures and semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, log, log1p, fabs, isfinite, NAN
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double ZERO_NORM = 1e-12


cdef void _proj_simplex(double* y, double* out, double* work, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double v, css, tau, cand
    for i in range(p):
        work[i] = y[i]
    # insertion sort, descending; p is small
    for i in range(1, p):
        v = work[i]
        j = i - 1
        while j >= 0 and work[j] < v:
            work[j + 1] = work[j]
            j -= 1
        work[j + 1] = v
    css = 0.0
    tau = 0.0
    for k in range(p):
        css += work[k]
        cand = (css - 1.0) / (k + 1)
        if work[k] - cand > 0:
            tau = cand
    for i in range(p):
        v = y[i] - tau
        out[i] = v if v > 0.0 else 0.0


cdef void _proj_base(double* y, double* out, double* work, Py_ssize_t p,
                     bint nonneg, bint sum_to_one) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s
    if nonneg and sum_to_one:
        _proj_simplex(y, out, work, p)
    elif nonneg:
        for i in range(p):
            out[i] = y[i] if y[i] > 0.0 else 0.0
    elif sum_to_one:
        s = 0.0
        for i in range(p):
            s += y[i]
        s = (s - 1.0) / p
        for i in range(p):
            out[i] = y[i] - s
    else:
        for i in range(p):
            out[i] = y[i]


cdef int _project(double* y, double* out, double* mu, double target, bint has_target,
                  bint nonneg, bint sum_to_one, double tol, long max_rounds,
                  double* buf, Py_ssize_t p) noexcept nogil:
    # buf holds 4*p doubles: shifted point, trial projection, work, scaled mu; returns 0 if the target is unreachable
    cdef double* shifted = buf
    cdef double* z = buf + p
    cdef double* work = buf + 2 * p
    cdef double* mus = buf + 3 * p
    cdef Py_ssize_t i
    cdef long r
    cdef double mu2 = 0.0, f_lo, f_hi, f, lo, hi, lam, slack, scale
    cdef int side = 0
    _proj_base(y, out, work, p, nonneg, sum_to_one)
    if not has_target:
        return 1
    # rescaling leaves the halfspace unchanged and keeps mu . mu away from underflow
    scale = 0.0
    for i in range(p):
        if fabs(mu[i]) > scale:
            scale = fabs(mu[i])
    target = target / scale
    slack = tol * (1.0 + fabs(target))
    f_lo = -target
    for i in range(p):
        mus[i] = mu[i] / scale
        f_lo += mus[i] * out[i]
        mu2 += mus[i] * mus[i]
    if f_lo >= -slack:
        return 1
    lo = 0.0
    hi = -f_lo / mu2
    f_hi = -1.0
    for r in range(2000):
        for i in range(p):
            shifted[i] = y[i] + hi * mus[i]
        _proj_base(shifted, out, work, p, nonneg, sum_to_one)
        f_hi = -target
        for i in range(p):
            f_hi += mus[i] * out[i]
        if f_hi >= 0.0:
            break
        lo = hi
        f_lo = f_hi
        hi = 2.0 * hi
    if f_hi < 0.0:
        return 0
    for r in range(max_rounds):
        if f_hi <= slack or hi - lo <= 1e-15 * (hi if hi > 1.0 else 1.0):
            break
        lam = hi - f_hi * (hi - lo) / (f_hi - f_lo)
        if not (lo < lam < hi):
            lam = 0.5 * (lo + hi)
        for i in range(p):
            shifted[i] = y[i] + lam * mus[i]
        _proj_base(shifted, z, work, p, nonneg, sum_to_one)
        f = -target
        for i in range(p):
            f += mus[i] * z[i]
        if f >= 0.0:
            hi = lam
            f_hi = f
            for i in range(p):
                out[i] = z[i]
            if side == 1:
                f_lo *= 0.5
            side = 1
        else:
            lo = lam
            f_lo = f
            if side == -1:
                f_hi *= 0.5
            side = -1
    return 1


def project(theta, mu, double target, bint has_target, bint nonneg, bint sum_to_one,
            double tol=1e-12, long max_rounds=200):
    cdef cnp.ndarray[double, ndim=1] y = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t p = y.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(p)
    cdef cnp.ndarray[double, ndim=1] m
    if mu is None:
        m = np.zeros(p)
    else:
        m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double* buf = <double*> malloc(4 * p * sizeof(double))
    cdef int ok
    try:
        ok = _project(&y[0], &out[0], &m[0], target, has_target, nonneg, sum_to_one,
                      tol, max_rounds, buf, p)
    finally:
        free(buf)
    if not ok:
        raise ValueError("return target is unreachable")
    return out


cdef void _objective_subgrad(const double[:, :, ::1] F, const double[::1] w, double u,
                             double* theta, double beta, double* obj, double* gu,
                             double* gtheta) noexcept nogil:
    cdef Py_ssize_t n = F.shape[0], M = F.shape[1], p = F.shape[2]
    cdef Py_ssize_t i, m, k, best_m
    cdef double v, ell, acc_obj = 0.0, acc_w = 0.0
    cdef double scale = 1.0 / (n * beta)
    for k in range(p):
        gtheta[k] = 0.0
    for i in range(n):
        best_m = 0
        ell = 0.0
        for m in range(M):
            v = 0.0
            for k in range(p):
                v += F[i, m, k] * theta[k]
            if m == 0 or v > ell:
                ell = v
                best_m = m
        if ell >= u:
            if ell > u:
                acc_obj += w[i] * (ell - u)
            acc_w += w[i]
            for k in range(p):
                gtheta[k] += w[i] * F[i, best_m, k]
    obj[0] = u + scale * acc_obj
    gu[0] = 1.0 - scale * acc_w
    for k in range(p):
        gtheta[k] *= scale


def objective_subgrad(F, w, double u, theta, double beta):
    cdef const double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t p = Fv.shape[2]
    cdef cnp.ndarray[double, ndim=1] g = np.empty(p)
    cdef double obj, gu
    _objective_subgrad(Fv, wv, u, &th[0], beta, &obj, &gu, &g[0])
    return obj, gu, g


def psg_minimize(F, w, double beta, double u0, theta0, mu, double target, bint has_target,
                 bint nonneg, bint sum_to_one, double eps, long window=50, long max_iter=100000):
    cdef const double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t p = Fv.shape[2]
    cdef cnp.ndarray[double, ndim=1] theta = project(theta0, mu, target, has_target, nonneg, sum_to_one)
    cdef cnp.ndarray[double, ndim=1] best_theta = theta.copy()
    cdef cnp.ndarray[double, ndim=1] g = np.empty(p)
    cdef cnp.ndarray[double, ndim=1] trial = np.empty(p)
    cdef cnp.ndarray[double, ndim=1] m
    if mu is None:
        m = np.zeros(p)
    else:
        m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double* buf = <double*> malloc(5 * p * sizeof(double))
    cdef double u = u0, obj, gu, best_obj, best_u, a0, ref, step, gn
    cdef long it = 0, stall = 0
    cdef bint converged = False
    cdef Py_ssize_t k
    try:
        with nogil:
            _objective_subgrad(Fv, wv, u, &theta[0], beta, &obj, &gu, &g[0])
            best_obj = obj
            best_u = u
            # scale by the feasible part of the first step; pinned coordinates do not count
            for k in range(p):
                trial[k] = theta[k] - g[k]
            _project(&trial[0], &best_theta[0], &m[0], target, has_target, nonneg, sum_to_one,
                     1e-12, 200, buf, p)
            gn = gu * gu
            for k in range(p):
                gn += (theta[k] - best_theta[k]) * (theta[k] - best_theta[k])
                best_theta[k] = theta[k]
            a0 = 1.0 / (1.0 + sqrt(gn))
            ref = best_obj
            while it < max_iter:
                it += 1
                step = a0 / sqrt(<double> it)
                u = u - step * gu
                for k in range(p):
                    trial[k] = theta[k] - step * g[k]
                _project(&trial[0], &theta[0], &m[0], target, has_target, nonneg, sum_to_one,
                         1e-12, 200, buf, p)
                _objective_subgrad(Fv, wv, u, &theta[0], beta, &obj, &gu, &g[0])
                if obj < best_obj:
                    best_obj = obj
                    best_u = u
                    for k in range(p):
                        best_theta[k] = theta[k]
                if best_obj <= ref - eps:
                    ref = best_obj
                    stall = 0
                else:
                    stall += 1
                    if stall >= window:
                        converged = True
                        break
    finally:
        free(buf)
    return best_u, best_theta, best_obj, it, converged


def sa_steps(F, w, double u, theta, double sum_u, sum_theta, long n0, double c, double gamma,
             double beta, mu, double target, bint has_target, bint nonneg, bint sum_to_one,
             double lo, double hi, double margin):
    cdef const double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t N = Fv.shape[0], M = Fv.shape[1], p = Fv.shape[2]
    cdef cnp.ndarray[double, ndim=1] th = np.array(theta, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] sth = np.array(sum_theta, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] trial = np.empty(p)
    cdef cnp.ndarray[double, ndim=1] m
    if mu is None:
        m = np.zeros(p)
    else:
        m = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double* buf = <double*> malloc(5 * p * sizeof(double))
    cdef double inv_beta = 1.0 / beta, v, ell, step, new_u, pad
    cdef Py_ssize_t j, mm, k, best_m
    cdef bint ok = True, finite
    cdef long done = N
    try:
        with nogil:
            for j in range(N):
                best_m = 0
                ell = 0.0
                for mm in range(M):
                    v = 0.0
                    for k in range(p):
                        v += Fv[j, mm, k] * th[k]
                    if mm == 0 or v > ell:
                        ell = v
                        best_m = mm
                if ell < lo:
                    lo = ell
                if ell > hi:
                    hi = ell
                step = c * pow(<double> (n0 + j + 1), -gamma) * wv[j]
                finite = True
                if ell >= u:
                    new_u = u - step * (1.0 - inv_beta)
                    for k in range(p):
                        trial[k] = th[k] - (step * inv_beta) * Fv[j, best_m, k]
                        if not isfinite(trial[k]):
                            finite = False
                else:
                    new_u = u - step
                    for k in range(p):
                        trial[k] = th[k]
                if not (finite and isfinite(new_u)):
                    ok = False
                    done = j
                    break
                _project(&trial[0], &th[0], &m[0], target, has_target, nonneg, sum_to_one,
                         1e-12, 200, buf, p)
                pad = margin * (1.0 + hi - lo)
                if new_u < lo - pad:
                    new_u = lo - pad
                if new_u > hi + pad:
                    new_u = hi + pad
                u = new_u
                sum_u += u
                for k in range(p):
                    sth[k] += th[k]
    finally:
        free(buf)
    return u, th, sum_u, sth, lo, hi, done, ok


def selfstruct_map(X, double s, double rho):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], d = Xv.shape[1], i, k
    cdef cnp.ndarray[double, ndim=2] Z = np.empty((n, d))
    cdef cnp.ndarray[double, ndim=1] logJ = np.empty(n)
    cdef double[:, ::1] Zv = Z
    cdef double[::1] Lv = logJ
    cdef double top, a, denom, kap, ksum, jt, jmax, jlog, log_s = log(s)
    with nogil:
        for i in range(n):
            top = 0.0
            for k in range(d):
                a = fabs(Xv[i, k])
                if a > top:
                    top = a
            if top <= ZERO_NORM:
                for k in range(d):
                    Zv[i, k] = Xv[i, k]
                Lv[i] = NAN
                continue
            denom = log1p(top)
            ksum = 0.0
            jlog = 0.0
            jmax = 0.0
            for k in range(d):
                a = fabs(Xv[i, k])
                kap = log1p(a) / (rho * denom)
                ksum += kap
                Zv[i, k] = Xv[i, k] * pow(s, kap)
                jt = 1.0 + (log_s / (rho * denom)) * (a / (1.0 + a))
                jlog += log(fabs(jt))
                # the row of the largest coordinate only has its diagonal entry
                if a == top and jmax == 0.0:
                    jmax = fabs(jt)
            Lv[i] = jlog - log(jmax) + ksum * log_s
    return Z, logJ
