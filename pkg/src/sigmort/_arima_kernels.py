"""Compiled inner loops for ARIMA estimation.

CSS residuals, the exact ARMA likelihood via a Kalman filter, and a small
BFGS minimiser with forward-difference gradients. Everything runs inside
numba so a full order search costs milliseconds per series.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PENALTY = 1e10


@njit(cache=True)
def pacf_to_coefs(raw):
    r = np.tanh(raw)
    a = r.copy()
    for j in range(1, r.size):
        prev = a[:j].copy()
        for i in range(j):
            a[i] = prev[i] - r[j] * prev[j - 1 - i]
    return a


@njit(cache=True)
def unpack(theta, p, q):
    ar = pacf_to_coefs(theta[:p])
    ma = -pacf_to_coefs(theta[p : p + q])
    beta = theta[p + q :].copy()
    return ar, ma, beta


@njit(cache=True)
def css_residuals(w, ar, ma):
    p, q, n = ar.size, ma.size, w.size
    e = np.zeros(n)
    for t in range(p, n):
        v = w[t]
        for i in range(1, p + 1):
            v -= ar[i - 1] * w[t - i]
        for j in range(1, q + 1):
            if t - j >= p:
                v -= ma[j - 1] * e[t - j]
        e[t] = v
    return e


@njit(cache=True)
def _solve_inplace(M, b):
    # Gaussian elimination with partial pivoting; returns False if singular
    n = b.size
    for c in range(n):
        piv = c
        best = abs(M[c, c])
        for r in range(c + 1, n):
            if abs(M[r, c]) > best:
                best = abs(M[r, c])
                piv = r
        if best < 1e-14:
            return False
        if piv != c:
            for k in range(n):
                tmp = M[c, k]
                M[c, k] = M[piv, k]
                M[piv, k] = tmp
            tmp = b[c]
            b[c] = b[piv]
            b[piv] = tmp
        for r in range(c + 1, n):
            f = M[r, c] / M[c, c]
            if f != 0.0:
                for k in range(c, n):
                    M[r, k] -= f * M[c, k]
                b[r] -= f * b[c]
    for c in range(n - 1, -1, -1):
        s = b[c]
        for k in range(c + 1, n):
            s -= M[c, k] * b[k]
        b[c] = s / M[c, c]
    return True


@njit(cache=True)
def _kalman_filter(w, ar, ma):
    """Run the filter; returns (ok, sum log F, sum v^2/F, T, one-step-ahead state)."""
    p, q, n = ar.size, ma.size, w.size
    r = max(p, q + 1)
    R = np.zeros(r)
    R[0] = 1.0
    for j in range(q):
        R[j + 1] = ma[j]
    # transition: AR coefficients in the first column, ones on the superdiagonal
    T = np.zeros((r, r))
    for i in range(p):
        T[i, 0] = ar[i]
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    a = np.zeros(r)
    # stationary covariance: (I - T kron T) vec(P) = vec(R R')
    rr = r * r
    M = np.eye(rr)
    rhs = np.empty(rr)
    for i in range(r):
        for j in range(r):
            rhs[i * r + j] = R[i] * R[j]
            for k in range(r):
                for m in range(r):
                    M[i * r + j, k * r + m] -= T[i, k] * T[j, m]
    if not _solve_inplace(M, rhs):
        return False, 0.0, 0.0, T, a
    P = rhs.reshape(r, r).copy()
    a_new = np.zeros(r)
    TP0 = np.zeros(r)
    TP = np.zeros((r, r))
    sumlog = 0.0
    ss = 0.0
    for t in range(n):
        F = P[0, 0]
        if not F > 0.0:
            return False, 0.0, 0.0, T, a
        v = w[t] - a[0]
        sumlog += np.log(F)
        ss += v * v / F
        for i in range(r):
            s = 0.0
            for k in range(r):
                s += T[i, k] * P[k, 0]
            TP0[i] = s
        for i in range(r):
            s = 0.0
            for k in range(r):
                s += T[i, k] * a[k]
            a_new[i] = s + TP0[i] * v / F
        for i in range(r):
            a[i] = a_new[i]
        for i in range(r):
            for j in range(r):
                s = 0.0
                for k in range(r):
                    s += T[i, k] * P[k, j]
                TP[i, j] = s
        for i in range(r):
            for j in range(r):
                s = 0.0
                for k in range(r):
                    s += TP[i, k] * T[j, k]
                P[i, j] = s + R[i] * R[j] - TP0[i] * TP0[j] / F
    return True, sumlog, ss, T, a


@njit(cache=True)
def kalman_loglik(w, ar, ma):
    """Exact ARMA log-likelihood, innovation variance profiled out. Returns (ll, sigma2)."""
    n = w.size
    ok, sumlog, ss, _, _ = _kalman_filter(w, ar, ma)
    if not ok:
        return -np.inf, np.nan
    sigma2 = ss / n
    if not sigma2 > 0.0:
        return -np.inf, np.nan
    ll = -0.5 * (n * np.log(2.0 * np.pi * sigma2) + sumlog + n)
    return ll, sigma2


@njit(cache=True)
def kalman_forecast(w, ar, ma, h):
    """Exact minimum-MSE forecasts of a zero-mean ARMA series for horizons ``1..h``.

    Unlike the conditional-residual recursion, the filtered state stays
    correct when the MA polynomial is close to non-invertible.
    """
    out = np.full(h, np.nan)
    ok, _, _, T, a = _kalman_filter(w, ar, ma)
    if not ok:
        return out
    for j in range(h):
        out[j] = a[0]
        a = T @ a
    return out


@njit(cache=True)
def remove_regression(yd, X, beta):
    w = yd.copy()
    for j in range(X.shape[1]):
        w -= X[:, j] * beta[j]
    return w


@njit(cache=True)
def css_value(theta, yd, X, p, q, scale):
    ar, ma, beta = unpack(theta, p, q)
    e = css_residuals(remove_regression(yd, X, beta), ar, ma)
    total = 0.0
    for t in range(p, yd.size):
        total += e[t] * e[t]
    return total / (yd.size - p) / (scale * scale)


@njit(cache=True)
def negll_value(theta, yd, X, p, q):
    for i in range(p):
        # unit-root boundary: stationary covariance does not exist
        if abs(np.tanh(theta[i])) > 1.0 - 1e-9:
            return PENALTY
    ar, ma, beta = unpack(theta, p, q)
    ll, _ = kalman_loglik(remove_regression(yd, X, beta), ar, ma)
    if not np.isfinite(ll):
        return PENALTY
    return -ll / yd.size


@njit(cache=True)
def _value(mode, theta, yd, X, p, q, scale):
    if mode == 0:
        return css_value(theta, yd, X, p, q, scale)
    return negll_value(theta, yd, X, p, q)


@njit(cache=True)
def _gradient(mode, theta, f0, yd, X, p, q, scale):
    g = np.empty(theta.size)
    for i in range(theta.size):
        h = 1.49e-8 * max(1.0, abs(theta[i]))
        th = theta.copy()
        th[i] += h
        g[i] = (_value(mode, th, yd, X, p, q, scale) - f0) / h
    return g


@njit(cache=True)
def bfgs(mode, theta0, yd, X, p, q, scale, maxiter, xtol, gtol):
    """Quasi-Newton minimisation with Armijo backtracking.

    ``mode`` 0 minimises the CSS objective, 1 the negative exact log-likelihood.
    Returns ``(theta, value, status)``; status 0 converged, 1 iteration limit,
    2 line search could not make progress.
    """
    n = theta0.size
    theta = theta0.copy()
    f = _value(mode, theta, yd, X, p, q, scale)
    g = _gradient(mode, theta, f, yd, X, p, q, scale)
    H = np.eye(n)
    for it in range(maxiter):
        gmax = 0.0
        for i in range(n):
            gmax = max(gmax, abs(g[i]))
        if gmax < gtol:
            return theta, f, 0
        d = -(H @ g)
        slope = 0.0
        for i in range(n):
            slope += g[i] * d[i]
        if slope >= 0.0:
            H = np.eye(n)
            d = -g.copy()
            slope = -(g @ g)
        step = 1.0
        accepted = False
        while step > 1e-12:
            trial = theta + step * d
            f_trial = _value(mode, trial, yd, X, p, q, scale)
            if f_trial <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return theta, f, 2
        s = trial - theta
        g_new = _gradient(mode, trial, f_trial, yd, X, p, q, scale)
        yv = g_new - g
        sy = s @ yv
        smax = 0.0
        tmax = 0.0
        for i in range(n):
            smax = max(smax, abs(s[i]))
            tmax = max(tmax, abs(trial[i]))
        theta, f, g = trial, f_trial, g_new
        if smax <= xtol * (1.0 + tmax):
            return theta, f, 0
        if sy > 1e-12:
            if it == 0:
                H = np.eye(n) * (sy / (yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            yHy = yv @ Hy
            H = H + ((sy + yHy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
    return theta, f, 1
