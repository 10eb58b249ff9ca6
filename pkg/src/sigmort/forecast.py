"""Univariate ARIMA fitting, point forecasting and curve reconstruction.

Candidate models are ARIMA(p, d, q) with p, q, d <= 2. With ``d = 0`` a mean is
always estimated and ``drift`` adds a linear time trend; with ``d = 1`` drift
is the mean of the differenced series; ``d = 2`` carries no deterministic
terms. Each candidate is estimated by conditional sum of squares, then refined
by maximising the exact Gaussian likelihood of the differenced series, and
the candidate with smallest AICc is selected.

AR and MA coefficients are optimised through the partial-autocorrelation
reparameterisation, so every estimate is stationary and invertible.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from sigmort import _arima_kernels as _k
from sigmort.errors import DataError, NumericError

MIN_LENGTH = 10
ROOT_MARGIN = 1e-6
# order search skips fits with roots this close to the unit circle (near-cancelling
# or boundary AR/MA pairs); ROOT_MARGIN remains the hard validity check
SELECTION_ROOT_MARGIN = 1e-2
AICC_TIE = 1e-6
START_CLIP = 2.5  # |partial autocorrelation| <= tanh(2.5) ~ 0.987 at the likelihood start
OPT_OPTIONS = {"xrtol": 1e-8, "gtol": 1e-6, "maxiter": 500}


@dataclass(frozen=True)
class ArimaModel:
    order: tuple[int, int, int]
    drift: bool = False
    ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intercept: float = 0.0  # mean level, only for d == 0
    drift_coef: float = 0.0
    sigma2: float = 0.0
    loglik: float = 0.0
    aicc: float = 0.0
    nobs: int = 0
    trivial: bool = False

    def __post_init__(self) -> None:
        p, d, q = self.order
        object.__setattr__(self, "ar", np.asarray(self.ar, dtype=float).reshape(-1))
        object.__setattr__(self, "ma", np.asarray(self.ma, dtype=float).reshape(-1))
        if self.ar.size != p or self.ma.size != q:
            raise DataError(f"order {self.order} does not match {self.ar.size} AR / {self.ma.size} MA coefficients")
        if self.drift and d > 1:
            raise DataError("drift is only allowed with d <= 1")

    @property
    def n_params(self) -> int:
        p, d, q = self.order
        return p + q + _n_regressors(d, self.drift) + 1

    def describe(self) -> str:
        p, d, q = self.order
        tail = " with drift" if self.drift else ""
        return f"ARIMA({p},{d},{q}){tail}"


def _n_regressors(d: int, drift: bool) -> int:
    if d == 0:
        return 2 if drift else 1
    return 1 if (d == 1 and drift) else 0


def pacf_to_coefs(raw) -> np.ndarray:
    """Map unconstrained values to coefficients of a stationary ``1 - a_1 B - ...``."""
    return _k.pacf_to_coefs(np.asarray(raw, dtype=float))


def roots_ok(coefs: np.ndarray, sign: float, margin: float = ROOT_MARGIN) -> bool:
    """True if ``1 + sign * (c_1 z + c_2 z^2 + ...)`` has all roots outside the unit circle (with margin)."""
    if coefs.size == 0 or np.all(coefs == 0):
        return True
    poly = np.concatenate([[1.0], sign * coefs])
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.0 + margin))


def arma_acov(ar: np.ndarray, ma: np.ndarray, n: int) -> np.ndarray:
    """Autocovariances ``gamma(0..n-1)`` of a unit-variance-innovation ARMA process."""
    p, q = ar.size, ma.size
    theta = np.concatenate([[1.0], ma])
    psi = np.zeros(q + 1)
    psi[0] = 1.0
    for j in range(1, q + 1):
        psi[j] = theta[j] + sum(ar[i - 1] * psi[j - i] for i in range(1, min(j, p) + 1))
    rhs_full = np.array([np.dot(theta[k:], psi[: q + 1 - k]) if k <= q else 0.0 for k in range(max(p, q) + 1)])
    gamma = np.zeros(max(n, p + 1))
    if p == 0:
        gamma[: q + 1] = rhs_full[: q + 1][: gamma.size]
        return gamma[:n]
    # gamma(k) - sum_i ar_i gamma(|k - i|) = rhs(k), k = 0..p
    M = np.eye(p + 1)
    for k in range(p + 1):
        for i in range(1, p + 1):
            M[k, abs(k - i)] -= ar[i - 1]
    gamma[: p + 1] = np.linalg.solve(M, rhs_full[: p + 1])
    for k in range(p + 1, gamma.size):
        gamma[k] = sum(ar[i - 1] * gamma[k - i] for i in range(1, p + 1))
        if k <= q:
            gamma[k] += rhs_full[k]
    return gamma[:n]


def css_residuals(w, ar, ma) -> np.ndarray:
    """Conditional residuals; the first ``p`` are taken as zero."""
    return _k.css_residuals(np.asarray(w, dtype=float), np.asarray(ar, dtype=float), np.asarray(ma, dtype=float))


def exact_loglik(w, ar, ma) -> tuple[float, float]:
    """Exact Gaussian log-likelihood (Kalman filter) with the innovation variance profiled out.

    Returns ``(loglik, sigma2_hat)``.
    """
    return _k.kalman_loglik(np.asarray(w, dtype=float), np.asarray(ar, dtype=float), np.asarray(ma, dtype=float))


def _design(d: int, drift: bool, n: int, offset: int = 0) -> np.ndarray:
    cols = []
    if d == 0:
        cols.append(np.ones(n))
        if drift:
            cols.append(np.arange(offset, offset + n, dtype=float))
    elif d == 1 and drift:
        cols.append(np.ones(n))
    return np.ascontiguousarray(np.column_stack(cols)) if cols else np.zeros((n, 0))


def _working_series(y: np.ndarray, d: int, drift: bool):
    yd = np.diff(y, n=d) if d else y.copy()
    # time index of a d-th difference element is its position in y
    X = _design(d, drift, yd.size, offset=d)
    return yd, X


@dataclass
class _Candidate:
    model: ArimaModel
    complexity: tuple


def _fit_candidate(y: np.ndarray, p: int, d: int, q: int, drift: bool) -> ArimaModel | None:
    yd, X = _working_series(y, d, drift)
    n = yd.size
    n_reg = X.shape[1]
    k = p + q + n_reg + 1
    if n - k - 1 <= 0 or n <= p + 1:
        return None
    beta0 = np.linalg.lstsq(X, yd, rcond=None)[0] if n_reg else np.zeros(0)
    scale = float(np.std(yd - X @ beta0)) or 1.0

    theta0 = np.concatenate([np.zeros(p + q), beta0])
    if p + q == 0:
        theta = theta0
    else:
        maxiter, xtol, gtol = OPT_OPTIONS["maxiter"], OPT_OPTIONS["xrtol"], OPT_OPTIONS["gtol"]
        start, _, _ = _k.bfgs(0, theta0, yd, X, p, q, scale, maxiter, xtol, gtol)
        if not np.all(np.isfinite(start)):
            start = theta0
        # CSS often runs an MA coefficient onto the invertibility boundary, where the
        # tanh map saturates and the likelihood gradient vanishes; start inside instead
        start[: p + q] = np.clip(start[: p + q], -START_CLIP, START_CLIP)
        theta = None
        for init in (start, theta0):
            cand, _, status = _k.bfgs(1, init, yd, X, p, q, scale, maxiter, xtol, gtol)
            if status == 1 or not np.all(np.isfinite(cand)):
                continue
            ar, ma, _ = _k.unpack(cand, p, q)
            if roots_ok(ar, -1.0) and roots_ok(ma, 1.0):
                theta = cand
                break
        if theta is None:
            return None
    ar, ma, beta = _k.unpack(theta, p, q)
    if not (roots_ok(ar, -1.0) and roots_ok(ma, 1.0)):
        return None
    ll, sigma2 = exact_loglik(yd - X @ beta, ar, ma)
    if not np.isfinite(ll):
        return None
    aicc = -2 * ll + 2 * k + 2 * k * (k + 1) / (n - k - 1)
    intercept = float(beta[0]) if d == 0 else 0.0
    if d == 0 and drift:
        drift_coef = float(beta[1])
    elif d == 1 and drift:
        drift_coef = float(beta[0])
    else:
        drift_coef = 0.0
    return ArimaModel(
        order=(p, d, q), drift=drift, ar=ar, ma=ma, intercept=intercept,
        drift_coef=drift_coef, sigma2=sigma2, loglik=ll, aicc=float(aicc), nobs=n,
    )


def fit_order(series, order: tuple[int, int, int], drift: bool = False) -> ArimaModel:
    """Estimate a single ARIMA specification (no order search)."""
    y = np.asarray(series, dtype=float).reshape(-1)
    p, d, q = order
    if min(order) < 0 or max(order) > 2:
        raise DataError(f"orders must lie in 0..2, got {order}")
    if drift and d > 1:
        raise DataError("drift is only allowed with d <= 1")
    if y.size < MIN_LENGTH or not np.all(np.isfinite(y)):
        raise DataError(f"need at least {MIN_LENGTH} finite observations")
    model = _fit_candidate(y, p, d, q, drift)
    if model is None:
        raise NumericError(f"ARIMA{order} estimation failed (no convergence, or only non-stationary/non-invertible optima)")
    return model


def candidate_orders(max_order=(2, 2, 2)):
    P, D, Q = max_order
    for d, p, q in itertools.product(range(D + 1), range(P + 1), range(Q + 1)):
        for drift in ((False, True) if d <= 1 else (False,)):
            yield p, d, q, drift


def random_walk_drift(y: np.ndarray) -> ArimaModel:
    dy = np.diff(y)
    c = float(dy.mean())
    s2 = float(np.mean((dy - c) ** 2))
    return ArimaModel(order=(0, 1, 0), drift=True, drift_coef=c, sigma2=s2, nobs=dy.size)


def fit_arima(series, max_order=(2, 2, 2)) -> ArimaModel:
    """Select the minimum-AICc ARIMA model over the order grid.

    Ties within ``AICC_TIE`` go to the smaller ``p + q + d``, then smaller ``d``,
    then no drift. Candidates with an AR or MA root within
    ``SELECTION_ROOT_MARGIN`` of the unit circle are not eligible.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    if y.size < MIN_LENGTH:
        raise DataError(f"ARIMA needs at least {MIN_LENGTH} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        warnings.warn("constant series; returning the trivial mean model")
        return ArimaModel(order=(0, 0, 0), intercept=float(y[0]), nobs=y.size, trivial=True)

    best = None
    for p, d, q, drift in candidate_orders(max_order):
        model = _fit_candidate(y, p, d, q, drift)
        if model is None or not (
            roots_ok(model.ar, -1.0, SELECTION_ROOT_MARGIN) and roots_ok(model.ma, 1.0, SELECTION_ROOT_MARGIN)
        ):
            continue
        key = (p + q + d, d, drift)
        if best is None:
            best = _Candidate(model, key)
            continue
        diff = model.aicc - best.model.aicc
        if diff < -AICC_TIE or (abs(diff) <= AICC_TIE and key < best.complexity):
            best = _Candidate(model, key)
    if best is None:
        warnings.warn("no ARIMA candidate could be fitted; falling back to a random walk with drift")
        return random_walk_drift(y)
    return best.model


def _arma_forecast(w: np.ndarray, ar: np.ndarray, ma: np.ndarray, h: int) -> np.ndarray:
    """Kalman-filter forecasts of a zero-mean stationary ARMA series."""
    out = _k.kalman_forecast(np.ascontiguousarray(w, dtype=float), np.asarray(ar, dtype=float), np.asarray(ma, dtype=float), h)
    if not np.all(np.isfinite(out)):
        raise NumericError("Kalman filter failed while forecasting (non-stationary AR part?)")
    return out


def forecast_arima(model: ArimaModel, series, h: int) -> np.ndarray:
    """Minimum-MSE point forecasts for horizons ``1..h``."""
    if h < 1:
        raise DataError(f"forecast horizon must be >= 1, got {h}")
    y = np.asarray(series, dtype=float).reshape(-1)
    p, d, q = model.order
    if model.trivial:
        return np.full(h, model.intercept)
    if y.size <= d:
        raise DataError("series too short for the model's differencing order")
    yd = np.diff(y, n=d) if d else y
    if d == 0:
        t = np.arange(y.size, dtype=float)
        trend = model.intercept + model.drift_coef * t
        w_fc = _arma_forecast(y - trend, model.ar, model.ma, h)
        t_fut = np.arange(y.size, y.size + h, dtype=float)
        return w_fc + model.intercept + model.drift_coef * t_fut
    mean = model.drift_coef if (d == 1 and model.drift) else 0.0
    dd_fc = _arma_forecast(yd - mean, model.ar, model.ma, h) + mean
    out = dd_fc
    for level in range(d, 0, -1):
        last = np.diff(y, n=level - 1)[-1] if level > 1 else y[-1]
        out = last + np.cumsum(out)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite forecast from {model.describe()}")
    return out


def forecast_surface(dec, h: int, max_order=(2, 2, 2), return_models: bool = False):
    """Forecast each score series independently and rebuild curves ``h`` steps ahead.

    Returns an ``h x ages`` array (and the fitted models when ``return_models``).
    """
    if h < 1:
        raise DataError(f"forecast horizon must be >= 1, got {h}")
    K = dec.n_components
    beta_fc = np.zeros((h, K))
    models = []
    for k in range(K):
        series = dec.scores[:, k]
        model = fit_arima(series, max_order)
        beta_fc[:, k] = forecast_arima(model, series, h)
        models.append(model)
    curves = dec.mu + beta_fc @ dec.basis.T
    return (curves, models) if return_models else curves
