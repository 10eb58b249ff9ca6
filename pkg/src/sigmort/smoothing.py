"""Weighted penalized regression splines for per-year log-mortality curves.

Cubic B-splines on equally spaced knots with a difference penalty on the
coefficients (P-splines). The smoothing parameter is fixed or chosen by GCV
over a log-spaced grid, ties going to the smoother fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline
from scipy.optimize import isotonic_regression

from sigmort.errors import DataError, NumericError

DEGREE = 3
LAMBDA_GRID = np.logspace(-4, 6, 30)
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class SmoothingConfig:
    basis_size: int | None = None  # None: min(25, p // 2)
    penalty_order: int = 2
    lam: float | str = "auto"
    weights_mode: str = "uniform"  # or "exposure"
    monotone_from_age: float | None = None

    def __post_init__(self) -> None:
        if self.basis_size is not None and self.basis_size < 4:
            raise DataError(f"basis_size must be >= 4, got {self.basis_size}")
        if self.penalty_order not in (1, 2, 3):
            raise DataError(f"penalty_order must be 1, 2 or 3, got {self.penalty_order}")
        if self.lam != "auto" and not (np.isfinite(self.lam) and float(self.lam) > 0):
            raise DataError(f"lambda must be 'auto' or a positive number, got {self.lam!r}")
        if self.weights_mode not in ("uniform", "exposure"):
            raise DataError(f"weights_mode must be 'uniform' or 'exposure', got {self.weights_mode!r}")

    def resolved_basis_size(self, n_ages: int) -> int:
        if self.basis_size is not None:
            return self.basis_size
        return max(4, min(25, n_ages // 2))


@dataclass(frozen=True)
class SmoothFit:
    fitted: np.ndarray
    lam: float
    edf: float
    gcv: float = field(default=np.nan)


def weights_from_exposure(mx, exposure) -> np.ndarray:
    """Approximate inverse variance of a log rate under Poisson deaths.

    ``w_i ~ exposure_i * mx_i``, normalised to mean 1 and then floored at
    ``WEIGHT_FLOOR``.
    """
    mx = np.asarray(mx, dtype=float)
    exposure = np.asarray(exposure, dtype=float)
    if mx.shape != exposure.shape:
        raise DataError(f"rate and exposure lengths differ: {mx.shape} vs {exposure.shape}")
    if np.any(exposure < 0) or not np.all(np.isfinite(exposure)):
        raise DataError("exposures must be finite and non-negative")
    raw = exposure * np.where(np.isfinite(mx) & (mx > 0), mx, 0.0)
    if not np.any(raw > 0):
        raise DataError("all exposures (or deaths) are zero")
    w = raw / raw.mean()
    return np.maximum(w, WEIGHT_FLOOR)


def bspline_basis(x: np.ndarray, n_basis: int, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Cubic B-spline design matrix on equally spaced knots spanning ``[lo, hi]``."""
    x = np.asarray(x, dtype=float)
    lo = float(x.min()) if lo is None else lo
    hi = float(x.max()) if hi is None else hi
    if hi <= lo:
        raise DataError("need at least two distinct ages to build a spline basis")
    n_seg = n_basis - DEGREE
    dx = (hi - lo) / n_seg
    knots = lo + dx * np.arange(-DEGREE, n_seg + DEGREE + 1)
    return BSpline.design_matrix(np.clip(x, lo, hi), knots, DEGREE, extrapolate=True).toarray()


def _solve(WB, Wy, D, lam):
    """Penalised least squares as the stacked system ``[WB; sqrt(lam) D] a = [Wy; 0]``.

    QR on the stacked matrix avoids squaring its condition number, which keeps
    polynomials in the penalty null space exact even for very large ``lam``.
    Returns the coefficients and the effective degrees of freedom (trace of the
    hat matrix, i.e. the squared norm of the data block of ``Q``).
    """
    A = np.vstack([WB, np.sqrt(lam) * D])
    Q, R = linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-14 * diag.max():
        raise NumericError(f"singular smoothing system at lambda={lam:g}")
    coef = linalg.solve_triangular(R, Q[: WB.shape[0]].T @ Wy)
    edf = float(np.sum(Q[: WB.shape[0]] ** 2))
    return coef, edf


def smooth_curve(ages, y, w=None, cfg: SmoothingConfig | None = None, return_fit: bool = False):
    """Penalized spline fit of ``y`` over ``ages``.

    Minimises ``sum w_i (y_i - f(x_i))^2 + lam * ||D^r a||^2``. Weights are
    rescaled to mean 1 first, so the fit does not depend on their overall scale.

    Returns the fitted values, or a :class:`SmoothFit` when ``return_fit``.
    """
    cfg = cfg or SmoothingConfig()
    ages = np.asarray(ages, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if not (ages.shape == y.shape == w.shape) or ages.ndim != 1:
        raise DataError(f"ages, y and weights must be equal-length vectors: {ages.shape}, {y.shape}, {w.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(w)) and np.all(np.isfinite(ages))):
        raise DataError("smoothing inputs must be finite")
    if np.any(w < 0):
        raise DataError("weights must be non-negative")
    nb = cfg.resolved_basis_size(ages.size)
    if np.count_nonzero(w > 0) < nb:
        raise DataError(f"need at least {nb} positively weighted observations, got {np.count_nonzero(w > 0)}")
    w = w / w.mean()

    B = bspline_basis(ages, nb)
    D = np.diff(np.eye(nb), n=cfg.penalty_order, axis=0)
    sw = np.sqrt(w)
    WB, Wy = B * sw[:, None], y * sw
    n = y.size

    def fit_at(lam):
        coef, edf = _solve(WB, Wy, D, lam)
        return B @ coef, edf

    if cfg.lam == "auto":
        best = None
        for lam in LAMBDA_GRID:
            fitted, edf = fit_at(lam)
            rss = float(np.sum(w * (y - fitted) ** 2))
            denom = (n - edf) ** 2
            gcv = n * rss / denom if denom > 0 else np.inf
            # <= moves ties toward larger lambda
            if best is None or gcv <= best.gcv * (1 + 1e-10) + 1e-300:
                best = SmoothFit(fitted, float(lam), edf, gcv)
        result = best
    else:
        fitted, edf = fit_at(float(cfg.lam))
        result = SmoothFit(fitted, float(cfg.lam), edf)

    if cfg.monotone_from_age is not None:
        mask = ages >= cfg.monotone_from_age
        if np.count_nonzero(mask) > 1:
            fitted = result.fitted.copy()
            fitted[mask] = isotonic_regression(fitted[mask], weights=w[mask]).x
            result = replace(result, fitted=fitted)
    return result if return_fit else result.fitted


def smooth_surface(raw, exposures=None, cfg: SmoothingConfig | None = None):
    """Smooth each year of a :class:`~sigmort.io.MortalitySurface` independently.

    ``exposures`` (years x ages) overrides the surface's own exposures when
    ``cfg.weights_mode == "exposure"``. The returned surface records the
    chosen lambda per year in ``provenance["smoothing"]``.
    """
    cfg = cfg or SmoothingConfig()
    values = raw.values
    if not np.all(np.isfinite(values)):
        raise DataError("surface contains non-finite values; repair before smoothing")
    ages = raw.age_grid
    if exposures is None:
        exposures = raw.exposures
    if cfg.weights_mode == "exposure" and exposures is None:
        warnings.warn("exposure weights requested but no exposures available; using uniform weights")
    out = np.empty_like(values)
    lams = []
    for t in range(values.shape[0]):
        w = None
        if cfg.weights_mode == "exposure" and exposures is not None:
            w = weights_from_exposure(np.exp(values[t]), np.asarray(exposures)[t])
        fit = smooth_curve(ages, values[t], w, cfg, return_fit=True)
        out[t] = fit.fitted
        lams.append(fit.lam)
    meta = dict(raw.provenance)
    meta["smoothing"] = {
        "basis_size": cfg.resolved_basis_size(ages.size),
        "penalty_order": cfg.penalty_order,
        "lambda": cfg.lam,
        "weights_mode": cfg.weights_mode,
        "monotone_from_age": cfg.monotone_from_age,
        "lambda_per_year": dict(zip(raw.years.tolist(), lams)),
    }
    return raw.with_values(out, provenance=meta)
