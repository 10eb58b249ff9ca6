"""Expanding-window backtests and MSE(h) tables.

For each origin year ``o`` from ``first_test_year - 1`` to ``last_test_year - 1``
every model is fitted on years ``<= o`` and forecasts
``min(max(horizons), last_test_year - o)`` years ahead. MSE(h) averages the
squared log-rate error over all ages and all origins that reach horizon ``h``.
"""

from __future__ import annotations

import csv
import io as _io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from sigmort.errors import DataError, SigmortError
from sigmort.io import MortalitySurface
from sigmort.smoothing import smooth_surface

MIN_TRAIN_YEARS = 20


def mse(observed, predicted, h: int | None = None) -> float:
    """Mean squared error over a (years x ages) block of log rates."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.shape != pred.shape:
        raise DataError(f"coverage mismatch: observed {obs.shape} vs predicted {pred.shape}")
    if obs.size == 0:
        raise DataError("no (year, age) pairs to score")
    return float(np.mean((obs - pred) ** 2))


def derive_seed(master: int, origin: int) -> int:
    """Per-origin seed: independent across origins, reproducible from the master seed."""
    return int(np.random.SeedSequence([int(master), int(origin)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class BacktestPlan:
    first_test_year: int
    last_test_year: int
    horizons: tuple[int, ...] = tuple(range(1, 11))
    models: tuple = ()
    seed: int = 0

    def __post_init__(self) -> None:
        hs = tuple(sorted({int(h) for h in self.horizons}))
        if not hs or hs[0] < 1:
            raise DataError("horizons must be positive integers")
        object.__setattr__(self, "horizons", hs)
        object.__setattr__(self, "models", tuple(self.models))
        if self.last_test_year < self.first_test_year:
            raise DataError("last_test_year precedes first_test_year")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise DataError(f"model names must be unique, got {names}")

    @property
    def origins(self) -> range:
        return range(self.first_test_year - 1, self.last_test_year)

    def validate(self, surface: MortalitySurface) -> None:
        start, end = int(surface.years[0]), int(surface.years[-1])
        if self.first_test_year - start < MIN_TRAIN_YEARS:
            raise DataError(
                f"first test year {self.first_test_year} leaves fewer than {MIN_TRAIN_YEARS} "
                f"training years (data start {start})"
            )
        if self.last_test_year > end:
            raise DataError(f"last test year {self.last_test_year} is beyond the data ({end})")


@dataclass(frozen=True)
class ForecastRecord:
    model: str
    origin: int
    horizon: int
    predicted: np.ndarray
    observed: np.ndarray

    @property
    def year(self) -> int:
        return self.origin + self.horizon


@dataclass
class BacktestReport:
    ages: tuple[str, ...]
    models: tuple[str, ...]
    horizons: tuple[int, ...]
    records: list[ForecastRecord] = field(default_factory=list)
    failures: list[tuple[str, int, str]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures

    def mse_table(self) -> dict[tuple[str, int], float]:
        out = {}
        for m in self.models:
            for h in self.horizons:
                recs = [r for r in self.records if r.model == m and r.horizon == h]
                if recs:
                    out[(m, h)] = mse(np.vstack([r.observed for r in recs]), np.vstack([r.predicted for r in recs]))
        return out

    def long_csv(self, header_lines=()) -> str:
        buf = _io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "origin", "horizon", "age", "observed", "predicted"])
        for r in self.records:
            for age, o, p in zip(self.ages, r.observed, r.predicted):
                w.writerow([r.model, r.origin, r.horizon, age, repr(float(o)), repr(float(p))])
        return buf.getvalue()

    def summary_csv(self, header_lines=()) -> str:
        buf = _io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "horizon", "mse"])
        table = self.mse_table()
        for m in self.models:
            for h in self.horizons:
                if (m, h) in table:
                    w.writerow([m, h, repr(table[(m, h)])])
        return buf.getvalue()

    def wide_csv(self, header_lines=()) -> str:
        """Horizon rows, one MSE column per model (the layout of a results table)."""
        buf = _io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["horizon"] + list(self.models))
        table = self.mse_table()
        for h in self.horizons:
            w.writerow([h] + [repr(table[(m, h)]) if (m, h) in table else "" for m in self.models])
        return buf.getvalue()


def _run_origin(surface, smoothed_by_key, plan, origin):
    """All model forecasts for one origin. Returns (records, failures)."""
    train = surface.select_years(int(surface.years[0]), origin)
    steps = min(max(plan.horizons), plan.last_test_year - origin)
    seed = derive_seed(plan.seed, origin)
    year_index = {int(y): i for i, y in enumerate(surface.years)}
    records, failures = [], []
    for model in plan.models:
        smoothed = None
        key = _smoothing_key(model)
        if key is not None:
            smoothed = smoothed_by_key[key].select_years(int(surface.years[0]), origin)
        try:
            fc = np.asarray(model.forecast(train, steps, seed=seed, smoothed=smoothed), dtype=float)
            if fc.shape != (steps, surface.n_ages) or not np.all(np.isfinite(fc)):
                raise DataError(f"model returned forecasts of shape {fc.shape} or non-finite values")
        except (SigmortError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            failures.append((model.name, origin, f"{type(exc).__name__}: {exc}"))
            continue
        for h in plan.horizons:
            if h <= steps:
                observed = surface.values[year_index[origin + h]]
                records.append(ForecastRecord(model.name, origin, h, fc[h - 1].copy(), observed.copy()))
    return records, failures


def _smoothing_key(model):
    cfg = getattr(model, "smoothing", None)
    if cfg is None or getattr(model, "model", None) == "naive":
        return None
    return cfg


def run_backtest(surface: MortalitySurface, plan: BacktestPlan, jobs: int = 1) -> BacktestReport:
    """Expanding-window backtest of every model in ``plan``.

    Each year's curve is smoothed independently, so the full surface is
    smoothed once and sliced per origin; no future information leaks into a
    training window. Model failures at an origin are recorded and skipped.
    """
    plan.validate(surface)
    smoothed_by_key = {}
    for model in plan.models:
        key = _smoothing_key(model)
        if key is not None and key not in smoothed_by_key:
            smoothed_by_key[key] = smooth_surface(surface, cfg=key)
    origins = list(plan.origins)
    if jobs > 1 and len(origins) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_origin, *zip(*[(surface, smoothed_by_key, plan, o) for o in origins])))
    else:
        results = [_run_origin(surface, smoothed_by_key, plan, o) for o in origins]
    report = BacktestReport(
        ages=surface.ages,
        models=tuple(m.name for m in plan.models),
        horizons=plan.horizons,
        metadata={
            "seed": plan.seed,
            "window": (plan.first_test_year, plan.last_test_year),
            "data_fingerprint": surface.fingerprint(),
            "country": surface.provenance.get("country", ""),
        },
    )
    for recs, fails in results:
        report.records.extend(recs)
        report.failures.extend(fails)
    for name, origin, msg in report.failures:
        warnings.warn(f"model {name} failed at origin {origin}: {msg}")
    return report


def compare_models(*reports: BacktestReport) -> list[dict]:
    """Rank models by MSE(h) (ascending) within each country and horizon."""
    rows = []
    for report in reports:
        country = report.metadata.get("country", "")
        table = report.mse_table()
        for h in report.horizons:
            entries = sorted(((v, m) for (m, hh), v in table.items() if hh == h), key=lambda e: (e[0], report.models.index(e[1])))
            for rank, (value, m) in enumerate(entries, start=1):
                rows.append({"country": country, "horizon": h, "rank": rank, "model": m, "mse": value})
    return rows
