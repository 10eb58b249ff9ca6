"""Seeded synthetic mortality surfaces for tests, demos and fixtures."""

from __future__ import annotations

import numpy as np

from sigmort.io import MortalitySurface


def lee_carter_surface(
    n_years: int = 60,
    n_ages: int = 50,
    start_year: int = 1950,
    drift: float = -1.0,
    kappa_sd: float = 0.0,
    noise_sd: float = 0.02,
    seed: int = 0,
    open_group: bool = True,
) -> MortalitySurface:
    """``log m(x, t) = a_x + b_x * kappa_t + noise`` with a linearly drifting index.

    ``a_x`` is a Gompertz-like age profile with an infant-mortality dip, ``b_x``
    a smooth positive age loading summing to one, and ``kappa_t`` a line with
    slope ``drift`` (plus optional random-walk shocks of sd ``kappa_sd``).
    """
    rng = np.random.default_rng(seed)
    x = np.arange(n_ages, dtype=float)
    scale = max(n_ages - 1, 1)
    a = -9.0 + 7.5 * (x / scale) ** 1.2 + 3.0 * np.exp(-x / 2.0)
    b = 0.5 + np.exp(-((x / scale - 0.3) ** 2) / 0.1)
    b = b / b.sum()
    t = np.arange(n_years, dtype=float)
    kappa = drift * (t - t.mean())
    if kappa_sd > 0:
        kappa = kappa + np.cumsum(rng.normal(0.0, kappa_sd, n_years))
    values = a + np.outer(kappa, b) + rng.normal(0.0, noise_sd, (n_years, n_ages))
    labels = [str(i) for i in range(n_ages)]
    if open_group:
        labels[-1] = labels[-1] + "+"
    return MortalitySurface(
        years=np.arange(start_year, start_year + n_years),
        ages=tuple(labels),
        values=values,
        scale_tag="log",
        provenance={"country": "synthetic", "generator": "lee_carter", "seed": seed},
    )


def _hmd_text(title: str, years, ages, female, male, total) -> str:
    lines = [title, "", "  Year      Age        Female          Male         Total"]
    for t, year in enumerate(years):
        for i, age in enumerate(ages):
            vals = []
            for arr in (female, male, total):
                v = arr[t, i]
                vals.append("." if not np.isfinite(v) else f"{v:.6f}")
            lines.append(f"  {year:4d}   {age:>6}  {vals[0]:>12}  {vals[1]:>12}  {vals[2]:>12}")
    return "\n".join(lines) + "\n"


def write_hmd_fixture(
    directory,
    country: str = "SYN",
    start_year: int = 1950,
    n_years: int = 60,
    top_age: int = 110,
    seed: int = 0,
    drift: float = -1.0,
    missing: int = 2,
):
    """Write synthetic ``<country>.Mx_1x1.txt`` and ``<country>.Exposures_1x1.txt`` files.

    Rates follow a Lee-Carter-style surface over ages ``0 .. top_age`` (the last
    one labelled ``"top_age+"``); ``missing`` randomly chosen old-age cells are
    written as ``"."``. Returns the two file paths.
    """
    from pathlib import Path as FsPath

    rng = np.random.default_rng(seed)
    n_ages = top_age + 1
    base = lee_carter_surface(n_years, n_ages, start_year, drift=drift, noise_sd=0.03, seed=seed)
    log_total = np.minimum(base.values, -0.05)
    sex_gap = 0.25 * np.exp(-(((np.arange(n_ages) - 22.0) / 15.0) ** 2)) + 0.15
    female = np.exp(log_total - sex_gap / 2)
    male = np.exp(log_total + sex_gap / 2)
    pop = 1e5 * np.exp(-np.arange(n_ages) / 35.0) * rng.uniform(0.9, 1.1, (n_years, n_ages))
    exp_f, exp_m = 0.5 * pop * 1.02, 0.5 * pop * 0.98
    exp_t = exp_f + exp_m
    total = (female * exp_f + male * exp_m) / exp_t
    for _ in range(missing):
        t, i = rng.integers(0, n_years), rng.integers(n_ages - 8, n_ages)
        female[t, i] = male[t, i] = total[t, i] = np.nan
    years = list(range(start_year, start_year + n_years))
    ages = [str(a) for a in range(top_age)] + [f"{top_age}+"]
    out = FsPath(directory)
    out.mkdir(parents=True, exist_ok=True)
    mx_path = out / f"{country}.Mx_1x1.txt"
    ex_path = out / f"{country}.Exposures_1x1.txt"
    mx_path.write_text(_hmd_text(f"{country}, Death rates (period 1x1), synthetic", years, ages, female, male, total),
                       encoding="utf-8")
    ex_path.write_text(_hmd_text(f"{country}, Exposure to risk (period 1x1), synthetic", years, ages, exp_f, exp_m, exp_t),
                       encoding="utf-8")
    return mx_path, ex_path
