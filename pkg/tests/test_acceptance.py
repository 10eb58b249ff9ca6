"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import os
import time
import warnings
from pathlib import Path as FsPath

import numpy as np
import pytest

from oracles import loop_oracle, trapezoid_signature
from sigmort import cli
from sigmort.backtest import BacktestPlan, run_backtest
from sigmort.decompose import fpca_decompose, pcr_decompose, standardise
from sigmort.forecast import fit_order, forecast_arima, random_walk_drift
from sigmort.io import load_surface
from sigmort.models import ModelConfig
from sigmort.paths import Path, embed_series
from sigmort.randsig import (
    Activation,
    RandSigParams,
    gaussian_projection,
    jl_min_dimension,
    randomized_signature,
    sample_params,
)
from sigmort.signature import chen_concat, signature_batch, truncated_signature
from sigmort.smoothing import SmoothingConfig, smooth_curve, smooth_surface
from sigmort.synthetic import lee_carter_surface

MODELS = ("hurs", "huts", "hu", "whu")


def test_criterion_1_signature_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    # 1-d linear path: S^(1,...,1) = dx^i / i!
    errs = []
    for dx in rng.normal(size=20):
        sig = truncated_signature(Path([[0.0], [dx]]), 6)
        errs += [abs(sig.level(i)[0] - dx**i / math.factorial(i)) for i in range(1, 7)]
    closed = max(errs)
    # shuffle identity over 100 random 2-d paths
    paths = rng.normal(size=(100, 12, 2))
    s = signature_batch(paths, 2)
    lvl1, lvl2 = s[:, 1:3], s[:, 3:7].reshape(100, 2, 2)
    shuffle = np.max(np.abs(lvl2 + lvl2.transpose(0, 2, 1) - lvl1[:, :, None] * lvl1[:, None, :]))
    # brute-force nested integrals, refinement 1e4, m = 3
    oracle = 0.0
    for _ in range(10):
        pts = rng.normal(size=(5, 3))
        sig = truncated_signature(Path(pts), 3)
        ref = trapezoid_signature(pts, 10_000)
        oracle = max(oracle, *(np.max(np.abs(sig.level(i + 1) - ref[i])) for i in range(3)))
    elapsed = time.perf_counter() - t0
    ok = closed <= 1e-12 and shuffle <= 1e-10 and oracle <= 1e-6 and elapsed < 10
    verdict(1, ok, f"closed-form err {closed:.1e}, shuffle err {shuffle:.1e}, "
                   f"oracle err {oracle:.1e}, {elapsed:.2f}s")


def test_criterion_2_chen_consistency(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        d = 2 + i % 2
        pts = rng.normal(size=(int(rng.integers(3, 15)), d))
        cut = int(rng.integers(1, pts.shape[0] - 1))
        whole = truncated_signature(Path(pts), 3)
        joined = chen_concat(truncated_signature(Path(pts[: cut + 1]), 3),
                             truncated_signature(Path(pts[cut:]), 3))
        worst = max(worst, float(np.max(np.abs(whole.coeffs - joined.coeffs))))
    elapsed = time.perf_counter() - t0
    verdict(2, worst <= 1e-10 and elapsed < 5, f"max |S - S1 (x) S2| {worst:.1e}, {elapsed:.2f}s")


def test_criterion_3_randomized_signature(verdict):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(7, 3))
    base = sample_params(3, 10, 5)
    zero_a = RandSigParams(10, 3, 5, Activation("identity"), np.zeros((3, 10, 10)), base.b, base.z0)
    closed = np.max(np.abs(randomized_signature(Path(pts), zero_a).state
                           - (base.z0 + base.b.T @ (pts[-1] - pts[0]))))
    const_exact = np.array_equal(randomized_signature(Path(np.full((6, 3), 2.5)), base).state, base.z0)
    params = sample_params(3, 12, 42)
    path = embed_series(rng.normal(size=8))
    ref = loop_oracle(path.points.tolist(), params.A.tolist(), params.b.tolist(), params.z0.tolist(),
                      lambda x: params.slope * x)
    oracle = np.max(np.abs(randomized_signature(path, params).state - ref))
    ok = closed <= 1e-12 and const_exact and oracle <= 1e-12
    verdict(3, ok, f"A=0 closed form err {closed:.1e}, constant path exact={const_exact}, "
                   f"oracle err {oracle:.1e}")


def test_criterion_4_jl(verdict):
    t0 = time.perf_counter()
    k100 = jl_min_dimension(100, 0.5)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((50, 256))
    k = jl_min_dimension(50, 0.5)
    y = x @ gaussian_projection(256, k, seed=4)
    iu = np.triu_indices(50, 1)
    ratio = ((y[:, None] - y[None]) ** 2).sum(-1)[iu] / ((x[:, None] - x[None]) ** 2).sum(-1)[iu]
    share = float(np.mean((ratio >= 0.5) & (ratio <= 1.5)))
    elapsed = time.perf_counter() - t0
    ok = k100 == 37 and share >= 0.95 and elapsed < 5
    verdict(4, ok, f"jl_min_dimension(100, 0.5)={k100}, k={k}, within-band share {share:.3f}, {elapsed:.2f}s")


def test_criterion_5_smoother(verdict):
    ages = np.arange(81.0)
    rng = np.random.default_rng(5)
    truth = np.sin(2 * np.pi * ages / 80)
    rmse = float(np.sqrt(np.mean((smooth_curve(ages, truth + rng.normal(0, 0.1, 81)) - truth) ** 2)))
    line = -9.0 + 0.08 * ages
    line_err = max(
        float(np.max(np.abs(smooth_curve(ages, line, cfg=SmoothingConfig(lam=lam)) - line)))
        for lam in (1e-4, 1e-1, 1.0, 1e3, 1e6, 1e9)
    )
    verdict(5, rmse <= 0.05 and line_err <= 1e-8, f"sine RMSE {rmse:.4f}, line err {line_err:.1e}")


def test_criterion_6_arima(verdict):
    hits = 0
    for seed in range(50):
        r = np.random.default_rng(600 + seed)
        e = r.standard_normal(400)
        y = np.zeros(400)
        for t in range(1, 400):
            y[t] = 0.7 * y[t - 1] + e[t]
        hits += 0.55 <= fit_order(y[200:], (1, 0, 0)).ar[0] <= 0.85
    y = np.cumsum(0.2 + np.random.default_rng(6).normal(0, 0.05, 50))
    fc = forecast_arima(random_walk_drift(y), y, 10)
    rw_err = float(np.max(np.abs(fc - (y[-1] + np.mean(np.diff(y)) * np.arange(1, 11)))))
    verdict(6, hits >= 45 and rw_err <= 1e-10, f"AR(1) recovered in {hits}/50, RW-drift err {rw_err:.1e}")


def test_criterion_7_decomposition(verdict, lc_surface):
    smoothed = smooth_surface(lc_surface)
    recon, ortho = 0.0, 0.0
    for model in MODELS:
        dec = ModelConfig(model, k=50).fit(smoothed)
        recon = max(recon, float(np.max(np.abs(dec.reconstruct() - smoothed.values))))
        ortho = max(ortho, float(np.max(np.abs(dec.basis.T @ dec.basis - np.eye(dec.n_components)))))
    # rank-one surface beta(t) Z(x) with Z the top PC of the per-age features
    p, n = 30, 20
    z = np.sin(2 * np.pi * np.linspace(0, 1, p))
    z -= z.mean()
    z /= np.linalg.norm(z)
    noise = np.random.default_rng(7).normal(size=p)
    noise -= noise.mean()
    noise -= (noise @ z) * z
    beta = np.linspace(-1, 1, n)
    fstar = np.outer(beta - beta.mean(), z)
    features = standardise(np.column_stack([z, 2 * z, -z, noise]))
    pcr = pcr_decompose(fstar, features, 2).variance_explained[0]
    fpca = fpca_decompose(fstar, 1).variance_explained[0]
    ok = recon <= 1e-10 and ortho <= 1e-8 and pcr >= 0.999 and fpca >= 0.999
    verdict(7, ok, f"reconstruction err {recon:.1e}, orthonormality err {ortho:.1e}, "
                   f"rank-1 VE pcr {pcr:.4f} fpca {fpca:.4f}")


@pytest.mark.slow
def test_criterion_8_synthetic_backtest(verdict):
    surface = lee_carter_surface(seed=2024)
    models = tuple(ModelConfig(m) for m in MODELS) + (ModelConfig("naive"),)
    plan = BacktestPlan(1990, 2009, tuple(range(1, 11)), models, seed=7)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_backtest(surface, plan, jobs=1)
    elapsed = time.perf_counter() - t0
    table = report.mse_table()
    naive1 = table[("naive", 1)]
    problems = []
    for m in MODELS:
        curve = np.array([table[(m, h)] for h in plan.horizons])
        if not np.all(np.isfinite(curve)):
            problems.append(f"{m} non-finite")
        if curve[0] > naive1:
            problems.append(f"{m} MSE(1)={curve[0]:.5f} > naive {naive1:.5f}")
        ratio = float(np.min(curve / np.maximum.accumulate(curve)))
        if ratio < 0.9:
            problems.append(f"{m} drops to {ratio:.3f} of its running max")
    ok = not problems and report.complete and elapsed < 300
    summary = ", ".join(f"{m} {table[(m, 1)]:.5f}->{table[(m, 10)]:.5f}" for m in MODELS + ("naive",))
    verdict(8, ok, f"MSE(1)->MSE(10): {summary}; {elapsed:.0f}s single-threaded"
                   + (f"; problems: {problems}" if problems else ""))


def _hmd(country):
    mx = os.environ.get(f"SIGMORT_HMD_{country}_MX")
    ex = os.environ.get(f"SIGMORT_HMD_{country}_EXPOSURES")
    if not mx:
        pytest.skip(f"criterion 9: set SIGMORT_HMD_{country}_MX (and _EXPOSURES) to run")
    return load_surface(mx, exposures=ex, max_age=100, start_year=1947 if country == "JAPAN" else None,
                        end_year=2015)


@pytest.mark.slow
def test_criterion_9_hmd(verdict):
    japan = _hmd("JAPAN")
    hurs = ModelConfig("hurs", k=100, activation="linear", seed=0)
    plan = BacktestPlan(1996, 2015, tuple(range(1, 11)), (hurs,), seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mse1 = run_backtest(japan, plan).mse_table()[("hurs", 1)]
    detail = f"Japan HUrs MSE(1) {mse1:.5f} (seed 0)"
    if os.environ.get("SIGMORT_HMD_BULGARIA_MX"):
        bulgaria = _hmd("BULGARIA")
        models = (hurs, ModelConfig("huts"), ModelConfig("whu"))
        plan = BacktestPlan(1996, 2015, tuple(range(1, 11)), models, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tab = run_backtest(bulgaria, plan).mse_table()
        detail += "; Bulgaria MSE(10) " + ", ".join(f"{m.name} {tab[(m.name, 10)]:.5f}" for m in models)
    verdict(9, 0.002 <= mse1 <= 0.02, detail)


def test_criterion_10_determinism(verdict, data_dir, tmp_path, capsys):
    data = str(data_dir / "synthetic_surface.csv")
    runs = {
        "fit": ["--model", "hurs", "--k", "30"],
        "forecast": ["--model", "whu", "--h", "5"],
        "features": ["--model", "huts"],
        "backtest": ["--models", "hurs,hu,naive", "--k", "30", "--window", "2006:2009", "--horizons", "1-3"],
    }
    mismatched, compared = [], 0
    for command, extra in runs.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / command / rep
            argv = [command, "--data", data, "--seed", "11", "--out", str(out), "--jobs", "1" if rep == "a" else "2"]
            assert cli.main(argv + extra) == 0, capsys.readouterr().err
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            compared += 1
            if f.read_bytes() != (outs[1] / f.name).read_bytes():
                mismatched.append(f"{command}/{f.name}")
    verdict(10, compared > 0 and not mismatched,
            f"{compared} output files compared across reruns, mismatches: {mismatched or 'none'}")
