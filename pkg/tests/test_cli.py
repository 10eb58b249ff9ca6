import csv
import io
import json

import numpy as np
import pytest

from sigmort import cli
from sigmort.io import MortalitySurface, write_csv_matrix


def run_ok(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    assert code == 0, out.err
    return out.out


def read_table(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def header(path):
    return [l[2:] for l in path.read_text().splitlines() if l.startswith("# ")]


@pytest.fixture(scope="module")
def surface_csv(data_dir):
    return data_dir / "synthetic_surface.csv"


def test_fit_writes_bundle(surface_csv, tmp_path, capsys):
    out = run_ok(["fit", "--data", surface_csv, "--model", "hu", "--start-year", 1985,
                  "--out", tmp_path, "--jobs", 1], capsys)
    resolved = json.loads(out.splitlines()[0].removeprefix("resolved config "))
    assert resolved["model"] == "hu" and resolved["components"] == 6
    for name in ("mu.csv", "basis.csv", "scores.csv", "diagnostics.txt", "observed.csv",
                 "smoothed.csv", "age_series.csv"):
        assert (tmp_path / name).exists()
    head = header(tmp_path / "diagnostics.txt")
    assert head[0].startswith("sigmort ") and head[0].endswith(" fit")
    assert any(h.startswith("surface ") for h in head)
    assert not any("jobs" in h for h in head if h.startswith("config"))
    diag = (tmp_path / "diagnostics.txt").read_text()
    assert "variance_explained" in diag and "lambda 1985" in diag
    assert len(read_table(tmp_path / "observed.csv")) == 25 * 50


def test_forecast_constant_surface(tmp_path, capsys):
    s = MortalitySurface(np.arange(1980, 2010), tuple(str(a) for a in range(12)), np.full((30, 12), -4.0))
    data = tmp_path / "const.csv"
    write_csv_matrix(s, data)
    for model in ("hurs", "huts", "hu", "whu", "naive"):
        out_dir = tmp_path / model
        run_ok(["forecast", "--data", data, "--model", model, "--h", 5, "--out", out_dir], capsys)
        rows = read_table(out_dir / "forecast.csv")
        assert len(rows) == 5 * 12
        assert {int(r["year"]) for r in rows} == set(range(2010, 2015))
        np.testing.assert_allclose([float(r["predicted"]) for r in rows], -4.0, atol=1e-6)


def test_features_column_bounds(surface_csv, tmp_path, capsys):
    run_ok(["features", "--data", surface_csv, "--model", "hurs", "--k", 8, "--out", tmp_path / "r"], capsys)
    rows = read_table(tmp_path / "r" / "features.csv")
    assert len(rows) == 50 and 1 <= len(rows[0]) - 1 <= 8
    head = header(tmp_path / "r" / "features.csv")
    assert any(h.startswith("params_fingerprint ") for h in head)
    run_ok(["features", "--data", surface_csv, "--model", "huts", "--order", 2, "--out", tmp_path / "t"], capsys)
    rows = read_table(tmp_path / "t" / "features.csv")
    assert 1 <= len(rows[0]) - 1 <= 12


def test_backtest_selected_horizons(surface_csv, tmp_path, capsys):
    run_ok(["backtest", "--data", surface_csv, "--models", "hu,naive", "--window", "2005:2009",
            "--horizons", "1,2,4", "--seed", 3, "--out", tmp_path, "--jobs", 1], capsys)
    summary = read_table(tmp_path / "summary.csv")
    assert [(r["model"], r["horizon"]) for r in summary] == [
        (m, str(h)) for m in ("hu", "naive") for h in (1, 2, 4)]
    long_rows = read_table(tmp_path / "long.csv")
    for row in summary:
        errs = [(float(r["observed"]) - float(r["predicted"])) ** 2 for r in long_rows
                if r["model"] == row["model"] and r["horizon"] == row["horizon"]]
        assert float(row["mse"]) == pytest.approx(np.mean(errs), rel=1e-12)
    head = header(tmp_path / "summary.csv")
    seeds = json.loads(next(h for h in head if h.startswith("origin_seeds ")).split(" ", 1)[1])
    assert sorted(seeds) == [str(y) for y in range(2004, 2009)]


def test_rerun_is_byte_identical(surface_csv, tmp_path, capsys):
    argv = ["backtest", "--data", surface_csv, "--models", "hurs", "--k", 10, "--window", "2007:2009",
            "--horizons", "1-2", "--seed", 5]
    run_ok(argv + ["--out", tmp_path / "a", "--jobs", 1], capsys)
    run_ok(argv + ["--out", tmp_path / "b", "--jobs", 2], capsys)
    for name in ("summary.csv", "table.csv", "long.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_precedence(surface_csv, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\ndata = {surface_csv}\ncomponents=3\nseed = 9\nk=12\n")
    out = run_ok(["features", "--config", cfg, "--seed", 4, "--out", tmp_path / "o"], capsys)
    resolved = json.loads(out.splitlines()[0].removeprefix("resolved config "))
    assert resolved["seed"] == 4 and resolved["components"] == 3 and resolved["k"] == 12
    assert resolved["order"] == 3  # default


@pytest.mark.parametrize(
    "argv, code, kind",
    [
        ([], 2, "usage"),
        (["fit"], 2, "usage"),
        (["fit", "--data", "x.csv", "--bogus", "1"], 2, "usage"),
        (["fit", "--data", "{csv}", "--model", "hu", "--k", "5"], 2, "usage"),
        (["fit", "--data", "{csv}", "--model", "hurs", "--kappa", "0.2"], 2, "usage"),
        (["backtest", "--data", "{csv}", "--models", "hu,naive", "--order", "2"], 2, "usage"),
        (["features", "--data", "{csv}", "--model", "hu"], 2, "usage"),
        (["fit", "--data", "{csv}", "--components", "abc"], 2, "usage"),
        (["backtest", "--data", "{csv}", "--horizons", "0-3"], 2, "usage"),
        (["fit", "--data", "/nonexistent/file.csv"], 3, "data"),
        (["backtest", "--data", "{csv}", "--window", "1955:1960"], 3, "data"),
        (["fit", "--data", "{csv}", "--config", "/nonexistent.cfg"], 2, "usage"),
    ],
)
def test_error_exit_codes(argv, code, kind, surface_csv, tmp_path, capsys):
    argv = [a.replace("{csv}", str(surface_csv)) for a in argv] + ["--out", str(tmp_path)] * bool(argv)
    assert cli.main(argv) == code
    err = capsys.readouterr().err
    assert err.startswith(f"error[{kind}]: ") and err.count("\n") == 1


def test_bad_config_key(surface_csv, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert cli.main(["fit", "--data", str(surface_csv), "--config", str(cfg)]) == 2
    assert "unknown setting" in capsys.readouterr().err


def test_hmd_input(data_dir, tmp_path, capsys):
    run_ok(["fit", "--data", data_dir / "SYN.Mx_1x1.txt", "--exposures", data_dir / "SYN.Exposures_1x1.txt",
            "--model", "whu", "--weights", "exposure", "--out", tmp_path], capsys)
    head = header(tmp_path / "mu.csv")
    inputs = json.loads(next(h for h in head if h.startswith("inputs ")).split(" ", 1)[1])
    assert len(inputs) == 2


def test_parse_helpers():
    assert cli.parse_horizons("1-3") == (1, 2, 3)
    assert cli.parse_horizons("10,1,5") == (1, 5, 10)
    assert cli.parse_window("1990:2009") == (1990, 2009)
    assert cli.parse_models("hu, naive") == ("hu", "naive")
