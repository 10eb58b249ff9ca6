"""Command-line interface: ``sigmort {fit,forecast,backtest,features}``.

Settings resolve as flags > ``--config`` file (``key=value`` lines, ``#``
comments) > built-in defaults. The resolved configuration is echoed to
stdout and written into the comment header of every output file, together
with the package version, seeds and input fingerprints, so that any output
can be regenerated exactly. Headers carry no timestamps: reruns with the same
configuration produce byte-identical files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure. Errors
are reported on stderr as a single line ``error[<kind>]: <detail>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from sigmort import __version__
from sigmort.backtest import BacktestPlan, derive_seed, run_backtest
from sigmort.decompose import center, feature_matrix, mean_function
from sigmort.errors import DataError, SigmortError, UsageError
from sigmort.forecast import forecast_surface
from sigmort.io import load_surface
from sigmort.models import MODELS, ModelConfig
from sigmort.randsig import ACTIVATIONS, sample_params
from sigmort.smoothing import SmoothingConfig, smooth_surface

COMMANDS = ("fit", "forecast", "backtest", "features")


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"expected an integer, got {text!r}") from None


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}") from None


def _opt(conv):
    """Converter that maps 'none' / empty to None."""
    return lambda text: None if text.strip().lower() in ("", "none") else conv(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _lam(text: str):
    return "auto" if text.strip().lower() == "auto" else _float(text)


def parse_horizons(text: str) -> tuple[int, ...]:
    """``"1-10"``, ``"1,5,10"`` or a mix such as ``"1-3,10"``."""
    out: set[int] = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = (_int(x) for x in part.split("-", 1))
            if hi < lo:
                raise UsageError(f"empty horizon range {part!r}")
            out.update(range(lo, hi + 1))
        else:
            out.add(_int(part))
    if not out or min(out) < 1:
        raise UsageError(f"horizons must be positive integers, got {text!r}")
    return tuple(sorted(out))


def parse_window(text: str) -> tuple[int, int]:
    """``"1990:2009"`` (or ``"1990-2009"``): first and last test year."""
    sep = ":" if ":" in text else "-"
    parts = text.split(sep)
    if len(parts) != 2:
        raise UsageError(f"window must look like FIRST:LAST, got {text!r}")
    first, last = _int(parts[0]), _int(parts[1])
    if last < first:
        raise UsageError(f"window {text!r} ends before it starts")
    return first, last


def parse_models(text: str) -> tuple[str, ...]:
    names = tuple(m.strip().lower() for m in text.split(",") if m.strip())
    bad = [m for m in names if m not in MODELS]
    if not names or bad:
        raise UsageError(f"unknown model(s) {bad or text!r}; choose from {', '.join(MODELS)}")
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate models in {text!r}")
    return names


def _choice(options):
    def conv(text: str) -> str:
        low = text.strip().lower()
        if low not in options:
            raise UsageError(f"{text!r} is not one of {', '.join(options)}")
        return low

    return conv


@dataclass(frozen=True)
class Option:
    key: str
    conv: object
    default: object
    help: str
    commands: tuple[str, ...] = COMMANDS


OPTIONS = (
    Option("data", str, None, "mortality data: surface CSV or HMD Mx_1x1 table"),
    Option("exposures", _opt(str), None, "HMD Exposures_1x1 table (optional)"),
    Option("format", _choice(("auto", "csv", "hmd")), "auto", "input format"),
    Option("model", _choice(MODELS), "hurs", "model for fit / forecast / features",
           ("fit", "forecast", "features")),
    Option("models", parse_models, ("hurs", "huts", "hu", "whu", "naive"),
           "comma-separated models to backtest", ("backtest",)),
    Option("k", _int, 100, "randomized signature dimension (hurs)"),
    Option("order", _int, 3, "truncation order m (huts)"),
    Option("components", _int, 6, "number of basis functions K"),
    Option("kappa", _float, 0.1, "geometric year-weight decay (whu)"),
    Option("activation", _choice(ACTIVATIONS), "linear", "randomized signature activation (hurs)"),
    Option("activation_scale", _opt(_float), None, "activation slope override (hurs)"),
    Option("zero_start", _bool, False, "start the randomized signature at zero (hurs)"),
    Option("seed", _int, 0, "master random seed"),
    Option("sex", _choice(("total", "female", "male")), "total", "HMD column"),
    Option("max_age", _int, 100, "ages >= this are merged into an open group"),
    Option("start_year", _opt(_int), None, "first year used"),
    Option("end_year", _opt(_int), None, "last year used"),
    Option("horizons", parse_horizons, tuple(range(1, 11)), "forecast horizons, e.g. 1-10 or 1,5,10",
           ("backtest",)),
    Option("h", _int, 10, "years ahead to forecast", ("forecast",)),
    Option("window", _opt(parse_window), None, "first:last test year (default: last 20 years)",
           ("backtest",)),
    Option("out", str, "out", "output directory"),
    Option("jobs", _opt(_int), None, "worker processes (default: all cores)"),
    Option("basis_size", _opt(_int), None, "B-spline basis size (default min(25, ages/2))"),
    Option("penalty_order", _int, 2, "difference penalty order"),
    Option("lam", _lam, "auto", "smoothing parameter or 'auto' (GCV)"),
    Option("weights", _choice(("uniform", "exposure")), "uniform", "smoothing weights"),
    Option("monotone_from_age", _opt(_float), None, "force non-decreasing fit above this age"),
)
OPTION_BY_KEY = {o.key: o for o in OPTIONS}

# options that only make sense for particular models
MODEL_SPECIFIC = {
    "k": "hurs",
    "activation": "hurs",
    "activation_scale": "hurs",
    "zero_start": "hurs",
    "order": "huts",
    "kappa": "whu",
}

# options that do not change any numbers, hence left out of output headers
NON_RESULT_KEYS = ("jobs", "out")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # pragma: no cover - exercised through main()
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sigmort", description="Signature-based functional mortality forecasting.")
    parser.add_argument("--version", action="version", version=f"sigmort {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command in COMMANDS:
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key=value configuration file")
        for opt in OPTIONS:
            if command in opt.commands:
                flag = "--" + opt.key.replace("_", "-")
                p.add_argument(flag, dest=opt.key, default=None, metavar=opt.key.upper(), help=opt.help)
    return parser


def read_config_file(path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment; keys may use ``-`` or ``_``."""
    path = FsPath(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in OPTION_BY_KEY:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        out[key] = value
    return out


def resolve_config(command: str, flags: dict, config_file=None) -> tuple[dict, set[str]]:
    """Merge defaults, config file and flags. Returns (config, explicitly set keys)."""
    from_file = read_config_file(config_file) if config_file else {}
    config, explicit = {}, set()
    for opt in OPTIONS:
        if command not in opt.commands:
            continue
        if flags.get(opt.key) is not None:
            config[opt.key] = opt.conv(flags[opt.key])
            explicit.add(opt.key)
        elif opt.key in from_file:
            config[opt.key] = opt.conv(from_file[opt.key])
            explicit.add(opt.key)
        else:
            config[opt.key] = opt.default
    if config.get("data") is None:
        raise UsageError("--data is required")
    if config.get("jobs") is None:
        config["jobs"] = os.cpu_count() or 1
    if config["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    if command == "forecast" and config["h"] < 1:
        raise UsageError(f"forecast horizon must be >= 1, got {config['h']}")
    models = config["models"] if command == "backtest" else (config["model"],)
    for key, owner in MODEL_SPECIFIC.items():
        if key in explicit and owner not in models:
            raise UsageError(f"--{key.replace('_', '-')} only applies to model {owner}")
    if command == "features" and config["model"] not in ("hurs", "huts"):
        raise UsageError("features are only defined for the signature models hurs and huts")
    return config, explicit


def smoothing_config(config: dict) -> SmoothingConfig:
    return SmoothingConfig(
        basis_size=config["basis_size"],
        penalty_order=config["penalty_order"],
        lam=config["lam"],
        weights_mode=config["weights"],
        monotone_from_age=config["monotone_from_age"],
    )


def model_config(config: dict, model: str) -> ModelConfig:
    return ModelConfig(
        model=model,
        components=config["components"],
        k=config["k"],
        order=config["order"],
        activation=config["activation"],
        activation_scale=config["activation_scale"],
        zero_start=config["zero_start"],
        kappa=config["kappa"],
        seed=config["seed"],
        smoothing=smoothing_config(config),
    )


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def header_lines(command: str, config: dict, surface, extra: dict | None = None) -> list[str]:
    shown = {k: v for k, v in config.items() if k not in NON_RESULT_KEYS}
    lines = [
        f"sigmort {__version__} {command}",
        "config " + json.dumps(_jsonable(shown), sort_keys=True),
        f"seed {config['seed']}",
        "inputs " + json.dumps(surface.provenance.get("inputs", {}), sort_keys=True),
        f"surface {surface.fingerprint()}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} {value}")
    return lines


def _write_rows(path: FsPath, header: list[str], columns: list[str], rows) -> FsPath:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def _write_text(path: FsPath, header: list[str], body: str) -> FsPath:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(body)
    return path


def load(config: dict):
    surface = load_surface(
        config["data"],
        exposures=config["exposures"],
        fmt=config["format"],
        max_age=config["max_age"],
        start_year=config["start_year"],
        end_year=config["end_year"],
        column=config["sex"],
    )
    return surface


def _long_rows(surface, values):
    for t, year in enumerate(surface.years):
        for i, age in enumerate(surface.ages):
            yield [int(year), age, repr(float(values[t, i]))]


# --------------------------------------------------------------------------- commands


def cmd_fit(config: dict) -> list[FsPath]:
    surface = load(config)
    model = model_config(config, config["model"])
    if model.model == "naive":
        raise UsageError("the naive benchmark has no decomposition to fit")
    smoothed = smooth_surface(surface, cfg=model.smoothing)
    dec = model.fit(smoothed)
    out = FsPath(config["out"])
    head = header_lines("fit", config, surface)
    written = dec.write_bundle(out, surface.ages, head)

    diag = [f"model {model.name}", f"method {dec.method}", f"components {dec.n_components}"]
    diag.append("variance_explained " + " ".join(repr(float(v)) for v in dec.variance_explained))
    diag.append("residual_mse " + repr(float(np.mean(dec.residuals**2))))
    repairs = surface.provenance.get("repairs", 0)
    diag.append(f"repairs {repairs}")
    for key, value in sorted(dec.info.items()):
        diag.append(f"info.{key} {json.dumps(_jsonable(value))}")
    for year, lam in smoothed.provenance["smoothing"]["lambda_per_year"].items():
        diag.append(f"lambda {year} {lam!r}")
    written.append(_write_text(out / "diagnostics.txt", head, "\n".join(diag) + "\n"))

    # plot-ready long tables: observed curves, smoothed curves, per-age centred series
    written.append(_write_rows(out / "observed.csv", head, ["year", "age", "log_rate"], _long_rows(surface, surface.values)))
    written.append(_write_rows(out / "smoothed.csv", head, ["year", "age", "log_rate"], _long_rows(smoothed, smoothed.values)))
    fstar = center(smoothed.values, dec.mu)
    rows = ([age, int(year), repr(float(fstar[t, i]))]
            for i, age in enumerate(surface.ages) for t, year in enumerate(surface.years))
    written.append(_write_rows(out / "age_series.csv", head, ["age", "year", "centred_log_rate"], rows))
    return written


def cmd_forecast(config: dict) -> list[FsPath]:
    surface = load(config)
    model = model_config(config, config["model"])
    h = config["h"]
    head = header_lines("forecast", config, surface)
    extra = []
    if model.model == "naive":
        curves = model.forecast(surface, h)
    else:
        smoothed = smooth_surface(surface, cfg=model.smoothing)
        curves, arimas = forecast_surface(model.fit(smoothed), h, return_models=True)
        extra = [f"score{k + 1} {m.describe()}" for k, m in enumerate(arimas)]
    last = int(surface.years[-1])
    rows = ([last + s + 1, age, repr(float(curves[s, i]))]
            for s in range(h) for i, age in enumerate(surface.ages))
    return [_write_rows(FsPath(config["out"]) / "forecast.csv", head + extra, ["year", "age", "predicted"], rows)]


def default_window(surface) -> tuple[int, int]:
    last = int(surface.years[-1])
    return last - 19, last


def cmd_backtest(config: dict) -> list[FsPath]:
    surface = load(config)
    first, last = config["window"] or default_window(surface)
    config = dict(config, window=(first, last))
    models = tuple(model_config(config, m) for m in config["models"])
    plan = BacktestPlan(first, last, config["horizons"], models, config["seed"])
    report = run_backtest(surface, plan, jobs=config["jobs"])
    seeds = {o: derive_seed(plan.seed, o) for o in plan.origins}
    head = header_lines("backtest", config, surface, {"origin_seeds": json.dumps(seeds)})
    for name, origin, msg in report.failures:
        head.append(f"failure {name} origin={origin}: {msg}")
    out = FsPath(config["out"])
    return [
        _write_text(out / "summary.csv", head, report.summary_csv()),
        _write_text(out / "table.csv", head, report.wide_csv()),
        _write_text(out / "long.csv", head, report.long_csv()),
    ]


def cmd_features(config: dict) -> list[FsPath]:
    surface = load(config)
    model = model_config(config, config["model"])
    smoothed = smooth_surface(surface, cfg=model.smoothing)
    values = smoothed.values
    fstar = center(values, mean_function(values))
    featurizer = model.featurizer()
    fm = feature_matrix(fstar, featurizer)
    extra = {"featurizer": fm.featurizer_tag}
    if model.model == "hurs":
        params = sample_params(3, model.k, model.seed, featurizer.activation, model.zero_start)
        extra["params_fingerprint"] = params.fingerprint()
    extra["dropped_columns"] = json.dumps(fm.dropped_columns.tolist())
    head = header_lines("features", config, surface, extra)
    columns = ["age"] + [f"f{j + 1}" for j in fm.kept_columns]
    rows = ([age] + [repr(float(v)) for v in row] for age, row in zip(surface.ages, fm.values))
    return [_write_rows(FsPath(config["out"]) / "features.csv", head, columns, rows)]


HANDLERS = {"fit": cmd_fit, "forecast": cmd_forecast, "backtest": cmd_backtest, "features": cmd_features}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("missing command; choose from " + ", ".join(COMMANDS))
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    config, _ = resolve_config(args.command, flags, args.config)
    print("resolved config " + json.dumps(_jsonable(config), sort_keys=True), file=stdout)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        written = HANDLERS[args.command](config)
    for path in written:
        print(f"wrote {path}", file=stdout)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SigmortError as exc:
        print(f"error[{exc.kind}]: {_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[data]: {_one_line(exc)}", file=sys.stderr)
        return DataError.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error[numeric]: {_one_line(exc)}", file=sys.stderr)
        return 4


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
