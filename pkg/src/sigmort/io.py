"""Mortality data ingestion: HMD 1x1 tables and surface CSV matrices."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import NamedTuple

import numpy as np

from sigmort.errors import DataError

LOG_BAND = (-15.0, 1.0)
COLUMNS = ("female", "male", "total")


@dataclass(frozen=True)
class MortalitySurface:
    """Year x age grid of mortality rates.

    ``ages`` are string labels ``"0", "1", ..., "99", "100+"``; the last label
    may carry a ``+`` for the open age group. ``exposures`` is optional and
    aligned with ``values``.
    """

    years: np.ndarray
    ages: tuple[str, ...]
    values: np.ndarray
    scale_tag: str = "log"
    provenance: dict = field(default_factory=dict, compare=False)
    exposures: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        years = np.asarray(self.years, dtype=int).reshape(-1)
        values = np.array(self.values, dtype=float)
        ages = tuple(str(a) for a in self.ages)
        if values.shape != (years.size, len(ages)):
            raise DataError(f"values shape {values.shape} does not match {years.size} years x {len(ages)} ages")
        if years.size > 1 and np.any(np.diff(years) != 1):
            raise DataError("years must be contiguous and increasing")
        for a in ages[:-1]:
            if a.endswith("+"):
                raise DataError(f"only the last age group may be open, got {a!r}")
        nums = [_age_number(a) for a in ages]
        if len(nums) > 1 and np.any(np.diff(nums) != 1):
            raise DataError("ages must be contiguous single years")
        if self.scale_tag not in ("log", "raw"):
            raise DataError(f"scale_tag must be 'log' or 'raw', got {self.scale_tag!r}")
        years.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ages", ages)
        if self.exposures is not None:
            exp = np.array(self.exposures, dtype=float)
            if exp.shape != values.shape:
                raise DataError(f"exposures shape {exp.shape} does not match values {values.shape}")
            exp.setflags(write=False)
            object.__setattr__(self, "exposures", exp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MortalitySurface):
            return NotImplemented
        return (
            np.array_equal(self.years, other.years)
            and self.ages == other.ages
            and self.scale_tag == other.scale_tag
            and np.array_equal(self.values, other.values)
        )

    @property
    def age_grid(self) -> np.ndarray:
        return np.array([_age_number(a) for a in self.ages], dtype=float)

    @property
    def n_years(self) -> int:
        return self.years.size

    @property
    def n_ages(self) -> int:
        return len(self.ages)

    def with_values(self, values, **changes) -> "MortalitySurface":
        return replace(self, values=values, **changes)

    def select_years(self, first: int, last: int) -> "MortalitySurface":
        mask = (self.years >= first) & (self.years <= last)
        if not np.any(mask):
            raise DataError(f"no years in [{first}, {last}]")
        exp = None if self.exposures is None else self.exposures[mask]
        return replace(self, years=self.years[mask], values=self.values[mask], exposures=exp)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(",".join(self.ages).encode())
        h.update(np.ascontiguousarray(self.years, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _age_number(label: str) -> int:
    try:
        return int(label.rstrip("+"))
    except ValueError as exc:
        raise DataError(f"bad age label {label!r}") from exc


# --------------------------------------------------------------------------- HMD


class HmdRecord(NamedTuple):
    year: int
    age: int
    open_age: bool
    female: float
    male: float
    total: float


def _parse_value(token: str, lineno: int) -> float:
    if token == ".":
        return math.nan
    try:
        return float(token)
    except ValueError as exc:
        raise DataError(f"line {lineno}: bad numeric value {token!r}") from exc


def parse_hmd_table(file) -> list[HmdRecord]:
    """Parse an HMD 1x1 table (``Mx_1x1.txt``, ``Exposures_1x1.txt``, ...).

    The header block (title line, blank line, column header) is skipped. Missing
    values ``"."`` become NaN; ``"110+"`` sets ``open_age``.
    """
    text = FsPath(file).read_text(encoding="utf-8") if not hasattr(file, "read") else file.read()
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise DataError("empty HMD file")
    start = 0
    for i, line in enumerate(lines):
        if not line.strip():
            start = i + 1
            break
    else:
        for i, line in enumerate(lines):
            if line.split()[:1] == ["Year"]:
                start = i
                break
    records = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0].lower() == "year":
            continue
        if len(tokens) != 5:
            raise DataError(f"line {lineno}: expected 5 columns (Year Age Female Male Total), got {len(tokens)}")
        year_tok, age_tok = tokens[0], tokens[1]
        try:
            year = int(year_tok)
            open_age = age_tok.endswith("+")
            age = int(age_tok.rstrip("+"))
        except ValueError as exc:
            raise DataError(f"line {lineno}: bad year/age {year_tok!r} {age_tok!r}") from exc
        f, m, t = (_parse_value(tok, lineno) for tok in tokens[2:])
        records.append(HmdRecord(year, age, open_age, f, m, t))
    if not records:
        raise DataError("HMD file has no data rows")
    return records


def _table(records, column: str) -> dict[tuple[int, int], float]:
    if column not in COLUMNS:
        raise DataError(f"column must be one of {COLUMNS}, got {column!r}")
    table = {}
    for r in records:
        key = (r.year, r.age)
        if key in table:
            raise DataError(f"duplicate record for year {r.year}, age {r.age}")
        table[key] = getattr(r, column)
    return table


def build_surface(
    mx_records,
    exposure_records=None,
    max_age: int = 100,
    start_year: int | None = None,
    end_year: int | None = None,
    column: str = "total",
    country: str = "",
) -> MortalitySurface:
    """Shape HMD records into a log-rate surface with ages ``0..max_age-1, max_age+``.

    Ages ``>= max_age`` are merged into the open group: exposure-weighted when
    exposures are given, otherwise the plain mean of available rates. Zero or
    missing rates are replaced by the smallest positive rate seen at that age
    across years.
    """
    mx = _table(mx_records, column)
    ex = _table(exposure_records, column) if exposure_records is not None else None
    all_years = sorted({y for y, _ in mx})
    start_year = all_years[0] if start_year is None else start_year
    end_year = all_years[-1] if end_year is None else end_year
    if end_year < start_year:
        raise DataError(f"end year {end_year} precedes start year {start_year}")
    years = np.arange(start_year, end_year + 1)
    present = set(all_years)
    for y in years:
        if y not in present:
            raise DataError(f"year {y} missing from the mortality records")
    data_ages = sorted({a for _, a in mx})
    if max_age > data_ages[-1]:
        raise DataError(f"max_age {max_age} exceeds the oldest age in the data ({data_ages[-1]})")
    if data_ages[0] != 0:
        raise DataError("records must start at age 0")

    rates = np.full((years.size, max_age + 1), np.nan)
    expo = np.full((years.size, max_age + 1), np.nan) if ex is not None else None
    upper = [a for a in data_ages if a >= max_age]
    for i, y in enumerate(years):
        for a in range(max_age):
            rates[i, a] = mx.get((y, a), math.nan)
            if ex is not None:
                expo[i, a] = ex.get((y, a), math.nan)
        m_up = np.array([mx.get((y, a), math.nan) for a in upper])
        if ex is not None:
            e_up = np.array([ex.get((y, a), math.nan) for a in upper])
            ok = np.isfinite(m_up) & np.isfinite(e_up) & (e_up > 0)
            if np.any(ok):
                rates[i, max_age] = np.sum(m_up[ok] * e_up[ok]) / np.sum(e_up[ok])
            expo[i, max_age] = np.nansum(e_up)
        else:
            ok = np.isfinite(m_up)
            if np.any(ok):
                rates[i, max_age] = float(np.mean(m_up[ok]))

    bad = ~np.isfinite(rates) | (rates <= 0)
    for i, y in enumerate(years):
        if np.all(bad[i]):
            raise DataError(f"year {y} has no usable rates")
    n_repairs = 0
    for a in range(max_age + 1):
        col_bad = bad[:, a]
        if not np.any(col_bad):
            continue
        if np.all(col_bad):
            raise DataError(f"age {a} has no positive rate in any year")
        rates[col_bad, a] = rates[~col_bad, a].min()
        n_repairs += int(col_bad.sum())

    log_rates = np.log(rates)
    lo, hi = LOG_BAND
    if np.any(log_rates < lo) or np.any(log_rates > hi):
        raise DataError(
            f"log rates outside sanity band [{lo}, {hi}] (range {log_rates.min():.3g}..{log_rates.max():.3g}); "
            "check units"
        )
    if expo is not None:
        expo = np.where(np.isfinite(expo), expo, 0.0)
    ages = tuple(str(a) for a in range(max_age)) + (f"{max_age}+",)
    prov = {"country": country, "column": column, "max_age": max_age, "repairs": n_repairs}
    return MortalitySurface(years, ages, log_rates, "log", prov, expo)


# --------------------------------------------------------------------------- CSV


def parse_csv_matrix(file) -> MortalitySurface:
    """Read a surface CSV: ``#scale=log|raw`` pragma, header ``year,<ages>``, one row per year.

    Other ``#`` lines are comments. Raw values are log-transformed.
    """
    path = FsPath(file)
    lines = path.read_text(encoding="utf-8").splitlines()
    scale = "log"
    rows = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip().replace(" ", "")
            if body.startswith("scale="):
                scale = body.split("=", 1)[1]
                if scale not in ("log", "raw"):
                    raise DataError(f"line {lineno}: scale pragma must be log or raw, got {scale!r}")
            continue
        cells = [c.strip() for c in s.split(",")]
        if header is None:
            if cells[0].lower() != "year":
                raise DataError(f"line {lineno}: first header cell must be 'year'")
            header = cells[1:]
            continue
        if len(cells) != len(header) + 1:
            raise DataError(f"line {lineno}: ragged row ({len(cells)} cells, expected {len(header) + 1})")
        try:
            rows.append((int(cells[0]), [float(c) for c in cells[1:]], lineno))
        except ValueError as exc:
            raise DataError(f"line {lineno}: non-numeric cell") from exc
    if header is None or not rows:
        raise DataError(f"{path}: no header or no data rows")
    seen = {}
    for year, _, lineno in rows:
        if year in seen:
            raise DataError(f"duplicate year {year} (lines {seen[year]} and {lineno})")
        seen[year] = lineno
    rows.sort(key=lambda r: r[0])
    years = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows])
    if not np.all(np.isfinite(values)):
        raise DataError("surface CSV contains non-finite values")
    if scale == "raw":
        if np.any(values <= 0):
            raise DataError("raw rates must be positive to take logs")
        values = np.log(values)
    return MortalitySurface(years, tuple(header), values, "log", {"source": str(path)})


def format_csv_matrix(surface: MortalitySurface, header_lines=()) -> str:
    out = [f"# {h}" for h in header_lines]
    out.append(f"#scale={surface.scale_tag}")
    out.append(",".join(("year",) + surface.ages))
    for y, row in zip(surface.years, surface.values):
        out.append(",".join([str(int(y))] + [repr(float(v)) for v in row]))
    return "\n".join(out) + "\n"


def write_csv_matrix(surface: MortalitySurface, file, header_lines=()) -> None:
    FsPath(file).write_text(format_csv_matrix(surface, header_lines), encoding="utf-8")


def file_fingerprint(file) -> str:
    return hashlib.sha256(FsPath(file).read_bytes()).hexdigest()[:16]


def _country_label(path: FsPath) -> str:
    """``JPN.Mx_1x1.txt`` -> ``JPN``; a bare ``Mx_1x1.txt`` takes its folder's name."""
    stem = path.name.split(".")[0]
    if stem.lower().startswith(("mx_", "exposures_")):
        return path.resolve().parent.name
    return stem


def load_surface(
    data,
    exposures=None,
    fmt: str = "auto",
    max_age: int = 100,
    start_year: int | None = None,
    end_year: int | None = None,
    column: str = "total",
) -> MortalitySurface:
    """Load either a surface CSV or an HMD ``Mx_1x1`` table (plus optional exposures)."""
    path = FsPath(data)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    if fmt == "auto":
        head = path.read_text(encoding="utf-8").lstrip()[:200].lower()
        fmt = "csv" if head.startswith("#") or head.startswith("year,") else "hmd"
    if fmt == "csv":
        surface = parse_csv_matrix(path)
        if start_year is not None or end_year is not None:
            surface = surface.select_years(
                start_year if start_year is not None else int(surface.years[0]),
                end_year if end_year is not None else int(surface.years[-1]),
            )
        prov = dict(surface.provenance, inputs={str(path): file_fingerprint(path)})
        return replace(surface, provenance=prov)
    if fmt != "hmd":
        raise DataError(f"unknown data format {fmt!r}")
    exp_records = parse_hmd_table(exposures) if exposures is not None else None
    surface = build_surface(
        parse_hmd_table(path), exp_records, max_age, start_year, end_year, column,
        country=_country_label(path),
    )
    inputs = {str(path): file_fingerprint(path)}
    if exposures is not None:
        inputs[str(exposures)] = file_fingerprint(exposures)
    return replace(surface, provenance=dict(surface.provenance, inputs=inputs))
