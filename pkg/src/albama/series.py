"""Monthly time-series container, CSV/JSON I/O, growth transforms and sample windows."""

from __future__ import annotations

import csv
import enum
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DataError,
    DateParseError,
    DuplicateDateError,
    EmptyWindowError,
    GapError,
    MissingColumnError,
    NonFiniteError,
    NonPositiveValueError,
    SeriesTooShortError,
)

_DATE_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")


def parse_month(text: str) -> np.datetime64:
    """Parse ``YYYY-MM`` or ``YYYY-MM-DD`` into a monthly ``datetime64``.

    The day component, when present, is validated and then discarded.
    """
    m = _DATE_RE.match(str(text))
    if m is None:
        raise DateParseError(f"cannot parse date {text!r}; expected YYYY-MM or YYYY-MM-DD")
    year, month, day = int(m.group(1)), int(m.group(2)), m.group(3)
    if not 1 <= month <= 12:
        raise DateParseError(f"month out of range in {text!r}")
    if day is not None:
        try:
            np.datetime64(f"{year:04d}-{month:02d}-{int(day):02d}", "D")
        except ValueError as exc:
            raise DateParseError(f"invalid day in {text!r}") from exc
    return np.datetime64(f"{year:04d}-{month:02d}", "M")


def format_month(stamp: np.datetime64) -> str:
    return str(np.datetime64(stamp, "M"))


def month_range(start: Union[str, np.datetime64], n: int) -> np.ndarray:
    """``n`` consecutive monthly stamps starting at ``start``."""
    first = parse_month(start) if isinstance(start, str) else np.datetime64(start, "M")
    return first + np.arange(n)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Gap-free monthly series of finite real values.

    Parameters
    ----------
    timestamps : array of ``datetime64[M]`` (or strings ``YYYY-MM``)
        Strictly increasing consecutive months.
    values : array_like of float
        One finite value per timestamp.
    name : str
        Label used by writers and reports.
    """

    timestamps: np.ndarray
    values: np.ndarray
    name: str = "value"

    def __post_init__(self) -> None:
        ts = self.timestamps
        if not (isinstance(ts, np.ndarray) and ts.dtype == np.dtype("datetime64[M]")):
            ts = np.array([parse_month(s) if isinstance(s, str) else np.datetime64(s, "M") for s in ts],
                          dtype="datetime64[M]")
        else:
            ts = ts.copy()
        vals = np.array(self.values, dtype=float).reshape(-1)
        if ts.ndim != 1 or ts.shape[0] != vals.shape[0]:
            raise DataError("timestamps and values must be 1-d and of equal length")
        if vals.size < 1:
            raise SeriesTooShortError("a time series needs at least one observation")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NonFiniteError(f"non-finite value at {format_month(ts[bad])}")
        steps = np.diff(ts).astype(np.int64)
        if np.any(steps == 0):
            bad = int(np.flatnonzero(steps == 0)[0]) + 1
            raise DuplicateDateError(f"duplicate month {format_month(ts[bad])}")
        if np.any(steps != 1):
            bad = int(np.flatnonzero(steps != 1)[0])
            raise GapError(f"months not consecutive between {format_month(ts[bad])} "
                           f"and {format_month(ts[bad + 1])}")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def from_values(cls, values: Sequence[float], start: str = "2000-01", name: str = "value") -> "TimeSeries":
        vals = np.asarray(values, dtype=float)
        return cls(month_range(start, vals.size), vals, name)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def dates(self) -> list[str]:
        return [format_month(s) for s in self.timestamps]

    def with_values(self, values: Sequence[float], name: str | None = None) -> "TimeSeries":
        return TimeSeries(self.timestamps, np.asarray(values, dtype=float), name or self.name)

    def head(self, n: int) -> "TimeSeries":
        """First ``n`` observations (an expanding-window prefix)."""
        return TimeSeries(self.timestamps[:n], self.values[:n], self.name)

    def tail_from(self, start: int) -> "TimeSeries":
        return TimeSeries(self.timestamps[start:], self.values[start:], self.name)


def as_values(y: Union[TimeSeries, Sequence[float], np.ndarray]) -> np.ndarray:
    """Plain float array view of a series or array-like."""
    if isinstance(y, TimeSeries):
        return y.values
    arr = np.asarray(y, dtype=float).reshape(-1)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NonFiniteError("input contains non-finite values")
    return arr


# --------------------------------------------------------------------------- I/O


def load_csv(path: Union[str, Path], date_column: str = "date", value_column: str = "value",
             name: str | None = None) -> TimeSeries:
    """Read a monthly series from a UTF-8 CSV with a header row.

    Rows may appear in any order; they are sorted by date. Duplicate months,
    gaps, unparseable dates and non-finite values each raise their own
    ``DataError`` subclass.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (date_column, value_column):
            if col not in header:
                raise MissingColumnError(f"{path}: column {col!r} not found (have {header})")
        stamps, vals = [], []
        for lineno, row in enumerate(reader, start=2):
            raw_date, raw_val = row[date_column], row[value_column]
            try:
                stamps.append(parse_month(raw_date))
            except DateParseError as exc:
                raise DateParseError(f"{path}:{lineno}: {exc}") from None
            try:
                val = float(raw_val)
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: cannot parse value {raw_val!r}") from None
            if not math.isfinite(val):
                raise NonFiniteError(f"{path}:{lineno}: non-finite value {raw_val!r}")
            vals.append(val)
    if not stamps:
        raise SeriesTooShortError(f"{path}: no data rows")
    ts = np.array(stamps, dtype="datetime64[M]")
    order = np.argsort(ts, kind="stable")
    return TimeSeries(ts[order], np.asarray(vals)[order], name or value_column)


def write_csv(series: TimeSeries, path: Union[str, Path]) -> None:
    """Write ``date,value`` rows; floats use ``repr`` so they read back exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        for d, v in zip(series.dates, series.values):
            w.writerow([d, repr(float(v))])


def write_json(series: TimeSeries, path: Union[str, Path]) -> None:
    payload = {"name": series.name,
               "data": [{"date": d, "value": float(v)} for d, v in zip(series.dates, series.values)]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def read_json(path: Union[str, Path]) -> TimeSeries:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = payload["data"]
    return TimeSeries([r["date"] for r in rows], [r["value"] for r in rows], payload.get("name", "value"))


# --------------------------------------------------------------------- transforms


class TransformKind(str, enum.Enum):
    NONE = "none"
    PCT_CHANGE = "pct_change"
    LOG_DIFF = "log_diff"
    ANNUALIZED_MOM = "annualized_mom"
    YOY = "yoy"

    @property
    def lag(self) -> int:
        return {"none": 0, "yoy": 12}.get(self.value, 1)


def transform(series: TimeSeries, kind: Union[TransformKind, str]) -> TimeSeries:
    """Growth-rate transform in percent; the first ``lag`` observations are dropped."""
    kind = TransformKind(kind)
    lag = kind.lag
    if lag == 0:
        return series
    x = series.values
    if len(x) <= lag:
        raise SeriesTooShortError(f"{kind.value} needs at least {lag + 1} observations, got {len(x)}")
    if np.any(x <= 0):
        raise NonPositiveValueError(f"{kind.value} requires strictly positive values")
    ratio = x[lag:] / x[:-lag]
    if kind is TransformKind.PCT_CHANGE or kind is TransformKind.YOY:
        out = (ratio - 1.0) * 100.0
    elif kind is TransformKind.LOG_DIFF:
        out = 100.0 * (np.log(x[lag:]) - np.log(x[:-lag]))
    else:
        out = (ratio ** 12 - 1.0) * 100.0
    return TimeSeries(series.timestamps[lag:], out, series.name)


# ------------------------------------------------------------------------ windows


@dataclass(frozen=True)
class Window:
    """Named evaluation sample: an optional month range minus excluded calendar years."""

    name: str
    start: np.datetime64 | None = None
    end: np.datetime64 | None = None
    exclude_years: tuple[int, ...] = ()
    custom: bool = False

    @classmethod
    def between(cls, start: str, end: str, name: str | None = None) -> "Window":
        s, e = parse_month(start), parse_month(end)
        if e < s:
            raise DataError(f"window end {end} precedes start {start}")
        return cls(name or f"{format_month(s)}:{format_month(e)}", s, e, custom=True)


WINDOWS: dict[str, Window] = {
    "full": Window("full"),
    "full_ex_covid": Window("full_ex_covid", exclude_years=(2020,)),
    "post_1990": Window("post_1990", start=np.datetime64("1990-01", "M")),
    "post_2020": Window("post_2020", start=np.datetime64("2020-01", "M")),
    "post_2021": Window("post_2021", start=np.datetime64("2021-01", "M")),
    "great_recession": Window("great_recession", np.datetime64("2008-01", "M"), np.datetime64("2011-12", "M")),
}


def get_window(spec: Union[str, Window]) -> Window:
    """Resolve a window name, or ``START:END`` (optionally ``custom:START:END``), to a ``Window``."""
    if isinstance(spec, Window):
        return spec
    key = spec.strip()
    if key in WINDOWS:
        return WINDOWS[key]
    parts = key.split(":")
    if parts[0] == "custom":
        parts = parts[1:]
    if len(parts) == 2:
        return Window.between(parts[0], parts[1])
    raise DataError(f"unknown window {spec!r}; choose from {sorted(WINDOWS)} or START:END")


def mask_for_window(series: Union[TimeSeries, np.ndarray], window: Union[str, Window]) -> np.ndarray:
    """Boolean mask, one entry per observation, true inside ``window``."""
    win = get_window(window)
    ts = series.timestamps if isinstance(series, TimeSeries) else np.asarray(series, dtype="datetime64[M]")
    mask = np.ones(ts.shape[0], dtype=bool)
    if win.start is not None:
        mask &= ts >= win.start
    if win.end is not None:
        mask &= ts <= win.end
    if win.exclude_years:
        years = ts.astype("datetime64[Y]").astype(int) + 1970
        mask &= ~np.isin(years, win.exclude_years)
    if win.custom and not mask.any():
        raise EmptyWindowError(f"window {win.name} does not overlap the series range "
                               f"{format_month(ts[0])}..{format_month(ts[-1])}")
    return mask


def resolve_windows(specs: Iterable[Union[str, Window]]) -> list[Window]:
    return [get_window(s) for s in specs]
