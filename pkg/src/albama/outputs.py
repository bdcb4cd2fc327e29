"""Tidy CSV files written by the command-line tool, and readers for each.

Floats are written with ``repr`` so they read back bit-for-bit; undefined
values are empty cells. Every writer is deterministic: same inputs, same
bytes.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np

from .errors import DataError, MissingColumnError
from .filters import FilterOutput
from .forest import BucketShares, WeightMatrix
from .series import TimeSeries, format_month

PathLike = Union[str, Path]


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _parse(x: str) -> float:
    return float(x) if x != "" else math.nan


def _writer(path: PathLike, header: Sequence[str]):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def _rows(path: PathLike, required: Sequence[str]) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing}")
        return list(reader)


# ------------------------------------------------------------------ simulation


def write_simulation(path: PathLike, dates: Sequence[str], signal: np.ndarray, noisy: np.ndarray) -> None:
    fh, w = _writer(path, ["date", "signal", "noisy"])
    with fh:
        for d, s, y in zip(dates, signal, noisy):
            w.writerow([d, _fmt(s), _fmt(y)])


def read_simulation(path: PathLike) -> tuple[list[str], np.ndarray, np.ndarray]:
    rows = _rows(path, ["date", "signal", "noisy"])
    return ([r["date"] for r in rows], np.array([_parse(r["signal"]) for r in rows]),
            np.array([_parse(r["noisy"]) for r in rows]))


# ---------------------------------------------------------------------- fitted


class FittedRecord(NamedTuple):
    date: str
    mode: str
    value: float


def write_fitted(path: PathLike, fits: Mapping[str, TimeSeries]) -> None:
    """``date,mode,value``; modes in mapping order, dates ascending within a mode."""
    fh, w = _writer(path, ["date", "mode", "value"])
    with fh:
        for mode, ts in fits.items():
            for d, v in zip(ts.dates, ts.values):
                w.writerow([d, mode, _fmt(v)])


def read_fitted(path: PathLike) -> list[FittedRecord]:
    return [FittedRecord(r["date"], r["mode"], _parse(r["value"]))
            for r in _rows(path, ["date", "mode", "value"])]


# --------------------------------------------------------------------- weights


def _dates(weights: WeightMatrix) -> list[str]:
    if weights.timestamps is None:
        return [str(i) for i in range(weights.n_obs)]
    return [format_month(s) for s in weights.timestamps]


def write_weights_dense(path: PathLike, matrices: Mapping[str, WeightMatrix]) -> None:
    """One row per emitted estimate: ``mode,date`` then one column per source date.

    All matrices must share a time axis; the source-date columns come from
    the first one.
    """
    if not matrices:
        raise DataError("no weight matrices to write")
    first = next(iter(matrices.values()))
    cols = _dates(first)
    fh, w = _writer(path, ["mode", "date", *cols])
    with fh:
        for mode, W in matrices.items():
            if W.n_obs != first.n_obs:
                raise DataError("weight matrices have different widths")
            for t, row in zip(W.rows, W.values):
                w.writerow([mode, cols[t], *map(_fmt, row)])


def read_weights_dense(path: PathLike) -> dict[str, tuple[list[str], list[str], np.ndarray]]:
    """``mode -> (row dates, column dates, matrix)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["mode", "date"]:
            raise MissingColumnError(f"{path}: expected 'mode,date' leading columns")
        cols = header[2:]
        out: dict[str, tuple[list[str], list[list[float]]]] = {}
        for rec in reader:
            dates, vals = out.setdefault(rec[0], ([], []))
            dates.append(rec[1])
            vals.append([_parse(x) for x in rec[2:]])
    return {m: (d, list(cols), np.array(v).reshape(len(d), len(cols))) for m, (d, v) in out.items()}


class WeightRecord(NamedTuple):
    mode: str
    date: str
    source_date: str
    lag: int
    weight: float


def write_weights_long(path: PathLike, matrices: Mapping[str, WeightMatrix]) -> None:
    """Nonzero weights only: ``mode,date,source_date,lag,weight`` with ``lag = t - tau``."""
    fh, w = _writer(path, ["mode", "date", "source_date", "lag", "weight"])
    with fh:
        for mode, W in matrices.items():
            names = _dates(W)
            for t, row in zip(W.rows, W.values):
                for tau in np.flatnonzero(row):
                    w.writerow([mode, names[t], names[tau], int(t - tau), _fmt(row[tau])])


def read_weights_long(path: PathLike) -> list[WeightRecord]:
    return [WeightRecord(r["mode"], r["date"], r["source_date"], int(r["lag"]), float(r["weight"]))
            for r in _rows(path, ["mode", "date", "source_date", "lag", "weight"])]


class BucketRecord(NamedTuple):
    mode: str
    date: str
    bucket: str
    share: float


def write_buckets(path: PathLike, shares: Mapping[str, BucketShares]) -> None:
    fh, w = _writer(path, ["mode", "date", "bucket", "share"])
    with fh:
        for mode, s in shares.items():
            names = ([format_month(x) for x in s.timestamps] if s.timestamps is not None
                     else [str(r) for r in s.rows])
            for i, d in enumerate(names):
                for g, b in enumerate(s.names):
                    w.writerow([mode, d, b, _fmt(s.shares[i, g])])


def read_buckets(path: PathLike) -> list[BucketRecord]:
    return [BucketRecord(r["mode"], r["date"], r["bucket"], float(r["share"]))
            for r in _rows(path, ["mode", "date", "bucket", "share"])]


# ------------------------------------------------------------------- benchmark


class BenchmarkRecord(NamedTuple):
    date: str
    method: str
    value: float
    defined: bool
    status: str


def write_benchmark(path: PathLike, dates: Sequence[str],
                    results: Iterable[tuple[str, FilterOutput, str]]) -> None:
    """Long table ``date,method,value,defined,status``; one block per method in the order given."""
    fh, w = _writer(path, ["date", "method", "value", "defined", "status"])
    with fh:
        for method, out, status in results:
            for d, v, ok in zip(dates, out.values, out.defined):
                w.writerow([d, method, _fmt(v) if ok else "", "1" if ok else "0", status])


def read_benchmark(path: PathLike) -> list[BenchmarkRecord]:
    return [BenchmarkRecord(r["date"], r["method"], _parse(r["value"]), r["defined"] == "1", r["status"])
            for r in _rows(path, ["date", "method", "value", "defined", "status"])]
