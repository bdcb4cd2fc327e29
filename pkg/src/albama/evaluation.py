"""Real-time consistency scoring: how well one-sided estimates track their two-sided counterparts.

The score is an R^2 with the one-sided estimate used as the prediction of the
two-sided one, slope pinned to 1 and intercept to 0:

    R^2 = 1 - sum (two - one)^2 / sum (two - mean(two))^2

so it is at most 1 and negative when the one-sided series does worse than a
flat line at the two-sided mean.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import filters
from .errors import AlbamaError, DataError, ZeroVarianceError
from .filters import FilterOutput
from .forest import ForestParams, fit_one_sided, fit_two_sided, forest_fitted
from .series import TimeSeries, Window, get_window, mask_for_window

logger = logging.getLogger(__name__)


class InsufficientOverlapError(DataError):
    pass


ZERO_SPREAD_RTOL = 1e-12


def _as_output(x: Union[FilterOutput, np.ndarray, Sequence[float]]) -> FilterOutput:
    if isinstance(x, FilterOutput):
        return x
    arr = np.asarray(x, dtype=float)
    return FilterOutput(arr, np.isfinite(arr))


def r2_fixed_unit(one_sided: Union[FilterOutput, np.ndarray], two_sided: Union[FilterOutput, np.ndarray],
                  mask: Optional[np.ndarray] = None, full_sample_mean: bool = False) -> float:
    """Fixed-unit R^2 of ``one_sided`` against ``two_sided`` on the common defined, masked points.

    Parameters
    ----------
    mask : bool array, optional
        Evaluation window; all points when omitted.
    full_sample_mean : bool
        Centre the denominator on the mean of every defined two-sided value
        instead of the window-local mean.

    Raises
    ------
    InsufficientOverlapError
        Fewer than two usable points.
    ZeroVarianceError
        The two-sided series is constant on the usable points.
    """
    one, two = _as_output(one_sided), _as_output(two_sided)
    if len(one) != len(two):
        raise DataError(f"series lengths differ: {len(one)} vs {len(two)}")
    use = one.defined & two.defined
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != use.shape:
            raise DataError("mask length does not match the series")
        use &= mask
    n = int(use.sum())
    if n < 2:
        raise InsufficientOverlapError(f"only {n} common observation(s) in the evaluation window")
    a, b = one.values[use], two.values[use]
    centre = two.values[two.defined].mean() if full_sample_mean else b.mean()
    sst = float(np.sum((b - centre) ** 2))
    # filters of a constant are only constant up to rounding, so compare the spread to the level
    if sst == 0.0 or np.ptp(b) <= ZERO_SPREAD_RTOL * float(np.abs(b).max()):
        raise ZeroVarianceError("two-sided estimate has zero variance in the evaluation window")
    return 1.0 - float(np.sum((b - a) ** 2)) / sst


# ----------------------------------------------------------------- method pairs


@dataclass(frozen=True)
class EvalSettings:
    """Parameters shared by all method pairs."""

    forest: ForestParams = field(default_factory=ForestParams)
    warmup: int = 24
    sg_window: int = 11
    sg_order: int = 3
    n_jobs: Optional[int] = 1
    full_sample_mean: bool = False


def albama_outputs(y: TimeSeries, settings: EvalSettings) -> tuple[FilterOutput, FilterOutput]:
    est, _ = fit_one_sided(y, settings.forest, settings.warmup, settings.n_jobs)
    one = FilterOutput.from_series(est, y, "AlbaMA 1s")
    two_ts = forest_fitted(fit_two_sided(y, settings.forest))
    two = FilterOutput(two_ts.values, np.ones(len(y), dtype=bool), y.timestamps, "AlbaMA 2s")
    return one, two


def _pair(name: str, settings: EvalSettings) -> Callable[[TimeSeries], tuple[FilterOutput, FilterOutput]]:
    ma1, ma2 = filters.ma_one_sided, filters.ma_two_sided
    table = {
        "AlbaMA": lambda y: albama_outputs(y, settings),
        "SG": lambda y: (filters.sg_one_sided(y, settings.sg_window, settings.sg_order),
                         filters.sg_two_sided(y, settings.sg_window, settings.sg_order)),
        "MA(3)": lambda y: (ma1(y, 3), ma2(y, 3)),
        "MA(6)": lambda y: (ma1(y, 6), ma2(y, 6)),
        "MA(12)": lambda y: (ma1(y, 12), ma2(y, 12)),
        "MA(6) vs (3)": lambda y: (ma1(y, 3), ma2(y, 6)),
        "MA(12) vs (6)": lambda y: (ma1(y, 6), ma2(y, 12)),
    }
    if name not in table:
        raise DataError(f"unknown method pair {name!r}; choose from {list(table)}")
    return table[name]


METHOD_PAIRS: tuple[str, ...] = ("AlbaMA", "SG", "MA(3)", "MA(6)", "MA(12)", "MA(6) vs (3)", "MA(12) vs (6)")


@dataclass
class ReportRow:
    variable: str
    method: str
    window: str
    r2: float
    n_obs: int
    error: str = ""


def paired_method_r2(y: TimeSeries, method: str, windows: Iterable[Union[str, Window]],
                     settings: EvalSettings = EvalSettings(), variable: Optional[str] = None) -> list[ReportRow]:
    """Score one method pair on every window.

    Windows are scored independently. A failure in one window (too few
    points, zero variance) is recorded on that row and does not stop the
    others.
    """
    variable = variable or y.name
    wins = [get_window(w) for w in windows]
    compute = _pair(method, settings)
    try:
        one, two = compute(y)
    except AlbamaError as exc:
        return [ReportRow(variable, method, w.name, math.nan, 0, f"{type(exc).__name__}: {exc}") for w in wins]
    rows = []
    for w in wins:
        try:
            mask = mask_for_window(y, w)
            use = one.defined & two.defined & mask
            r2 = r2_fixed_unit(one, two, mask, settings.full_sample_mean)
            rows.append(ReportRow(variable, method, w.name, r2, int(use.sum())))
        except AlbamaError as exc:
            rows.append(ReportRow(variable, method, w.name, math.nan, 0, f"{type(exc).__name__}: {exc}"))
    return rows


# ---------------------------------------------------------------------- reports


@dataclass(frozen=True)
class BoxStats:
    method: str
    window: str
    n: int
    median: float
    q1: float
    q3: float
    min: float
    max: float


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)

    def summary(self) -> list[BoxStats]:
        """Boxplot statistics across variables per (method, window); linear-interpolation quantiles."""
        groups: dict[tuple[str, str], list[float]] = {}
        for r in self.rows:
            groups.setdefault((r.method, r.window), [])
            if not r.error and math.isfinite(r.r2):
                groups[(r.method, r.window)].append(r.r2)
        out = []
        for (method, window), vals in groups.items():
            if vals:
                q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
                out.append(BoxStats(method, window, len(vals), float(med), float(q1), float(q3),
                                    float(min(vals)), float(max(vals))))
            else:
                out.append(BoxStats(method, window, 0, math.nan, math.nan, math.nan, math.nan, math.nan))
        return out

    def write_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "method", "window", "r2", "n_obs", "error"])
            for r in self.rows:
                w.writerow([r.variable, r.method, r.window, "" if math.isnan(r.r2) else repr(r.r2), r.n_obs, r.error])

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "EvaluationReport":
        rows = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(ReportRow(rec["variable"], rec["method"], rec["window"],
                                      float(rec["r2"]) if rec["r2"] else math.nan, int(rec["n_obs"]),
                                      rec.get("error", "")))
        return cls(rows)

    def write_json(self, path: Union[str, Path]) -> None:
        def clean(d):
            return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
        payload = {"rows": [clean(asdict(r)) for r in self.rows],
                   "summary": [clean(asdict(s)) for s in self.summary()]}
        Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def full_report(series: Mapping[str, TimeSeries], methods: Sequence[str] = METHOD_PAIRS,
                windows: Sequence[Union[str, Window]] = ("full",),
                settings: EvalSettings = EvalSettings()) -> EvaluationReport:
    """Every (variable, method, window) combination, in input order."""
    if not series or not methods or not windows:
        raise DataError("full_report needs at least one series, method and window")
    rows: list[ReportRow] = []
    for name, y in series.items():
        for method in methods:
            logger.info("scoring %s / %s", name, method)
            rows.extend(paired_method_r2(y, method, windows, settings, variable=name))
    return EvaluationReport(rows)
