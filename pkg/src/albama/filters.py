"""Closed-form benchmark smoothers: equal-weight moving averages, EMA, Savitzky-Golay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import lfilter

from .errors import DataError, SeriesTooShortError
from .series import TimeSeries, as_values

ArrayOrSeries = Union[TimeSeries, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class FilterOutput:
    """Filtered values aligned with the input; ``defined`` is false where the window does not fit.

    Undefined entries hold NaN, but ``defined`` is the authoritative mask.
    """

    values: np.ndarray
    defined: np.ndarray
    timestamps: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.defined, dtype=bool)
        if vals.shape != mask.shape:
            raise ValueError("values and defined mask differ in shape")
        if not np.all(np.isfinite(vals[mask])):
            raise ValueError("non-finite value at a defined position")
        vals = np.where(mask, vals, np.nan)
        vals.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "defined", mask)

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_series(cls, series: TimeSeries, like: TimeSeries, name: str = "") -> "FilterOutput":
        """Place ``series`` on the time axis of ``like`` (which must contain it)."""
        start = int((series.timestamps[0] - like.timestamps[0]).astype(int))
        if start < 0 or start + len(series) > len(like):
            raise DataError("series does not lie inside the reference time axis")
        vals = np.full(len(like), np.nan)
        vals[start:start + len(series)] = series.values
        mask = np.zeros(len(like), dtype=bool)
        mask[start:start + len(series)] = True
        return cls(vals, mask, like.timestamps, name or series.name)


def _timestamps(y: ArrayOrSeries) -> Optional[np.ndarray]:
    return y.timestamps if isinstance(y, TimeSeries) else None


def _wrap(y: ArrayOrSeries, vals: np.ndarray, mask: np.ndarray, name: str) -> FilterOutput:
    return FilterOutput(vals, mask, _timestamps(y), name)


def _correlate_valid(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # out[j] = sum_i weights[i] * x[j + i]
    return np.convolve(x, weights[::-1], mode="valid")


def ma_one_sided(y: ArrayOrSeries, k: int) -> FilterOutput:
    """Trailing mean of the last ``k`` observations; defined from index ``k-1``."""
    x = as_values(y)
    k = int(k)
    if k < 1:
        raise DataError(f"window length must be >= 1, got {k}")
    if k > x.size:
        raise SeriesTooShortError(f"window {k} longer than series ({x.size})")
    out = np.full(x.size, np.nan)
    out[k - 1:] = _correlate_valid(x, np.full(k, 1.0 / k))
    mask = np.arange(x.size) >= k - 1
    return _wrap(y, out, mask, f"MA({k}) 1s")


def ma_two_sided(y: ArrayOrSeries, k: int) -> FilterOutput:
    """Centred mean over ``2k+1`` points; defined for ``k <= t <= T-1-k``."""
    x = as_values(y)
    k = int(k)
    if k < 0:
        raise DataError(f"half-width must be >= 0, got {k}")
    width = 2 * k + 1
    if width > x.size:
        raise SeriesTooShortError(f"window {width} longer than series ({x.size})")
    out = np.full(x.size, np.nan)
    out[k:x.size - k] = _correlate_valid(x, np.full(width, 1.0 / width))
    idx = np.arange(x.size)
    return _wrap(y, out, (idx >= k) & (idx <= x.size - 1 - k), f"MA({k}) 2s")


def ema(y: ArrayOrSeries, k: int) -> FilterOutput:
    """Exponential moving average with ``alpha = 2 / (k + 1)``, started at ``y[0]``."""
    x = as_values(y)
    k = int(k)
    if k < 1:
        raise DataError(f"span must be >= 1, got {k}")
    alpha = 2.0 / (k + 1)
    out, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
    return _wrap(y, out, np.ones(x.size, dtype=bool), f"EMA({k})")


# ------------------------------------------------------------------ Savitzky-Golay


def _lsq_eval_weights(offsets: np.ndarray, order: int, at: float = 0.0) -> np.ndarray:
    """Weights ``c`` with ``c @ v`` equal to the degree-``order`` LS fit of ``v`` on ``offsets``, evaluated at ``at``."""
    # centre on the evaluation point and scale to [-1, 1]: same polynomial space, far better conditioned
    u = offsets.astype(float) - at
    u /= max(1.0, float(np.abs(u).max()))
    A = np.vander(u, order + 1, increasing=True)
    a0 = np.zeros(order + 1)
    a0[0] = 1.0
    return A @ np.linalg.solve(A.T @ A, a0)


def _check_sg(window: int, order: int, odd: bool) -> None:
    if odd and window % 2 == 0:
        raise DataError(f"Savitzky-Golay window must be odd, got {window}")
    if window < 1:
        raise DataError(f"window must be positive, got {window}")
    if order < 0 or order >= window:
        raise DataError(f"polynomial order must satisfy 0 <= order < window, got order={order}, window={window}")


def sg_coefficients(window: int, order: int) -> np.ndarray:
    """Centred smoothing coefficients for offsets ``-(window-1)/2 .. (window-1)/2``."""
    window, order = int(window), int(order)
    _check_sg(window, order, odd=True)
    h = (window - 1) // 2
    return _lsq_eval_weights(np.arange(-h, h + 1), order)


def sg_two_sided(y: ArrayOrSeries, window: int = 11, order: int = 3) -> FilterOutput:
    """Savitzky-Golay smoother, defined everywhere.

    Interior points use the centred coefficients. Within ``(window-1)/2`` of
    either end the polynomial is refit on the truncated window that is
    available and evaluated at ``t``; the degree drops if that window has
    too few points.
    """
    x = as_values(y)
    window, order = int(window), int(order)
    coef = sg_coefficients(window, order)
    n = x.size
    if window > n:
        raise SeriesTooShortError(f"window {window} longer than series ({n})")
    h = (window - 1) // 2
    out = np.empty(n)
    out[h:n - h] = _correlate_valid(x, coef)
    for t in [*range(h), *range(n - h, n)]:
        lo, hi = max(0, t - h), min(n - 1, t + h)
        offsets = np.arange(lo, hi + 1) - t
        out[t] = _lsq_eval_weights(offsets, min(order, offsets.size - 1)) @ x[lo:hi + 1]
    return _wrap(y, out, np.ones(n, dtype=bool), f"SG({window},{order}) 2s")


def sg_endpoint_weights(window: int, order: int) -> np.ndarray:
    """Weights on ``y[t-window+1 .. t]`` of the trailing polynomial fit evaluated at ``t``."""
    window, order = int(window), int(order)
    _check_sg(window, order, odd=False)
    return _lsq_eval_weights(np.arange(-(window - 1), 1), order)


def sg_one_sided(y: ArrayOrSeries, window: int = 11, order: int = 3) -> FilterOutput:
    """Real-time Savitzky-Golay: trailing-window polynomial fit evaluated at its right end."""
    x = as_values(y)
    w = sg_endpoint_weights(window, order)
    window = int(window)
    if window > x.size:
        raise SeriesTooShortError(f"window {window} longer than series ({x.size})")
    out = np.full(x.size, np.nan)
    out[window - 1:] = _correlate_valid(x, w)
    return _wrap(y, out, np.arange(x.size) >= window - 1, f"SG({window},{order}) 1s")
