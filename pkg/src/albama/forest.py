"""Bagged trees over the time index (AlbaMA) and their moving-average weights.

Two estimation modes:

* two-sided: one forest on the whole sample; row ``t`` of the weight matrix
  mixes past and future observations.
* one-sided: an expanding-window refit at every period ``t`` using only
  ``y[0..t]``; row ``t`` is causal by construction.

Randomness is keyed, not sequential: the bootstrap draw of tree ``b`` comes
from ``SeedSequence(seed, spawn_key=(b,))`` in two-sided mode and from
``SeedSequence(seed, spawn_key=(t, b))`` for period ``t`` in one-sided mode,
fed to a Philox generator. Results therefore do not depend on the order in
which trees or periods are computed, or on the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError, SeriesTooShortError
from .series import TimeSeries, as_values
from .tree import Tree, TrainingSample, TreeParams, _scan, fit_tree

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestParams:
    """Ensemble settings; defaults follow the simulation study (500 trees, min leaf 40)."""

    n_trees: int = 500
    tree: TreeParams = field(default_factory=TreeParams)
    bootstrap: bool = True
    seed: int = 42

    def __post_init__(self) -> None:
        if int(self.n_trees) < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def draw_sample(n_obs: int, params: ForestParams, *key: int) -> TrainingSample:
    if not params.bootstrap:
        return TrainingSample.full(n_obs)
    idx = keyed_rng(params.seed, *key).integers(0, n_obs, size=n_obs)
    return TrainingSample(np.bincount(idx, minlength=n_obs))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    y: TimeSeries
    params: ForestParams

    @property
    def n_obs(self) -> int:
        return len(self.y)

    @property
    def samples(self) -> tuple[TrainingSample, ...]:
        return tuple(t.sample for t in self.trees)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Moving-average weights: ``values[i, tau]`` is the weight of ``y[tau]`` in the estimate at ``rows[i]``.

    Two-sided matrices have one row per observation. One-sided matrices only
    have rows from the first emitted period on; each row is zero beyond its
    own period.
    """

    values: np.ndarray
    rows: np.ndarray
    causal: bool = False
    timestamps: Optional[np.ndarray] = None

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]

    def row(self, t: int) -> np.ndarray:
        i = np.searchsorted(self.rows, t)
        if i >= self.rows.size or self.rows[i] != t:
            raise KeyError(f"no weight row for period {t}")
        return self.values[i]

    def dense(self) -> np.ndarray:
        """Full ``n_obs x n_obs`` matrix, zero rows where no estimate was emitted."""
        out = np.zeros((self.n_obs, self.n_obs))
        out[self.rows] = self.values
        return out

    def apply(self, y: Union[TimeSeries, np.ndarray]) -> np.ndarray:
        """Weighted averages ``W y`` for the emitted rows."""
        return self.values @ as_values(y)


# ------------------------------------------------------------------- two-sided


def _fit_forest(yv: np.ndarray, params: ForestParams, key: tuple[int, ...]) -> list[Tree]:
    n = yv.shape[0]
    return [fit_tree(draw_sample(n, params, *key, b), yv, params.tree) for b in range(params.n_trees)]


def fit_two_sided(y: Union[TimeSeries, Sequence[float]], params: ForestParams = ForestParams()) -> ForestModel:
    """Fit ``params.n_trees`` trees, each on its own bootstrap draw of the full sample."""
    ts = y if isinstance(y, TimeSeries) else TimeSeries.from_values(as_values(y))
    if len(ts) < 2 * params.tree.min_leaf:
        logger.info("series of length %d is shorter than 2*min_leaf; trees will not split", len(ts))
    trees = _fit_forest(ts.values, params, ())
    return ForestModel(tuple(trees), ts, params)


def forest_fitted(model: ForestModel) -> TimeSeries:
    """Average of the tree predictions at every observation."""
    acc = np.zeros(model.n_obs)
    for tree in model.trees:
        acc += tree.predict_all()
    return model.y.with_values(acc / len(model.trees))


def extract_weights(model: ForestModel) -> WeightMatrix:
    """Implied weights: each tree gives ``multiplicity / leaf size`` to the draws in the leaf of ``t``."""
    n = model.n_obs
    W = np.zeros((n, n))
    for tree in model.trees:
        counts = tree.sample.counts
        for k in np.flatnonzero(tree.is_leaf):
            lo, hi = tree.lo[k], tree.hi[k]
            W[lo:hi, lo:hi] += counts[lo:hi] / tree.n_members[k]
    W /= len(model.trees)
    return WeightMatrix(W, np.arange(n), causal=False, timestamps=model.y.timestamps)


# ------------------------------------------------------------------- one-sided


def _last_leaf(counts: np.ndarray, yv: np.ndarray, params: TreeParams) -> int:
    """First index of the leaf holding the last observation (the leaf spans ``[lo, n)``).

    Only the rightmost path of the tree is grown; every split decision uses
    the node's own data, so the leaf is the same one ``fit_tree`` produces.
    """
    lo, depth = 0, 0
    max_depth = np.inf if params.max_depth is None else params.max_depth
    while depth < max_depth:
        pos = lo + np.flatnonzero(counts[lo:])
        j, _, _ = _scan(pos, counts[pos].astype(float), yv[pos], params.min_leaf, params.gain_tolerance)
        if j < 0:
            break
        lo = int(np.floor(0.5 * (pos[j] + pos[j + 1]))) + 1
        depth += 1
    return lo


def _one_sided_period(yv: np.ndarray, t: int, params: ForestParams) -> tuple[float, np.ndarray]:
    prefix = yv[: t + 1]
    n = t + 1
    row = np.zeros(n)
    fitted = 0.0
    for b in range(params.n_trees):
        counts = draw_sample(n, params, t, b).counts
        lo = _last_leaf(counts, prefix, params.tree)
        c = counts[lo:]
        size = c.sum()
        row[lo:] += c / size
        fitted += (c @ prefix[lo:]) / size
    return fitted / params.n_trees, row / params.n_trees


def _one_sided_chunk(args):
    yv, periods, params = args
    return [_one_sided_period(yv, t, params) for t in periods]


def fit_one_sided(y: Union[TimeSeries, Sequence[float]], params: ForestParams = ForestParams(),
                  warmup: int = 24, n_jobs: Optional[int] = 1) -> tuple[TimeSeries, WeightMatrix]:
    """Real-time estimates: refit on ``y[0..t]`` for every ``t >= warmup - 1``.

    Parameters
    ----------
    warmup : int
        Length of the first expanding window. Values below ``2 * min_leaf``
        are accepted but the early forests cannot split and return the
        window mean.
    n_jobs : int or None
        Worker processes for the period fits; ``None`` or ``-1`` uses every
        CPU. Output does not depend on this setting.

    Returns
    -------
    estimates : TimeSeries
        Starts at the timestamp of index ``warmup - 1``.
    weights : WeightMatrix
        Causal rows for the emitted periods, zero-padded to ``len(y)``.
    """
    ts = y if isinstance(y, TimeSeries) else TimeSeries.from_values(as_values(y))
    warmup = int(warmup)
    if warmup < 1:
        raise DataError(f"warmup must be a positive integer, got {warmup}")
    if len(ts) < warmup:
        raise SeriesTooShortError(f"series has {len(ts)} observations, fewer than warmup={warmup}")
    if warmup < max(2 * params.tree.min_leaf, 8):
        warnings.warn(f"warmup={warmup} is below max(2*min_leaf, 8)={max(2 * params.tree.min_leaf, 8)}; "
                      "early estimates reduce to window means", stacklevel=2)
    yv = ts.values
    n = yv.shape[0]
    periods = list(range(warmup - 1, n))

    workers = (os.cpu_count() or 1) if n_jobs in (None, -1) else max(1, int(n_jobs))
    if workers > 1 and len(periods) > 1:
        # interleaved chunks balance the growing cost of later periods
        chunks = [periods[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_one_sided_chunk, [(yv, c, params) for c in chunks]))
        by_t = {t: r for c, part in zip(chunks, parts) for t, r in zip(c, part)}
        results = [by_t[t] for t in periods]
    else:
        results = _one_sided_chunk((yv, periods, params))

    W = np.zeros((len(periods), n))
    est = np.empty(len(periods))
    for i, (t, (value, row)) in enumerate(zip(periods, results)):
        W[i, : t + 1] = row
        est[i] = value
    out = TimeSeries(ts.timestamps[warmup - 1:], est, ts.name)
    return out, WeightMatrix(W, np.asarray(periods), causal=True, timestamps=ts.timestamps)


# --------------------------------------------------------------------- buckets


@dataclass(frozen=True)
class LagBucket:
    """Named set of signed lags ``t - tau``; each range is inclusive and may be unbounded."""

    name: str
    ranges: tuple[tuple[float, float], ...]

    def contains(self, lags: np.ndarray) -> np.ndarray:
        hit = np.zeros(lags.shape, dtype=bool)
        for lo, hi in self.ranges:
            hit |= (lags >= lo) & (lags <= hi)
        return hit


ONE_SIDED_BUCKETS: tuple[LagBucket, ...] = (
    LagBucket("y_t", ((0, 0),)),
    LagBucket("y_t-1:t-2", ((1, 2),)),
    LagBucket("y_t-3:t-5", ((3, 5),)),
    LagBucket("y_t-6:end", ((6, math.inf),)),
)

TWO_SIDED_BUCKETS: tuple[LagBucket, ...] = (
    LagBucket("y_t", ((0, 0),)),
    LagBucket("y_t+-1:2", ((1, 2), (-2, -1))),
    LagBucket("y_t+-3:5", ((3, 5), (-5, -3))),
    LagBucket("y_t+-6:end", ((6, math.inf), (-math.inf, -6))),
)


@dataclass(frozen=True, eq=False)
class BucketShares:
    names: tuple[str, ...]
    shares: np.ndarray
    rows: np.ndarray
    timestamps: Optional[np.ndarray] = None


def bucket_shares(weights: WeightMatrix, buckets: Optional[Sequence[LagBucket]] = None) -> BucketShares:
    """Sum each weight row within lag buckets.

    The buckets must partition every lag the matrix can carry: lags
    ``0..n-1`` for causal matrices, ``-(n-1)..n-1`` otherwise.
    """
    if buckets is None:
        buckets = ONE_SIDED_BUCKETS if weights.causal else TWO_SIDED_BUCKETS
    n = weights.n_obs
    domain = np.arange(0 if weights.causal else -(n - 1), n)
    hits = np.array([b.contains(domain) for b in buckets])
    cover = hits.sum(axis=0)
    if np.any(cover > 1):
        raise DataError(f"lag buckets overlap at lag {int(domain[np.argmax(cover > 1)])}")
    if np.any(cover == 0):
        raise DataError(f"lag buckets do not cover lag {int(domain[np.argmax(cover == 0)])}")
    shares = np.zeros((weights.rows.size, len(buckets)))
    tau = np.arange(n)
    for i, t in enumerate(weights.rows):
        lag = t - tau
        for g, b in enumerate(buckets):
            shares[i, g] = weights.values[i, b.contains(lag)].sum()
    ts = None if weights.timestamps is None else weights.timestamps[weights.rows]
    return BucketShares(tuple(b.name for b in buckets), shares, weights.rows.copy(), ts)
