"""Least-squares regression tree on a single regressor, the time index.

Because the only feature is the observation index ``t``, every node of the
tree covers a contiguous run of indices and a training sample is fully
described by how many times each index was drawn (its multiplicity). All
sums below are therefore weighted by multiplicity, which is what makes leaf
means, ``min_leaf`` and the implied moving-average weights agree exactly for
bootstrap samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DataError
from .series import TimeSeries, as_values


@dataclass(frozen=True)
class TreeParams:
    """Growth controls.

    Parameters
    ----------
    min_leaf : int
        Minimum number of draws (bootstrap multiplicity counted) in each child.
    max_depth : int or None
        Maximum depth; the root has depth 0. ``None`` means unlimited.
    gain_tolerance : float
        A split is accepted only if it lowers the node SSE by more than this.
    """

    min_leaf: int = 40
    max_depth: Optional[int] = None
    gain_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if int(self.min_leaf) < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and int(self.max_depth) < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if not self.gain_tolerance >= 0:
            raise ValueError(f"gain_tolerance must be >= 0, got {self.gain_tolerance}")


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """Multiset of observation indices, stored as a multiplicity per index.

    The regressor value of index ``i`` is ``i`` itself.
    """

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1).copy()
        if np.any(c < 0):
            raise ValueError("multiplicities must be nonnegative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_indices(cls, indices: Sequence[int], n_obs: int) -> "TrainingSample":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= n_obs):
            raise IndexError(f"sample indices must lie in [0, {n_obs})")
        return cls(np.bincount(idx, minlength=n_obs))

    @classmethod
    def full(cls, n_obs: int) -> "TrainingSample":
        return cls(np.ones(n_obs, dtype=np.int64))

    @property
    def n_obs(self) -> int:
        return self.counts.shape[0]

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def indices(self) -> np.ndarray:
        """Sorted indices, repeated by multiplicity."""
        return np.repeat(np.arange(self.n_obs), self.counts)


class Split(NamedTuple):
    threshold: float
    gain: float


def _scan(pos: np.ndarray, w: np.ndarray, v: np.ndarray, min_leaf: int, tol: float):
    """Best split among the distinct, sorted positions ``pos`` with weights ``w``.

    Returns ``(j, gain, mean)`` where the split falls between ``pos[j]`` and
    ``pos[j + 1]``; ``j`` is -1 when no admissible split improves the SSE by
    more than ``tol``.
    """
    n = w.sum()
    mean = (w @ v) / n
    if pos.shape[0] < 2 or n < 2 * min_leaf:
        return -1, 0.0, mean
    d = v - mean
    wd = w * d
    cw = np.cumsum(w)[:-1]
    s = np.cumsum(wd)
    q = np.cumsum(wd * d)
    total_q, total_s = q[-1], s[-1]
    sl, ql = s[:-1], q[:-1]
    nr = n - cw
    # within-child SSE from running sums on node-centred values
    sse = (ql - sl * sl / cw) + ((total_q - ql) - (total_s - sl) ** 2 / nr)
    feasible = (cw >= min_leaf) & (nr >= min_leaf)
    if not feasible.any():
        return -1, 0.0, mean
    sse = np.where(feasible, sse, np.inf)
    best = sse.min()
    # first index within rounding of the minimum -> smallest threshold on ties
    j = int(np.flatnonzero(sse <= best + 1e-13 * max(total_q, 1e-300))[0])
    parent = total_q - total_s * total_s / n
    gain = float(parent - sse[j])
    if not gain > tol:
        return -1, max(gain, 0.0), mean
    return j, gain, mean


def best_split(sample: TrainingSample, y: Union[TimeSeries, np.ndarray],
               node_members: Optional[Sequence[int]] = None,
               params: TreeParams = TreeParams()) -> Optional[Split]:
    """Exhaustive least-squares split search over midpoints of the node's distinct indices.

    Parameters
    ----------
    sample : TrainingSample
        Supplies the multiplicities when ``node_members`` is omitted.
    y : TimeSeries or array_like
        Response values indexed by observation.
    node_members : sequence of int, optional
        Multiset of indices in the node (repeats count). Defaults to the
        whole sample.

    Returns
    -------
    Split or None
        Threshold ``c`` (left child takes indices ``<= c``) and the SSE
        reduction, or ``None`` when no admissible split clears
        ``params.gain_tolerance``.
    """
    yv = as_values(y)
    if node_members is None:
        counts = sample.counts
    else:
        counts = np.bincount(np.asarray(node_members, dtype=np.int64), minlength=yv.shape[0])
    if counts.sum() == 0:
        raise DataError("node_members must be nonempty")
    pos = np.flatnonzero(counts)
    j, gain, _ = _scan(pos, counts[pos].astype(float), yv[pos], params.min_leaf, params.gain_tolerance)
    if j < 0:
        return None
    return Split(0.5 * (pos[j] + pos[j + 1]), gain)


@dataclass(frozen=True, eq=False)
class Tree:
    """Fitted tree in flat array form (node 0 is the root).

    ``left``/``right`` are -1 at leaves. Every node ``k`` covers the integer
    indices ``lo[k] <= t < hi[k]`` of the training axis; its members are the
    sample draws in that range, ``n_members[k]`` of them counted with
    multiplicity, and ``value[k]`` is their mean.
    """

    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_members: np.ndarray
    depth: np.ndarray
    sample: TrainingSample

    @property
    def n_obs(self) -> int:
        return self.sample.n_obs

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def leaves(self) -> np.ndarray:
        """Leaf node ids ordered along the time axis."""
        ids = np.flatnonzero(self.is_leaf)
        return ids[np.argsort(self.lo[ids], kind="stable")]

    def apply(self, t: Union[float, np.ndarray]) -> Union[int, np.ndarray]:
        """Leaf id reached by each query point ``t`` (any real value)."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        leaves = self.leaves()
        # leaves tile the real line in time order; cut points are the thresholds between them
        cuts = self.threshold[self._parents_of_boundaries(leaves)] if leaves.size > 1 else np.empty(0)
        out = leaves[np.searchsorted(cuts, tt, side="left")]
        return int(out[0]) if scalar else out

    def _parents_of_boundaries(self, leaves: np.ndarray) -> np.ndarray:
        # internal node whose split separates consecutive leaves = the one whose left child ends at hi
        internal = np.flatnonzero(~self.is_leaf)
        left_hi = self.hi[self.left[internal]]
        order = np.argsort(left_hi, kind="stable")
        by_hi = dict(zip(left_hi[order].tolist(), internal[order].tolist()))
        return np.array([by_hi[int(self.hi[k])] for k in leaves[:-1]], dtype=np.int64)

    def predict(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        leaf = self.apply(t)
        return float(self.value[leaf]) if np.ndim(leaf) == 0 else self.value[leaf]

    def predict_all(self) -> np.ndarray:
        """Predictions at the training indices ``0 .. n_obs-1``."""
        out = np.empty(self.n_obs)
        for k in np.flatnonzero(self.is_leaf):
            out[self.lo[k]:self.hi[k]] = self.value[k]
        return out

    def members(self, node: int) -> np.ndarray:
        lo, hi = int(self.lo[node]), int(self.hi[node])
        return np.repeat(np.arange(lo, hi), self.sample.counts[lo:hi])


def fit_tree(sample: TrainingSample, y: Union[TimeSeries, np.ndarray],
             params: TreeParams = TreeParams()) -> Tree:
    """Grow a tree depth-first by repeated ``best_split`` until no node can split."""
    yv = as_values(y)
    counts = sample.counts
    n_obs = counts.shape[0]
    if yv.shape[0] != n_obs:
        raise DataError(f"sample covers {n_obs} observations but y has {yv.shape[0]}")
    if counts.sum() == 0:
        raise DataError("cannot fit a tree on an empty sample")
    min_leaf, tol = int(params.min_leaf), float(params.gain_tolerance)
    max_depth = np.inf if params.max_depth is None else params.max_depth

    threshold, left, right, value, lo_, hi_, size, depth = [], [], [], [], [], [], [], []

    def new_node(lo: int, hi: int, d: int) -> int:
        for col, v in ((threshold, np.nan), (left, -1), (right, -1), (value, np.nan),
                       (lo_, lo), (hi_, hi), (size, 0), (depth, d)):
            col.append(v)
        return len(left) - 1

    stack = [new_node(0, n_obs, 0)]
    while stack:
        k = stack.pop()
        lo, hi, d = lo_[k], hi_[k], depth[k]
        pos = lo + np.flatnonzero(counts[lo:hi])
        w = counts[pos].astype(float)
        size[k] = int(counts[lo:hi].sum())
        if d >= max_depth:
            value[k] = (w @ yv[pos]) / w.sum()
            continue
        j, _, value[k] = _scan(pos, w, yv[pos], min_leaf, tol)
        if j < 0:
            continue
        c = 0.5 * (pos[j] + pos[j + 1])
        cut = int(np.floor(c)) + 1
        threshold[k] = c
        left[k] = new_node(lo, cut, d + 1)
        right[k] = new_node(cut, hi, d + 1)
        stack.append(right[k])
        stack.append(left[k])

    return Tree(np.array(threshold), np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value), np.array(lo_, dtype=np.int64), np.array(hi_, dtype=np.int64),
                np.array(size, dtype=np.int64), np.array(depth, dtype=np.int64), sample)


def tree_predict(tree: Tree, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Leaf mean for trend value(s) ``t``; defined on the whole real line."""
    return tree.predict(t)


def tree_leaf_members(tree: Tree, t: float) -> np.ndarray:
    """Training draws (multiplicity kept) sharing the leaf that contains ``t``."""
    return tree.members(tree.apply(t))
