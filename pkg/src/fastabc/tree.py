"""Weighted regression trees grown best-first to J terminal nodes.

The tree code only ever sees per-sample responses and weights. A split on a
node maximises

    [sum_L zw]^2 / sum_L w + [sum_R zw]^2 / sum_R w - [sum zw]^2 / sum w

which is the reduction in weighted squared error of the responses ``z``. Each
boosting algorithm picks its own ``(z, w)``; leaf values are set afterwards by
the caller through :func:`leaf_values`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .data import Dataset

W_FLOOR = 1e-12
MIN_GAIN = 1e-12
# gains this close (relative) count as tied, so rounding cannot break the
# lower-feature, lower-threshold convention
TIE_RTOL = 1e-12


class LeafMode(str, enum.Enum):
    PLAIN_LOGIT = "plain_logit"
    PLAIN_MART = "plain_mart_factor"
    ABC = "abc"


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float
    left_count: int


@dataclass(eq=False)
class RegressionTree:
    """Array-encoded binary tree; node 0 is the root.

    Internal nodes have ``left``/``right`` child ids and split on
    ``x[feature] <= threshold`` (true goes left). Leaves have
    ``left == right == feature == -1`` and carry ``value``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached by each row of ``X`` (n_samples, n_features)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def same_as(self, other: "RegressionTree") -> bool:
        """Bitwise equality of structure, thresholds and leaf values."""
        return all(
            np.array_equal(a.view(np.int64), b.view(np.int64))
            if a.dtype == np.float64 else np.array_equal(a, b)
            for a, b in zip(self._arrays(), other._arrays())
        ) and self.n_nodes == other.n_nodes

    def _arrays(self):
        return (self.feature, self.threshold, self.left, self.right, self.value)


def predict_tree(tree: RegressionTree, x) -> float:
    return float(tree.predict(np.asarray(x, dtype=np.float64)[None, :])[0])


# --- compiled kernels --------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True, nogil=True)
def _midpoint(a, b):
    t = 0.5 * a + 0.5 * b
    if t < a or t >= b:
        t = a
    return t


@numba.njit(cache=True, nogil=True)
def _scan_node(X, order, start, end, zw, w, w_floor):
    """Best (feature, left_count, gain) over the node ``order[:, start:end]``.

    Features are scanned in ascending order and positions in ascending
    threshold order. A candidate must beat the incumbent by more than
    ``TIE_RTOL`` relative, so ties go to the lower feature, then the lower
    threshold.
    """
    d = order.shape[0]
    tz = 0.0
    tw = 0.0
    for j in range(start, end):
        i = order[0, j]
        tz += zw[i]
        tw += w[i]
    best_f = -1
    best_pos = -1
    best_gain = -np.inf
    if end - start < 2 or tw < w_floor:
        return best_f, best_pos, best_gain
    parent = tz * tz / tw
    for f in range(d):
        sz = 0.0
        sw = 0.0
        x_here = X[f, order[f, start]]
        for j in range(start, end - 1):
            i = order[f, j]
            sz += zw[i]
            sw += w[i]
            x_next = X[f, order[f, j + 1]]
            if x_here == x_next:
                continue
            x_here = x_next
            rw = tw - sw
            if sw < w_floor or rw < w_floor:
                continue
            rz = tz - sz
            gain = sz * sz / sw + rz * rz / rw - parent
            if best_f < 0 or gain > best_gain + TIE_RTOL * abs(best_gain):
                best_gain = gain
                best_f = f
                best_pos = j - start + 1
    return best_f, best_pos, best_gain


@numba.njit(cache=True, nogil=True)
def _partition(order, start, end, f, pos, goes_left, buf):
    """Stable in-place split of every feature's segment into left | right."""
    d = order.shape[0]
    for j in range(start, start + pos):
        goes_left[order[f, j]] = True
    for j in range(start + pos, end):
        goes_left[order[f, j]] = False
    for g in range(d):
        if g == f:
            continue
        lo = start
        r = 0
        for j in range(start, end):
            i = order[g, j]
            if goes_left[i]:
                order[g, lo] = i
                lo += 1
            else:
                buf[r] = i
                r += 1
        for t in range(r):
            order[g, lo + t] = buf[t]


@numba.njit(cache=True, nogil=True)
def _grow(X, sort_index, zw, w, J, w_floor, min_gain):
    d, N = X.shape
    order = sort_index.copy()
    cap = 2 * J - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    seg_start = np.zeros(cap, dtype=np.int64)
    seg_end = np.zeros(cap, dtype=np.int64)
    split_f = np.full(cap, -1, dtype=np.int64)
    split_pos = np.zeros(cap, dtype=np.int64)
    split_gain = np.full(cap, -np.inf)
    goes_left = np.zeros(N, dtype=np.bool_)
    buf = np.empty(N, dtype=np.int64)

    seg_end[0] = N
    if d > 0:
        split_f[0], split_pos[0], split_gain[0] = _scan_node(X, order, 0, N, zw, w, w_floor)
    n_nodes = 1
    n_leaves = 1
    while n_leaves < J:
        # leaf with the highest cached gain; ties to the lower node id
        node = -1
        top = min_gain
        for c in range(n_nodes):
            if left[c] < 0 and split_f[c] >= 0 and split_gain[c] > top:
                top = split_gain[c]
                node = c
        if node < 0:
            break
        f = split_f[node]
        s = seg_start[node]
        e = seg_end[node]
        pos = split_pos[node]
        a = X[f, order[f, s + pos - 1]]
        b = X[f, order[f, s + pos]]
        _partition(order, s, e, f, pos, goes_left, buf)
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = _midpoint(a, b)
        left[node] = lc
        right[node] = rc
        seg_start[lc] = s
        seg_end[lc] = s + pos
        seg_start[rc] = s + pos
        seg_end[rc] = e
        split_f[lc], split_pos[lc], split_gain[lc] = _scan_node(X, order, s, s + pos, zw, w, w_floor)
        split_f[rc], split_pos[rc], split_gain[rc] = _scan_node(X, order, s + pos, e, zw, w, w_floor)
        n_leaves += 1

    leaf_of = np.empty(N, dtype=np.int64)
    if d == 0:
        leaf_of[:] = 0
    else:
        for c in range(n_nodes):
            if left[c] < 0:
                for j in range(seg_start[c], seg_end[c]):
                    leaf_of[order[0, j]] = c
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], leaf_of)


# --- public API --------------------------------------------------------------

def simplified_gain(z, w, s: int) -> float:
    """Gain of splitting already-sorted ``(z, w)`` after the first ``s`` entries."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    zw = z * w
    lz, lw = zw[:s].sum(), w[:s].sum()
    rz, rw = zw[s:].sum(), w[s:].sum()
    tz, tw = zw.sum(), w.sum()
    return float(lz * lz / lw + rz * rz / rw - tz * tz / tw)


def best_split(z, w, samples, dataset: Dataset) -> SplitCandidate | None:
    """Best split of the node holding ``samples``, or None when nothing has positive gain."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return _best_split_zw(z * w, w, samples, dataset)


def _best_split_zw(zw, w, samples, dataset: Dataset) -> SplitCandidate | None:
    member = np.zeros(dataset.n_samples, dtype=bool)
    member[np.asarray(samples, dtype=np.int64)] = True
    n = int(member.sum())
    if n < 2 or dataset.n_features == 0:
        return None
    order = dataset.sort_index[member[dataset.sort_index]].reshape(dataset.n_features, n)
    order = np.ascontiguousarray(order)
    f, pos, gain = _scan_node(dataset.columns, order, 0, n, zw, w, W_FLOOR)
    if f < 0 or not gain > MIN_GAIN:
        return None
    a = dataset.columns[f, order[f, pos - 1]]
    b = dataset.columns[f, order[f, pos]]
    return SplitCandidate(int(f), float(_midpoint(a, b)), float(gain), int(pos))


def grow_tree(zw, w, dataset: Dataset, J: int):
    """Grow a J-leaf tree on responses given as ``zw = z * w`` and weights ``w``.

    Returns ``(tree, leaf_of)`` where ``leaf_of[i]`` is the leaf node holding
    training sample ``i``. Leaf values are zero until set by the caller.
    """
    if J < 2:
        raise ValueError(f"J must be at least 2, got {J}")
    zw = np.ascontiguousarray(zw, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    feature, threshold, left, right, leaf_of = _grow(
        dataset.columns, dataset.sort_index, zw, w, int(J), W_FLOOR, MIN_GAIN
    )
    tree = RegressionTree(feature, threshold, left, right, np.zeros(feature.shape[0]))
    return tree, leaf_of


def fit_tree(z, w, dataset: Dataset, J: int) -> RegressionTree:
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return grow_tree(z * w, w, dataset, J)[0]


def _prefactor(mode: LeafMode | str, n_classes: int) -> float:
    mode = LeafMode(mode)
    if mode is LeafMode.ABC:
        return 1.0
    return (n_classes - 1) / n_classes


def leaf_value(num, den, samples, mode: LeafMode | str, n_classes: int) -> float:
    """Newton step for one terminal node: ``prefactor * sum(num) / max(sum(den), W_FLOOR)``.

    ``num`` is the negative first derivative and ``den`` the second
    derivative. Plain modes scale by ``(K-1)/K``; abc mode does not.
    """
    samples = np.asarray(samples, dtype=np.int64)
    s_num = float(np.asarray(num, dtype=np.float64)[samples].sum())
    s_den = float(np.asarray(den, dtype=np.float64)[samples].sum())
    if s_num == 0.0:
        return 0.0
    return _prefactor(mode, n_classes) * s_num / max(s_den, W_FLOOR)


def leaf_values(tree: RegressionTree, leaf_of, num, den, mode: LeafMode | str, n_classes: int):
    """Set every leaf value of ``tree`` in place from the training leaf assignment."""
    s_num = np.bincount(leaf_of, weights=num, minlength=tree.n_nodes)
    s_den = np.bincount(leaf_of, weights=den, minlength=tree.n_nodes)
    values = _prefactor(mode, n_classes) * s_num / np.maximum(s_den, W_FLOOR)
    values[~tree.is_leaf] = 0.0
    tree.value = values
    return tree
