"""Dataset loading and the column-oriented training representation.

Features are stored densely as an ``(n_features, n_samples)`` float64 array so
that the split search can walk one column at a time, together with a stable
per-feature sort order.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MIN_CLASSES = 3


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable multi-class dataset.

    Attributes
    ----------
    labels : (n_samples,) int64 array
        Class ids in ``0..n_classes-1``.
    columns : (n_features, n_samples) float64 array
        Feature values, one row per feature.
    n_classes : int
        Number of classes K.
    sort_index : (n_features, n_samples) int64 array
        ``columns[f, sort_index[f]]`` is non-decreasing; ties keep sample order.
    class_labels : tuple
        Raw label value for each class id (``class_labels[k]`` was remapped to k).
    index_base : int or None
        0 or 1 for libsvm input, None otherwise.
    """

    labels: np.ndarray
    columns: np.ndarray
    n_classes: int
    sort_index: np.ndarray = field(default=None)
    class_labels: tuple = ()
    index_base: int | None = None

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        columns = np.ascontiguousarray(self.columns, dtype=np.float64)
        if columns.ndim != 2:
            raise DataError("columns must be a 2-d (n_features, n_samples) array")
        if labels.ndim != 1 or labels.shape[0] != columns.shape[1]:
            raise DataError(
                f"label count {labels.shape[0]} does not match column length {columns.shape[1]}"
            )
        if not np.isfinite(columns).all():
            raise DataError("feature values must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in 0..{self.n_classes - 1}")
        labels.setflags(write=False)
        columns.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "columns", columns)
        if self.sort_index is None:
            object.__setattr__(self, "sort_index", _stable_sort_index(columns))
        if not self.class_labels:
            object.__setattr__(self, "class_labels", tuple(range(self.n_classes)))

    @property
    def n_samples(self) -> int:
        return self.columns.shape[1]

    @property
    def n_features(self) -> int:
        return self.columns.shape[0]

    @property
    def rows(self) -> np.ndarray:
        """Row-major ``(n_samples, n_features)`` view of the features."""
        return self.columns.T

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, ids: Sequence[int]) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        return Dataset(
            labels=self.labels[ids],
            columns=self.columns[:, ids],
            n_classes=self.n_classes,
            class_labels=self.class_labels,
            index_base=self.index_base,
        )


def from_arrays(X, y, n_classes: int | None = None) -> Dataset:
    """Build a Dataset from a row-major feature matrix and integer labels.

    Labels are remapped order-preservingly to ``0..K-1``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("X must be 2-d")
    labels, classes = _remap_labels(list(np.asarray(y).tolist()), None)
    K = _resolve_n_classes(classes, n_classes)
    return Dataset(labels=labels, columns=X.T, n_classes=K, class_labels=tuple(classes))


def _stable_sort_index(columns: np.ndarray) -> np.ndarray:
    if columns.shape[1] == 0:
        return np.empty(columns.shape, dtype=np.int64)
    return np.argsort(columns, axis=1, kind="stable").astype(np.int64)


def build_sort_index(dataset: Dataset) -> Dataset:
    """Return a copy of ``dataset`` with a freshly computed stable sort order."""
    return Dataset(
        labels=dataset.labels,
        columns=dataset.columns,
        n_classes=dataset.n_classes,
        sort_index=_stable_sort_index(dataset.columns),
        class_labels=dataset.class_labels,
        index_base=dataset.index_base,
    )


def _parse_label(token: str, where: str):
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{where}: label {token!r} is not an integer") from None
    if not math.isfinite(value) or value != int(value):
        raise DataError(f"{where}: label {token!r} is not an integer")
    return int(value)


def _remap_labels(raw: list[int], classes: Sequence[int] | None):
    if classes is None:
        classes = sorted(set(raw))
    lookup = {c: k for k, c in enumerate(classes)}
    try:
        labels = np.fromiter((lookup[v] for v in raw), dtype=np.int64, count=len(raw))
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]} is not one of the known classes {list(classes)}") from None
    return labels, list(classes)


def _resolve_n_classes(classes: Sequence[int], n_classes: int | None) -> int:
    K = len(classes) if n_classes is None else int(n_classes)
    if K < len(classes):
        raise DataError(f"n_classes={K} but {len(classes)} distinct labels were found")
    if K < MIN_CLASSES:
        raise DataError(f"need at least {MIN_CLASSES} classes, got K={K} (multi-class only)")
    return K


def _open_text(path):
    if path == "-":
        return io.TextIOWrapper(sys.stdin.buffer, encoding="utf-8"), False
    return open(path, "r", encoding="utf-8"), True


def parse_libsvm(
    path,
    n_classes: int | None = None,
    *,
    classes: Sequence[int] | None = None,
    n_features: int | None = None,
    zero_based: bool | str = "auto",
) -> Dataset:
    """Read a libsvm / svmlight text file into a dense Dataset.

    Parameters
    ----------
    path : str or path-like
        File to read, or ``"-"`` for standard input.
    n_classes : int, optional
        Number of classes; defaults to the number of distinct labels.
    classes : sequence of int, optional
        Raw label values defining the class-id mapping (use the training
        set's ``class_labels`` when loading a test set).
    n_features : int, optional
        Pad (or check) the feature dimension.
    zero_based : bool or "auto"
        Index convention. ``"auto"`` picks 0-based when any index 0 appears.
    """
    fh, close = _open_text(path)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()

    raw_labels: list[int] = []
    entries: list[tuple[list[int], list[float]]] = []
    saw_zero = False
    max_index = -1
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        where = f"line {lineno}"
        raw_labels.append(_parse_label(tokens[0], where))
        idx: list[int] = []
        val: list[float] = []
        for tok in tokens[1:]:
            if tok.startswith("qid:"):
                continue
            name, sep, value = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                i = int(name)
                v = float(value)
            except ValueError:
                raise DataError(f"{where}: malformed feature {tok!r}") from None
            if i < 0:
                raise DataError(f"{where}: negative feature index {i}")
            saw_zero |= i == 0
            max_index = max(max_index, i)
            idx.append(i)
            val.append(v)
        entries.append((idx, val))

    if not raw_labels:
        raise DataError("no samples")

    if zero_based == "auto":
        base = 0 if saw_zero else 1
    else:
        base = 0 if zero_based else 1
        if base == 1 and saw_zero:
            raise DataError("feature index 0 found in a 1-based file")

    d = max_index + 1 - base if max_index >= 0 else 0
    if n_features is not None:
        if d > n_features:
            raise DataError(f"file has {d} features, expected at most {n_features}")
        d = n_features

    columns = np.zeros((d, len(entries)), dtype=np.float64)
    for i, (idx, val) in enumerate(entries):
        if idx:
            columns[np.asarray(idx) - base, i] = val

    labels, found = _remap_labels(raw_labels, classes)
    K = _resolve_n_classes(found, n_classes)
    return Dataset(
        labels=labels, columns=columns, n_classes=K, class_labels=tuple(found), index_base=base
    )


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_csv(
    path,
    label_column: int = 0,
    *,
    n_classes: int | None = None,
    classes: Sequence[int] | None = None,
    n_features: int | None = None,
) -> Dataset:
    """Read a rectangular numeric CSV; the first row is a header if any cell is non-numeric."""
    fh, close = _open_text(path)
    try:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    finally:
        if close:
            fh.close()

    start = 0
    if rows and not all(_is_number(c) for c in rows[0]):
        start = 1
    body = rows[start:]
    if not body:
        raise DataError("no samples")

    width = len(body[0])
    if not -width <= label_column < width:
        raise DataError(f"label column {label_column} out of range for {width} columns")
    label_column %= width

    raw_labels: list[int] = []
    feats = np.empty((len(body), width - 1), dtype=np.float64)
    for r, row in enumerate(body):
        rowno = r + start + 1
        if len(row) != width:
            raise DataError(f"row {rowno}: expected {width} cells, found {len(row)}")
        raw_labels.append(_parse_label(row[label_column].strip(), f"row {rowno}"))
        cells = row[:label_column] + row[label_column + 1:]
        for c, cell in enumerate(cells):
            try:
                feats[r, c] = float(cell)
            except ValueError:
                raise DataError(f"row {rowno}: non-numeric feature cell {cell!r}") from None

    if n_features is not None and feats.shape[1] != n_features:
        raise DataError(f"data has {feats.shape[1]} features, model expects {n_features}")

    labels, found = _remap_labels(raw_labels, classes)
    K = _resolve_n_classes(found, n_classes)
    return Dataset(labels=labels, columns=feats.T, n_classes=K, class_labels=tuple(found))


def load(path, fmt: str = "libsvm", **kwargs) -> Dataset:
    if fmt == "libsvm":
        return parse_libsvm(path, **kwargs)
    if fmt == "csv":
        return parse_csv(path, kwargs.pop("label_column", 0), **kwargs)
    raise DataError(f"unknown data format {fmt!r}")


def write_libsvm(dataset: Dataset, path) -> None:
    """Write ``dataset`` as 1-based libsvm text with lossless float formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(_libsvm_lines(dataset))


def _libsvm_lines(dataset: Dataset) -> Iterable[str]:
    X = dataset.rows
    for i in range(dataset.n_samples):
        parts = [str(dataset.class_labels[dataset.labels[i]])]
        for f, v in enumerate(X[i]):
            if v != 0.0 or math.copysign(1.0, v) < 0:
                parts.append(f"{f + 1}:{float(v)!r}")
        yield " ".join(parts) + "\n"


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified sample of ``n`` rows without replacement.

    Every class keeps at least one sample; the remaining ``n - K`` slots are
    shared out in proportion to class size (largest remainder, ties to the
    lower class id). Output rows keep their original relative order.
    """
    N, K = dataset.n_samples, dataset.n_classes
    if n > N:
        raise DataError(f"cannot draw {n} samples from {N}")
    if n < K:
        raise DataError(f"subsample size {n} is smaller than the number of classes {K}")
    counts = dataset.class_counts()
    if (counts == 0).any():
        raise DataError("every class must be present to stratify")

    spare = n - K
    pool = N - K
    quota = np.ones(K, dtype=np.int64)
    if pool > 0 and spare > 0:
        share = spare * (counts - 1)
        base, rem = np.divmod(share, pool)
        quota += base
        leftover = spare - int(base.sum())
        # stable sort on -remainder keeps lower class ids first on ties
        order = np.argsort(-rem, kind="stable")
        quota[order[:leftover]] += 1

    rng = np.random.default_rng(seed)
    picked = []
    for k in range(K):
        members = np.flatnonzero(dataset.labels == k)
        picked.append(rng.choice(members, size=int(quota[k]), replace=False))
    ids = np.sort(np.concatenate(picked))
    return dataset.take(ids)
