"""Lossless JSON model files and metrics CSV export.

Every float is written with ``float.hex`` so thresholds and leaf values
reload bit-exactly, and keys are sorted so that saving the same ensemble
twice produces identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from .boost import Algorithm, Ensemble, Stage, TrainConfig, TrainingMetrics
from .data import MIN_CLASSES
from .tree import RegressionTree

FORMAT_VERSION = 1
METRICS_HEADER = ("iteration", "train_loss", "test_error", "base_class", "trees_fit_cum")


class ModelFormatError(ValueError):
    """Corrupt, truncated or inconsistent model file."""


class ModelVersionError(ModelFormatError):
    pass


def _hex(x) -> str:
    return float(x).hex()


def _unhex(s, where: str) -> float:
    try:
        return float.fromhex(s)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{where}: expected a hex float, got {s!r}") from None


def _tree_doc(k: int, tree: RegressionTree) -> dict:
    return {
        "class": int(k),
        "n_leaves": tree.n_leaves,
        "feature": tree.feature.tolist(),
        "threshold": [_hex(t) for t in tree.threshold],
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": [_hex(v) for v in tree.value],
    }


def to_document(ensemble: Ensemble) -> dict:
    cfg = ensemble.config
    m = ensemble.metrics
    return {
        "format_version": FORMAT_VERSION,
        "config": {
            "algorithm": cfg.algorithm.value,
            "J": cfg.J,
            "nu": _hex(cfg.nu),
            "M": cfg.M,
            "G": cfg.G,
            "early_stop_loss": None if cfg.early_stop_loss is None else _hex(cfg.early_stop_loss),
            "threads": cfg.threads,
        },
        "n_classes": ensemble.n_classes,
        "n_features": ensemble.n_features,
        "class_labels": list(ensemble.class_labels),
        "base_history": ensemble.base_history,
        "tree_fit_count": ensemble.tree_fit_count,
        "stages": [
            {"base": s.base, "trees": [_tree_doc(k, t) for k, t in zip(s.classes, s.trees)]}
            for s in ensemble.stages
        ],
        "metrics": {
            "train_loss": [_hex(x) for x in m.train_loss],
            "test_error": list(m.test_error),
            "base_class": list(m.base_class),
            "trees_fit_cum": list(m.trees_fit_cum),
        },
    }


def dumps(ensemble: Ensemble) -> str:
    return json.dumps(to_document(ensemble), sort_keys=True, indent=1) + "\n"


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(ensemble: Ensemble, path) -> None:
    atomic_write_text(path, dumps(ensemble))


def _get(doc, key, where, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelFormatError(f"missing key {where}.{key}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise ModelFormatError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _int_array(values, where) -> np.ndarray:
    if not isinstance(values, list) or not all(isinstance(v, int) for v in values):
        raise ModelFormatError(f"{where}: expected a list of integers")
    return np.asarray(values, dtype=np.int64).reshape(-1)


def _tree_from_doc(doc, where, n_features) -> tuple[int, RegressionTree]:
    k = _get(doc, "class", where, int)
    feature = _int_array(_get(doc, "feature", where, list), f"{where}.feature")
    n = feature.shape[0]
    arrays = {"feature": feature}
    for key in ("left", "right"):
        arrays[key] = _int_array(_get(doc, key, where, list), f"{where}.{key}")
    for key in ("threshold", "value"):
        raw = _get(doc, key, where, list)
        arrays[key] = np.array([_unhex(s, f"{where}.{key}[{i}]") for i, s in enumerate(raw)],
                               dtype=np.float64).reshape(-1)
    for key, arr in arrays.items():
        if arr.shape[0] != n:
            raise ModelFormatError(f"{where}.{key}: length {arr.shape[0]} != {n} nodes")
    if n == 0:
        raise ModelFormatError(f"{where}: tree has no nodes")
    tree = RegressionTree(**arrays)
    declared = _get(doc, "n_leaves", where, int)
    internal = ~tree.is_leaf
    if tree.n_leaves != declared or n != 2 * declared - 1:
        raise ModelFormatError(
            f"{where}: declares {declared} leaves but encodes {tree.n_leaves} leaves in {n} nodes"
        )
    children = np.concatenate([tree.left[internal], tree.right[internal]])
    if ((children <= 0) | (children >= n)).any() or np.unique(children).size != children.size:
        raise ModelFormatError(f"{where}: invalid child links")
    if (tree.right[~internal] >= 0).any():
        raise ModelFormatError(f"{where}: leaf with a right child")
    if ((tree.feature[internal] < 0) | (tree.feature[internal] >= n_features)).any():
        raise ModelFormatError(f"{where}: split feature out of range")
    return k, tree


def from_document(doc) -> Ensemble:
    if not isinstance(doc, dict):
        raise ModelFormatError("model file root must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format_version {version!r} (this build reads {FORMAT_VERSION})"
        )
    cfg = _get(doc, "config", "$", dict)
    try:
        early = cfg.get("early_stop_loss")
        config = TrainConfig(
            algorithm=Algorithm.parse(_get(cfg, "algorithm", "$.config", str)),
            J=_get(cfg, "J", "$.config", int),
            nu=_unhex(_get(cfg, "nu", "$.config", str), "$.config.nu"),
            M=_get(cfg, "M", "$.config", int),
            G=_get(cfg, "G", "$.config", int),
            early_stop_loss=None if early is None else _unhex(early, "$.config.early_stop_loss"),
            threads=_get(cfg, "threads", "$.config", int),
        )
    except ValueError as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"$.config: {exc}") from None

    K = _get(doc, "n_classes", "$", int)
    if K < MIN_CLASSES:
        raise ModelFormatError(f"$.n_classes: K={K} < {MIN_CLASSES}")
    n_features = _get(doc, "n_features", "$", int)
    ensemble = Ensemble(config=config, n_classes=K, n_features=n_features,
                        class_labels=tuple(_get(doc, "class_labels", "$", list)),
                        tree_fit_count=_get(doc, "tree_fit_count", "$", int))
    expected_trees = K - 1 if config.algorithm.is_abc else K
    for i, sdoc in enumerate(_get(doc, "stages", "$", list)):
        where = f"$.stages[{i}]"
        base = _get(sdoc, "base", where, int)
        pairs = [_tree_from_doc(t, f"{where}.trees[{j}]", n_features)
                 for j, t in enumerate(_get(sdoc, "trees", where, list))]
        classes = tuple(k for k, _ in pairs)
        if config.algorithm.is_abc:
            want = tuple(k for k in range(K) if k != base)
        else:
            want = tuple(range(K))
            if base != -1:
                raise ModelFormatError(f"{where}.base: plain stages carry base -1")
        if len(pairs) != expected_trees or classes != want:
            raise ModelFormatError(f"{where}: expected trees for classes {list(want)}, got {list(classes)}")
        ensemble.stages.append(Stage(base, classes, tuple(t for _, t in pairs)))

    if _get(doc, "base_history", "$", list) != ensemble.base_history:
        raise ModelFormatError("$.base_history does not match the stage bases")
    mdoc = _get(doc, "metrics", "$", dict)
    ensemble.metrics = TrainingMetrics(
        train_loss=[_unhex(s, f"$.metrics.train_loss[{i}]")
                    for i, s in enumerate(_get(mdoc, "train_loss", "$.metrics", list))],
        test_error=list(_get(mdoc, "test_error", "$.metrics", list)),
        base_class=list(_get(mdoc, "base_class", "$.metrics", list)),
        trees_fit_cum=list(_get(mdoc, "trees_fit_cum", "$.metrics", list)),
    )
    lengths = {len(v) for v in vars(ensemble.metrics).values()}
    if lengths != {ensemble.n_iterations}:
        raise ModelFormatError("$.metrics: column lengths do not match the number of stages")
    return ensemble


def loads(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file at offset {exc.pos}: {exc.msg}") from None
    return from_document(doc)


def load_model(path) -> Ensemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"model file is not UTF-8 (byte offset {exc.start})") from None
    return loads(text)


def metrics_csv(ensemble: Ensemble) -> str:
    """Per-iteration metrics as CSV text with a fixed header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    m = ensemble.metrics
    for i in range(len(m)):
        err = m.test_error[i]
        writer.writerow([i + 1, repr(m.train_loss[i]), "" if err is None else err,
                         m.base_class[i], m.trees_fit_cum[i]])
    return buf.getvalue()


def save_metrics(ensemble: Ensemble, path) -> None:
    atomic_write_text(path, metrics_csv(ensemble))


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ModelFormatError(f"{path}: unexpected metrics header {reader.fieldnames}")
        return list(reader)
