"""Seeded synthetic multi-class problems for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .data import Dataset, from_arrays


def make_slabs(n_samples: int, n_classes: int = 3, n_features: int = 4,
               margin: float = 0.1, seed: int = 0, direction=None) -> Dataset:
    """Linearly separable classes: parallel slabs along a fixed direction.

    Points are uniform on ``[-1, 1]^d``; the class is the slab that
    ``x @ v`` falls into (``v`` is ``direction`` padded with zeros, by
    default the diagonal of the first two features). Points closer than
    ``margin`` to a slab boundary are rejected.
    """
    rng = np.random.default_rng(seed)
    v = np.zeros(n_features)
    if direction is None:
        v[: min(2, n_features)] = 1.0
    else:
        direction = np.asarray(direction, dtype=np.float64)
        v[: direction.size] = direction
    v /= np.linalg.norm(v)
    lim = np.abs(v).sum()
    edges = np.linspace(-lim, lim, n_classes + 1)[1:-1]
    # rejection sampling; rows kept in draw order so the result is seed-stable
    xs, ys = [], []
    have = 0
    while have < n_samples:
        x = rng.uniform(-1.0, 1.0, size=(4 * n_samples, n_features))
        s = x @ v
        keep = np.min(np.abs(s[:, None] - edges[None, :]), axis=1) >= margin
        x, s = x[keep], s[keep]
        y = np.searchsorted(edges, s)
        xs.append(x)
        ys.append(y)
        have += len(y)
    X = np.concatenate(xs)[:n_samples]
    y = np.concatenate(ys)[:n_samples]
    return from_arrays(X, y, n_classes)


def make_clusters(n_samples: int, n_classes: int = 10, n_features: int = 10,
                  clusters_per_class: int = 2, spread: float = 1.0,
                  seed: int = 0, centers_seed: int | None = None) -> Dataset:
    """Overlapping Gaussian clusters, several per class, with a mild nonlinear warp.

    ``centers_seed`` fixes the class geometry independently of ``seed`` so
    that train and test sets can be drawn from the same distribution.
    """
    geo = np.random.default_rng(seed if centers_seed is None else centers_seed)
    centers = geo.normal(scale=2.0, size=(n_classes, clusters_per_class, n_features))
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, size=n_samples)
    c = rng.integers(0, clusters_per_class, size=n_samples)
    X = centers[y, c] + rng.normal(scale=spread, size=(n_samples, n_features))
    X[:, 1::2] += 0.3 * X[:, 0::2][:, : X[:, 1::2].shape[1]] ** 2
    return from_arrays(X, y, n_classes)
