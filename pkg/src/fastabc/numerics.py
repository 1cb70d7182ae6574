"""Softmax model, multinomial log-loss and its derivatives.

Two derivative sets are provided: the per-class ("plain") first and second
derivatives used by mart and logitboost, and the sum-to-zero ("abc") set in
which one base class is eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# p is kept inside [P_CLAMP, 1 - P_CLAMP] so log(p) and p(1-p) never hit 0.
P_CLAMP = 1e-15


@dataclass
class ScoreState:
    """Scores ``F`` and probabilities ``p``, both of shape (n_samples, n_classes)."""

    F: np.ndarray
    p: np.ndarray

    @classmethod
    def initial(cls, n_samples: int, n_classes: int) -> "ScoreState":
        F = np.zeros((n_samples, n_classes))
        p = np.full((n_samples, n_classes), 1.0 / n_classes)
        return cls(F, p)

    @classmethod
    def from_scores(cls, F) -> "ScoreState":
        F = np.array(F, dtype=np.float64)
        return cls(F, softmax(F))

    @property
    def n_classes(self) -> int:
        return self.F.shape[1]

    def copy(self) -> "ScoreState":
        return ScoreState(self.F.copy(), self.p.copy())


def softmax(F: np.ndarray) -> np.ndarray:
    """Row-wise guarded softmax of a score matrix."""
    F = np.asarray(F, dtype=np.float64)
    if not np.isfinite(F).all():
        raise FloatingPointError("non-finite score in F")
    e = np.exp(F - F.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    np.clip(p, P_CLAMP, 1.0 - P_CLAMP, out=p)
    p /= p.sum(axis=1, keepdims=True)
    return p


def softmax_update(state: ScoreState) -> ScoreState:
    """Refresh ``state.p`` in place from ``state.F``."""
    state.p = softmax(state.F)
    return state


def neg_log_likelihood(state: ScoreState | np.ndarray, labels) -> float:
    """Training loss ``sum_i -log p[i, y_i]``."""
    p = state.p if isinstance(state, ScoreState) else np.asarray(state)
    labels = np.asarray(labels)
    picked = p[np.arange(p.shape[0]), labels]
    return float(-np.log(picked).sum())


def indicator(labels, k: int) -> np.ndarray:
    return (np.asarray(labels) == k).astype(np.float64)


def plain_derivatives(state: ScoreState, labels, k: int):
    """First and second derivative of the loss w.r.t. ``F[:, k]``, one class at a time.

    Returns ``g = -(r_k - p_k)`` and ``h = p_k (1 - p_k)``.
    """
    pk = state.p[:, k]
    g = -(indicator(labels, k) - pk)
    h = pk * (1.0 - pk)
    return g, h


def abc_derivatives(state: ScoreState, labels, k: int, b: int):
    """Derivatives w.r.t. ``F[:, k]`` with ``F[:, b] = -sum_{s != b} F[:, s]`` substituted.

    Returns ``g = (r_b - p_b) - (r_k - p_k)`` and
    ``h = p_b (1 - p_b) + p_k (1 - p_k) + 2 p_b p_k``.
    """
    if k == b:
        raise ValueError(f"class {k} is the base class; abc derivatives need k != b")
    pk = state.p[:, k]
    pb = state.p[:, b]
    g = (indicator(labels, b) - pb) - (indicator(labels, k) - pk)
    h = pb * (1.0 - pb) + pk * (1.0 - pk) + 2.0 * pb * pk
    return g, h


def _check_simplex(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError("hessian_det_k3 takes a probability 3-vector")
    if (p < -1e-9).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{p} is not on the probability simplex")
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return p / p.sum()


def constrained_hessian_k3(p, b: int) -> np.ndarray:
    """2x2 Hessian of ``L_i`` w.r.t. the two non-base scores, K=3, base ``b``."""
    p = _check_simplex(p)
    pb = p[b]
    free = [k for k in range(3) if k != b]
    H = np.empty((2, 2))
    for a, k in enumerate(free):
        for c, l in enumerate(free):
            H[a, c] = (
                p[k] * (k == l) - p[k] * p[l] + p[k] * pb + pb * p[l] + pb - pb * pb
            )
    return H


def hessian_det_k3(p, b: int) -> float:
    """Determinant of the constrained K=3 Hessian for base class ``b``.

    The value does not depend on ``b``; it equals :func:`hessian_det_k3_closed_form`.
    """
    if b not in (0, 1, 2):
        raise ValueError(f"base class must be 0, 1 or 2, got {b}")
    H = constrained_hessian_k3(p, b)
    return float(H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0])


def hessian_det_k3_closed_form(p) -> float:
    p0, p1, p2 = _check_simplex(p)
    return float(
        p0 * p1 + p0 * p2 + p1 * p2
        - p0 * p1**2 - p0 * p2**2 - p1 * p2**2 - p2 * p1**2 - p1 * p0**2 - p2 * p0**2
        + 6 * p0 * p1 * p2
    )


def unconstrained_hessian(p) -> np.ndarray:
    """Full K x K Hessian ``diag(p) - p p^T`` of ``L_i`` w.r.t. the scores (always singular)."""
    p = np.asarray(p, dtype=np.float64)
    return np.diag(p) - np.outer(p, p)
