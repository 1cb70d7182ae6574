"""Training loops for mart, robust logitboost, abc-mart and abc-logitboost.

The abc variants pick a base class by exhaustive search, but only on search
iterations of the gap schedule: iteration ``m`` searches when
``(m - 1) % G == 0`` and otherwise reuses the last base found.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import MIN_CLASSES, Dataset
from .numerics import (
    ScoreState,
    abc_derivatives,
    neg_log_likelihood,
    plain_derivatives,
    softmax,
)
from .tree import LeafMode, grow_tree, leaf_values

log = logging.getLogger(__name__)

SEARCH = "search"
REUSE = "reuse"


class TrainingError(RuntimeError):
    pass


class Algorithm(str, enum.Enum):
    MART = "mart"
    LOGITBOOST = "logitboost"
    ABC_MART = "abc_mart"
    ABC_LOGITBOOST = "abc_logitboost"

    @classmethod
    def parse(cls, name) -> "Algorithm":
        if isinstance(name, cls):
            return name
        return cls(str(name).strip().lower().replace("-", "_"))

    @property
    def is_abc(self) -> bool:
        return self in (Algorithm.ABC_MART, Algorithm.ABC_LOGITBOOST)

    @property
    def unit_split_weights(self) -> bool:
        return self in (Algorithm.MART, Algorithm.ABC_MART)

    @property
    def plain_counterpart(self) -> "Algorithm":
        return {Algorithm.ABC_MART: Algorithm.MART,
                Algorithm.ABC_LOGITBOOST: Algorithm.LOGITBOOST}.get(self, self)

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyper-parameters.

    ``G`` only matters for the abc algorithms. ``nu`` is the shrinkage applied
    to every leaf value; values up to 0.1 are the usual choice.
    """

    algorithm: Algorithm = Algorithm.ABC_MART
    J: int = 20
    nu: float = 0.1
    M: int = 1000
    G: int = 1
    early_stop_loss: float | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.J < 2:
            raise ValueError(f"J must be >= 2, got {self.J}")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.M < 0:
            raise ValueError(f"M must be >= 0, got {self.M}")
        if self.G < 1:
            raise ValueError(f"G must be >= 1, got {self.G}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass(eq=False)
class Stage:
    """Trees committed at one iteration.

    ``classes[j]`` is the class updated by ``trees[j]``. For abc stages
    ``base`` is the base class (absent from ``classes``); plain stages use -1.
    """

    base: int
    classes: tuple
    trees: tuple


@dataclass
class TrainingMetrics:
    train_loss: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    base_class: list = field(default_factory=list)
    trees_fit_cum: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def append(self, loss, test_error, base, trees):
        self.train_loss.append(float(loss))
        self.test_error.append(test_error)
        self.base_class.append(int(base))
        self.trees_fit_cum.append(int(trees))


@dataclass(eq=False)
class Ensemble:
    config: TrainConfig
    n_classes: int
    n_features: int
    stages: list = field(default_factory=list)
    metrics: TrainingMetrics = field(default_factory=TrainingMetrics)
    tree_fit_count: int = 0
    class_labels: tuple = ()

    @property
    def base_history(self) -> list:
        return [s.base for s in self.stages]

    @property
    def n_iterations(self) -> int:
        return len(self.stages)

    def decision_function(self, X, up_to_m: int | None = None) -> np.ndarray:
        """Scores ``F`` (n_samples, K) after the first ``up_to_m`` iterations."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] < self.n_features:
            raise ValueError(
                f"feature vector has {X.shape[1]} entries, model was trained on {self.n_features}"
            )
        F = np.zeros((X.shape[0], self.n_classes))
        stop = self.n_iterations if up_to_m is None else min(int(up_to_m), self.n_iterations)
        for stage in self.stages[:stop]:
            outputs = [tree.predict(X) for tree in stage.trees]
            _add_stage(F, stage.base, stage.classes, outputs, self.config.nu)
        return F

    def predict_proba(self, X, up_to_m: int | None = None) -> np.ndarray:
        return softmax(self.decision_function(X, up_to_m))

    def predict_classes(self, X, up_to_m: int | None = None) -> np.ndarray:
        return np.argmax(self.decision_function(X, up_to_m), axis=1)


def predict(ensemble: Ensemble, x, up_to_m: int | None = None):
    """Scores, probabilities and predicted class (argmax, lowest index on ties) for one vector."""
    F = ensemble.decision_function(np.asarray(x, dtype=np.float64)[None, :], up_to_m)
    return F[0], softmax(F)[0], int(np.argmax(F[0]))


def _add_stage(F, base: int, classes: Sequence[int], outputs, nu: float) -> None:
    """Add one iteration's shrunken tree outputs to ``F`` in place.

    For abc stages the base column is rebuilt as minus the sum of the other
    columns, accumulated in ascending class order.
    """
    if base < 0:
        for k, out in zip(classes, outputs):
            F[:, k] = F[:, k] + nu * out
        return
    acc = np.zeros(F.shape[0])
    for k, out in zip(classes, outputs):
        F[:, k] = F[:, k] + nu * out
        acc = acc + F[:, k]
    F[:, base] = -acc


def gap_schedule(m: int, G: int) -> str:
    """``"search"`` if iteration ``m`` (1-based) re-selects the base class, else ``"reuse"``."""
    if m < 1 or G < 1:
        raise ValueError("m and G must be >= 1")
    return SEARCH if (m - 1) % G == 0 else REUSE


def select_base(losses: Sequence[float]) -> int:
    losses = np.asarray(losses, dtype=np.float64)
    if not np.isfinite(losses).all():
        raise TrainingError(f"non-finite candidate loss in {losses.tolist()}")
    return int(np.argmin(losses))


def tree_fit_cost(K: int, M: int, G: int, algorithm) -> int:
    """Number of regression trees fitted by ``M`` iterations."""
    if Algorithm.parse(algorithm).is_abc:
        searches = -(-M // G)
        return searches * K * (K - 1) + (M - searches) * (K - 1)
    return K * M


# --- tree fitting per algorithm ----------------------------------------------

def _split_weights(config: TrainConfig, h: np.ndarray) -> np.ndarray:
    # mart variants search splits with unit weights, logitboost variants with h
    return np.ones_like(h) if config.algorithm.unit_split_weights else h


def _fit_plain_tree(state: ScoreState, dataset: Dataset, k: int, config: TrainConfig):
    g, h = plain_derivatives(state, dataset.labels, k)
    num = -g
    # z * w equals -g under both weightings
    tree, leaf_of = grow_tree(num, _split_weights(config, h), dataset, config.J)
    mode = LeafMode.PLAIN_MART if config.algorithm.unit_split_weights else LeafMode.PLAIN_LOGIT
    leaf_values(tree, leaf_of, num, h, mode, state.n_classes)
    return tree, tree.value[leaf_of]


def _fit_abc_tree(state: ScoreState, dataset: Dataset, k: int, b: int, config: TrainConfig):
    g, h = abc_derivatives(state, dataset.labels, k, b)
    num = -g
    tree, leaf_of = grow_tree(num, _split_weights(config, h), dataset, config.J)
    leaf_values(tree, leaf_of, num, h, LeafMode.ABC, state.n_classes)
    return tree, tree.value[leaf_of]


@dataclass(eq=False)
class CandidatePass:
    base: int
    classes: tuple
    trees: tuple
    scores: np.ndarray
    probs: np.ndarray
    loss: float


def abc_candidate_pass(state: ScoreState, b: int, config: TrainConfig, dataset: Dataset,
                       executor=None) -> CandidatePass:
    """Fit the K-1 trees for base ``b`` and score the resulting model.

    ``state`` is left untouched; the candidate scores, probabilities and
    training loss are returned for the caller to commit or discard.
    """
    K = state.n_classes
    classes = tuple(k for k in range(K) if k != b)
    mapper = executor.map if executor is not None else map
    fits = list(mapper(lambda k: _fit_abc_tree(state, dataset, k, b, config), classes))
    scores = state.F.copy()
    _add_stage(scores, b, classes, [out for _, out in fits], config.nu)
    probs = softmax(scores)
    loss = neg_log_likelihood(probs, dataset.labels)
    return CandidatePass(b, classes, tuple(t for t, _ in fits), scores, probs, loss)


# --- training ----------------------------------------------------------------

def _check_training_set(train: Dataset) -> None:
    if train.n_samples == 0:
        raise TrainingError("empty training set")
    if train.n_classes < MIN_CLASSES:
        raise TrainingError(f"need K >= {MIN_CLASSES}, got {train.n_classes}")
    missing = np.flatnonzero(train.class_counts() == 0)
    if missing.size:
        raise TrainingError(f"classes {missing.tolist()} have no training samples")


def train(config: TrainConfig, train: Dataset, test: Dataset | None = None,
          callback: Callable[[int, Ensemble, ScoreState], None] | None = None) -> Ensemble:
    """Boost ``config.M`` iterations (fewer if the early-stop loss is reached).

    ``callback(m, ensemble, state)`` runs after every committed iteration.
    """
    _check_training_set(train)
    K = train.n_classes
    if test is not None and test.n_features > train.n_features:
        raise TrainingError(
            f"test set has {test.n_features} features, training set {train.n_features}"
        )
    algo = config.algorithm
    ensemble = Ensemble(config=config, n_classes=K, n_features=train.n_features,
                        class_labels=train.class_labels)
    state = ScoreState.initial(train.n_samples, K)
    F_test = None if test is None else np.zeros((test.n_samples, K))
    X_test = None if test is None else test.rows
    base = -1

    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else nullcontext()
    with pool as executor:
        for m in range(1, config.M + 1):
            if not algo.is_abc:
                fits = list((executor.map if executor else map)(
                    lambda k: _fit_plain_tree(state, train, k, config), range(K)))
                classes = tuple(range(K))
                trees = tuple(t for t, _ in fits)
                _add_stage(state.F, -1, classes, [out for _, out in fits], config.nu)
                try:
                    state.p = softmax(state.F)
                except FloatingPointError as exc:
                    raise TrainingError(f"iteration {m}: {exc}") from None
                loss = neg_log_likelihood(state, train.labels)
                ensemble.tree_fit_count += K
            else:
                try:
                    if gap_schedule(m, config.G) == SEARCH:
                        cands = list((executor.map if executor else map)(
                            lambda b: abc_candidate_pass(state, b, config, train), range(K)))
                        base = select_base([c.loss for c in cands])
                        chosen = cands[base]
                        ensemble.tree_fit_count += K * (K - 1)
                    else:
                        chosen = abc_candidate_pass(state, base, config, train, executor)
                        ensemble.tree_fit_count += K - 1
                except FloatingPointError as exc:
                    raise TrainingError(f"iteration {m}: {exc}") from None
                classes, trees = chosen.classes, chosen.trees
                state.F, state.p = chosen.scores, chosen.probs
                loss = chosen.loss

            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at iteration {m}")
            stage = Stage(base if algo.is_abc else -1, classes, trees)
            ensemble.stages.append(stage)

            test_error = None
            if test is not None:
                _add_stage(F_test, stage.base, classes,
                           [t.predict(X_test) for t in trees], config.nu)
                test_error = int((np.argmax(F_test, axis=1) != test.labels).sum())
            ensemble.metrics.append(loss, test_error, stage.base, ensemble.tree_fit_count)
            log.debug("iter %d loss %.6g test_error %s base %d", m, loss, test_error, stage.base)
            if callback is not None:
                callback(m, ensemble, state)
            if config.early_stop_loss is not None and loss <= config.early_stop_loss:
                log.info("early stop at iteration %d (loss %.3g)", m, loss)
                break
    return ensemble


def training_scores(ensemble: Ensemble, dataset: Dataset, up_to_m: int | None = None) -> ScoreState:
    """Replay the ensemble on ``dataset`` and return the resulting score state."""
    return ScoreState.from_scores(ensemble.decision_function(dataset.rows, up_to_m))

