"""Multi-class boosted regression trees with adaptive base classes.

Implements mart, robust logitboost, abc-mart and abc-logitboost. The abc
variants re-select their base class only every ``G`` iterations.
"""

from .boost import (
    Algorithm,
    Ensemble,
    TrainConfig,
    TrainingError,
    abc_candidate_pass,
    gap_schedule,
    predict,
    select_base,
    train,
    tree_fit_cost,
)
from .data import DataError, Dataset, from_arrays, parse_csv, parse_libsvm, subsample
from .model_io import load_model, save_model
from .synthetic import make_clusters, make_slabs

__all__ = [
    "Algorithm", "DataError", "Dataset", "Ensemble", "TrainConfig", "TrainingError",
    "abc_candidate_pass", "from_arrays", "gap_schedule", "load_model", "make_clusters",
    "make_slabs", "parse_csv", "parse_libsvm", "predict", "save_model", "select_base",
    "subsample", "train", "tree_fit_cost",
]

__version__ = "0.1.0"
