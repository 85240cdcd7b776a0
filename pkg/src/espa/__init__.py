"""Entropic box discretization classifier with feature selection.

The core works on features x samples arrays (``X`` is ``D x T``, labels
``Pi`` are ``M x T``); the scikit-learn estimators in :mod:`espa.estimator`
accept the usual ``(n_samples, n_features)`` layout.
"""

from .baselines import ClusteringResult, bayes_readout, kmeans_fit, spa_fit
from .core import (
    DimensionError,
    EspaModel,
    FeatureMatrix,
    Hyperparams,
    LabelMatrix,
    SimplexVector,
    evaluate_objective,
    objective,
)
from .datagen import SyntheticDataset, split, toy1, toy2
from .estimator import ClusterBayesClassifier, EspaClassifier
from .harness import barrier_fit, barrier_sweep, cross_validate, grid_search
from .metrics import auc_binary, auc_macro, d_max, feature_combinations
from .predict import Prediction, assign_boxes, predict_proba
from .solver import FitError, FitTrace, fit, iterate

__version__ = "0.1.0"

__all__ = [
    "ClusterBayesClassifier", "ClusteringResult", "DimensionError", "EspaClassifier", "EspaModel",
    "FeatureMatrix", "FitError", "FitTrace", "Hyperparams", "LabelMatrix", "Prediction",
    "SimplexVector", "SyntheticDataset", "assign_boxes", "auc_binary", "auc_macro", "barrier_fit",
    "barrier_sweep", "bayes_readout", "cross_validate", "d_max", "evaluate_objective",
    "feature_combinations", "fit", "grid_search", "iterate", "kmeans_fit", "objective",
    "predict_proba", "spa_fit", "split", "toy1", "toy2",
]
