"""scikit-learn compatible classifiers.

The estimators take the usual ``(n_samples, n_features)`` input and
transpose to the features x samples layout used by the numerical core.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils._param_validation import Interval, StrOptions
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from . import baselines, solver
from .core import MODES, EspaModel, Hyperparams
from .predict import assign_boxes, predict_proba


class FeatureScaling:
    """Per-feature affine preprocessing fitted on training data.

    Constant features are shifted but not rescaled.
    """

    def __init__(self, minimum, span):
        self.minimum = np.asarray(minimum, dtype=float)
        self.span = np.asarray(span, dtype=float)

    @classmethod
    def fit(cls, X, how: str = "minmax") -> "FeatureScaling":
        # X is features x samples
        D = X.shape[0]
        if how == "none":
            return cls(np.zeros(D), np.ones(D))
        if how == "standard":
            lo = X.mean(axis=1)
            span = X.std(axis=1)
        elif how == "minmax":
            lo = X.min(axis=1)
            span = X.max(axis=1) - lo
        else:
            raise ValueError(f"unknown scaling {how!r}")
        return cls(lo, np.where(span > 0, span, 1.0))

    def apply(self, X) -> np.ndarray:
        return (X - self.minimum[:, None]) / self.span[:, None]


class _BoxClassifierBase(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Shared prediction path: nearest box in the weighted metric, then ``Lambda``."""

    def _prepare_fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        if X.shape[0] < 2:
            raise ValueError(f"at least 2 samples are required, got n_samples={X.shape[0]}")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        Xt = X.T
        self.scaling_ = FeatureScaling.fit(Xt, self.scaling)
        Pi = np.zeros((self.classes_.size, y_idx.size))
        Pi[y_idx, np.arange(y_idx.size)] = 1.0
        return self.scaling_.apply(Xt), Pi

    def _scaled(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.scaling_.apply(X.T)

    def predict_proba(self, X):
        """Class probabilities, shape ``(n_samples, n_classes)``."""
        return predict_proba(self._scaled(X), self.model_).proba.T

    def predict(self, X):
        labels = predict_proba(self._scaled(X), self.model_).labels
        return self.classes_[labels]

    def transform(self, X):
        """One-hot box affiliations, shape ``(n_samples, K)``."""
        return assign_boxes(self._scaled(X), self.model_).T

    @property
    def feature_weights_(self) -> np.ndarray:
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.W)


class EspaClassifier(_BoxClassifierBase):
    """Entropic box discretization with a Bayesian label network.

    Parameters
    ----------
    K : int
        Number of boxes.
    epsilon_e : float
        Weight of the feature-entropy term. Small values concentrate the
        feature weights on few features; large values keep them uniform.
    epsilon_CL : float
        Weight of the label divergence term.
    mode : {"discrete", "fuzzy"}
        Hard or probabilistic box affiliations during training.
    tol, max_iter, n_restarts : see :class:`espa.core.Hyperparams`.
    random_state : int
        Seed of the restart streams.
    scaling : {"minmax", "standard", "none"}
        Per-feature preprocessing fitted on the training data. The entropy
        weight acts on squared errors, so its useful range depends on the
        feature units; ``"minmax"`` maps every training feature onto [0, 1].

    Attributes
    ----------
    model_ : EspaModel
        Box coordinates, affiliations, feature weights and label matrix in
        the scaled feature space.
    trace_ : FitTrace
        Objective per iteration of the selected restart.
    n_iter_ : int
    classes_ : ndarray
    """

    _parameter_constraints: dict = {
        "K": [Interval(numbers.Integral, 1, None, closed="left")],
        "epsilon_e": [Interval(numbers.Real, 0, None, closed="left")],
        "epsilon_CL": [Interval(numbers.Real, 0, None, closed="left")],
        "mode": [StrOptions(set(MODES))],
        "tol": [Interval(numbers.Real, 0, None, closed="neither")],
        "max_iter": [Interval(numbers.Integral, 1, None, closed="left")],
        "n_restarts": [Interval(numbers.Integral, 1, None, closed="left")],
        "random_state": [Interval(numbers.Integral, 0, None, closed="left")],
        "scaling": [StrOptions({"minmax", "standard", "none"})],
    }

    def __init__(
        self,
        K=3,
        epsilon_e=0.1,
        epsilon_CL=0.1,
        mode="discrete",
        tol=1e-8,
        max_iter=200,
        n_restarts=10,
        random_state=0,
        scaling="minmax",
    ):
        self.K = K
        self.epsilon_e = epsilon_e
        self.epsilon_CL = epsilon_CL
        self.mode = mode
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.random_state = random_state
        self.scaling = scaling

    @classmethod
    def from_hyperparams(cls, hyper: Hyperparams, scaling: str = "minmax") -> "EspaClassifier":
        return cls(K=hyper.K, epsilon_e=hyper.epsilon_e, epsilon_CL=hyper.epsilon_CL,
                   mode=hyper.mode, tol=hyper.tol, max_iter=hyper.max_iter,
                   n_restarts=hyper.n_restarts, random_state=hyper.seed, scaling=scaling)

    @property
    def hyperparams(self) -> Hyperparams:
        return Hyperparams(K=self.K, epsilon_e=self.epsilon_e, epsilon_CL=self.epsilon_CL,
                           mode=self.mode, tol=self.tol, max_iter=self.max_iter,
                           n_restarts=self.n_restarts, seed=self.random_state)

    def fit(self, X, y):
        self._validate_params()
        Xs, Pi = self._prepare_fit(X, y)
        self.model_, self.trace_ = solver.fit(
            Xs, Pi, self.hyperparams, class_names=tuple(str(c) for c in self.classes_))
        self.n_iter_ = self.trace_.iterations_run
        return self


class ClusterBayesClassifier(_BoxClassifierBase):
    """Unsupervised clustering turned into a classifier by label counting per cluster.

    ``method="kmeans"`` runs Lloyd iterations, ``method="spa"`` the
    regularized segmentation with penalty ``epsilon_S``.
    """

    _parameter_constraints: dict = {
        "K": [Interval(numbers.Integral, 1, None, closed="left")],
        "method": [StrOptions({"kmeans", "spa"})],
        "epsilon_S": [Interval(numbers.Real, 0, None, closed="left")],
        "max_iter": [Interval(numbers.Integral, 1, None, closed="left")],
        "n_restarts": [Interval(numbers.Integral, 1, None, closed="left")],
        "random_state": [Interval(numbers.Integral, 0, None, closed="left")],
        "scaling": [StrOptions({"minmax", "standard", "none"})],
    }

    def __init__(self, K=3, method="kmeans", epsilon_S=0.0, max_iter=200, n_restarts=10,
                 random_state=0, scaling="minmax"):
        self.K = K
        self.method = method
        self.epsilon_S = epsilon_S
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.random_state = random_state
        self.scaling = scaling

    def fit(self, X, y):
        self._validate_params()
        Xs, Pi = self._prepare_fit(X, y)
        if self.method == "kmeans":
            res = baselines.kmeans_fit(Xs, self.K, self.random_state, self.max_iter,
                                       n_restarts=self.n_restarts)
        else:
            res = baselines.spa_fit(Xs, self.K, self.epsilon_S, self.random_state, self.max_iter,
                                    n_restarts=self.n_restarts)
        D = Xs.shape[0]
        hyper = Hyperparams(K=self.K, epsilon_e=0.0, epsilon_CL=0.0, epsilon_S=self.epsilon_S,
                            max_iter=self.max_iter, n_restarts=self.n_restarts,
                            seed=self.random_state)
        self.clustering_ = res
        self.n_iter_ = len(res.trace)
        self.model_ = EspaModel(S=res.S, Gamma=res.Gamma, W=np.full(D, 1.0 / D),
                                Lambda=baselines.bayes_readout(res.Gamma, Pi), hyper=hyper,
                                loss_trace=res.trace,
                                class_names=tuple(str(c) for c in self.classes_))
        return self
