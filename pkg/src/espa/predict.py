"""Out-of-sample labelling with a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError, EspaModel
from .solver import _first_min, _one_hot, weighted_sq_distances


@dataclass(frozen=True)
class Prediction:
    gamma: np.ndarray
    proba: np.ndarray
    labels: np.ndarray


def assign_boxes(X_new, model: EspaModel) -> np.ndarray:
    """One-hot ``K x T'`` assignment to the nearest box in the W-weighted metric.

    The label term is left out since labels are unknown here; fuzzy models
    are assigned the same way.
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[0] != model.n_features:
        raise DimensionError(
            f"expected {model.n_features} feature rows, got shape {X_new.shape}")
    dist = weighted_sq_distances(X_new, model.S, model.W)
    return _one_hot(_first_min(dist), model.n_boxes)


def predict_proba(X_new, model: EspaModel) -> Prediction:
    gamma = assign_boxes(X_new, model)
    proba = model.Lambda @ gamma
    return Prediction(gamma=gamma, proba=proba, labels=np.argmax(proba, axis=0))
