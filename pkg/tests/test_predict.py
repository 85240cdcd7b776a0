import numpy as np
import pytest

from espa import datagen, solver
from espa.core import LAMBDA_MIN, DimensionError, EspaModel, Hyperparams
from espa.estimator import FeatureScaling
from espa.metrics import auc_binary
from espa.predict import assign_boxes, predict_proba


def _model(S, W, Lambda):
    S = np.asarray(S, dtype=float)
    return EspaModel(S=S, Gamma=np.zeros((S.shape[1], 0)), W=np.asarray(W, dtype=float),
                     Lambda=np.asarray(Lambda, dtype=float))


def test_sample_on_box_is_assigned_to_it(rng):
    S = rng.normal(size=(3, 4))
    m = _model(S, np.full(3, 1 / 3), np.full((2, 4), 0.5))
    np.testing.assert_array_equal(np.argmax(assign_boxes(S, m), axis=0), np.arange(4))


def test_zero_weight_feature_ignored():
    m = _model([[0.0, 5.0], [0.0, 100.0]], [1.0, 0.0], np.full((2, 2), 0.5))
    X = np.array([[4.9], [-1000.0]])
    np.testing.assert_array_equal(assign_boxes(X, m)[:, 0], [0, 1])


def test_matches_enumeration(rng):
    S = rng.normal(size=(4, 5))
    W = rng.random(4)
    W /= W.sum()
    X = rng.normal(size=(4, 50))
    G = assign_boxes(X, _model(S, W, np.full((2, 5), 0.5)))
    for t in range(50):
        costs = [float(W @ (X[:, t] - S[:, k]) ** 2) for k in range(5)]
        assert np.argmax(G[:, t]) == int(np.argmin(costs))


def test_row_mismatch():
    with pytest.raises(DimensionError):
        assign_boxes(np.zeros((3, 2)), _model(np.zeros((2, 2)), [0.5, 0.5], np.full((2, 2), 0.5)))


def test_one_hot_lambda_probability():
    L = np.array([[1 - LAMBDA_MIN, LAMBDA_MIN], [LAMBDA_MIN, 1 - LAMBDA_MIN]])
    m = _model([[0.0, 10.0]], [1.0], L)
    p = predict_proba(np.array([[9.0]]), m)
    assert p.labels[0] == 1 and p.proba[1, 0] >= 1 - 2 * LAMBDA_MIN


def test_proba_is_lambda_column():
    m = _model([[0.0, 10.0]], [1.0], [[0.7, 0.2], [0.3, 0.8]])
    p = predict_proba(np.array([[1.0]]), m)
    np.testing.assert_allclose(p.proba[:, 0], [0.7, 0.3], atol=1e-12)
    np.testing.assert_allclose(p.proba, m.Lambda @ p.gamma, atol=1e-12)


def test_label_tie_goes_to_first_class():
    m = _model([[0.0]], [1.0], [[0.5], [0.5]])
    assert predict_proba(np.zeros((1, 1)), m).labels[0] == 0


def test_invariants(rng):
    S = rng.normal(size=(3, 4))
    W = np.array([0.6, 0.4, 0.0])
    L = rng.random((3, 4))
    m = _model(S, W, L / L.sum(axis=0))
    X = rng.normal(size=(3, 40))
    p = predict_proba(X, m)
    np.testing.assert_allclose(p.proba.sum(axis=0), 1.0, atol=1e-9)
    perm = rng.permutation(40)
    np.testing.assert_array_equal(predict_proba(X[:, perm], m).labels, p.labels[perm])
    X2 = X.copy()
    X2[2] *= -37.0
    np.testing.assert_array_equal(assign_boxes(X2, m), p.gamma)


def test_toy1_validation_auc():
    ds = datagen.toy1(50, 600, seed=3)
    train, valid = datagen.split(ds, 0.75, seed=3)
    scale = FeatureScaling.fit(np.asarray(train.X))
    model, _ = solver.fit(scale.apply(np.asarray(train.X)), np.asarray(train.Pi),
                          Hyperparams(K=3, epsilon_e=0.1, epsilon_CL=0.1))
    p = predict_proba(scale.apply(np.asarray(valid.X)), model)
    assert auc_binary(p.proba[1], valid.labels == 1) >= 0.95
