import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espa.core import (
    LAMBDA_MIN,
    DimensionError,
    EspaModel,
    FeatureMatrix,
    Hyperparams,
    LabelMatrix,
    SimplexVector,
    evaluate_objective,
    objective,
    spa_penalty,
    validate_stochastic,
)

from conftest import random_instance


class TestValidateStochastic:
    def test_identity(self):
        assert validate_stochastic(np.eye(2), 1e-9)

    def test_bad_column_sum(self):
        assert not validate_stochastic(np.array([[0.6, 0.2], [0.4, 0.9]]), 1e-9)

    def test_uniform_column(self):
        assert validate_stochastic(np.array([[0.5], [0.5]]), 1e-9)

    def test_negative_entry(self):
        assert not validate_stochastic(np.array([[1.5], [-0.5]]), 1e-9)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            validate_stochastic(np.zeros((0, 3)))


class TestTypes:
    def test_feature_matrix_rejects_nan(self):
        with pytest.raises(ValueError):
            FeatureMatrix(np.array([[1.0, np.nan]]))

    def test_feature_matrix_names_length(self):
        with pytest.raises(DimensionError):
            FeatureMatrix(np.zeros((2, 3)), ("a",))

    def test_feature_matrix_is_read_only(self):
        X = FeatureMatrix(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            X.values[0, 0] = 1.0

    def test_label_matrix_from_labels(self):
        Pi = LabelMatrix.from_labels([0, 1, 1], 2, ("a", "b"))
        np.testing.assert_array_equal(Pi.values, [[1, 0, 0], [0, 1, 1]])
        np.testing.assert_array_equal(Pi.hard_labels(), [0, 1, 1])

    def test_label_matrix_must_be_stochastic(self):
        with pytest.raises(ValueError):
            LabelMatrix(np.array([[0.5, 1.0], [0.4, 0.0]]))

    def test_simplex_vector(self):
        SimplexVector(np.array([0.25, 0.75]))
        with pytest.raises(ValueError):
            SimplexVector(np.array([0.5, 0.6]))

    @pytest.mark.parametrize("bad", [
        {"K": 0}, {"epsilon_e": -1.0}, {"epsilon_CL": -1e-9}, {"epsilon_S": math.inf},
        {"mode": "soft"}, {"tol": 0.0}, {"max_iter": 0}, {"n_restarts": 0}, {"seed": -1},
    ])
    def test_hyperparams_validation(self, bad):
        with pytest.raises(ValueError):
            Hyperparams(**bad)

    def test_model_shape_checks(self):
        with pytest.raises(DimensionError):
            EspaModel(S=np.zeros((2, 3)), Gamma=np.zeros((3, 4)), W=np.ones(3) / 3,
                      Lambda=np.full((2, 3), 0.5))


def _exact_fit_instance():
    S = np.array([[0.0, 2.0], [1.0, -1.0]])
    Gamma = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    X = S @ Gamma
    Lambda = np.eye(2)
    Pi = Lambda @ Gamma
    W = np.array([0.5, 0.5])
    return X, Pi, S, Gamma, W, Lambda


class TestObjective:
    def test_joint_hand_value(self):
        X, Pi, S, Gamma, W, Lambda = _exact_fit_instance()
        v = objective(X, Pi, S, Gamma, W, Lambda, epsilon_e=0.1, epsilon_CL=1.0, which="joint")
        assert v == pytest.approx(0.1 / 2 * (2 * 0.5 * math.log(0.5)), abs=1e-12)
        assert v == pytest.approx(-0.034657, abs=1e-6)

    def test_joint_vanishes(self):
        X, Pi, S, Gamma, W, Lambda = _exact_fit_instance()
        assert objective(X, Pi, S, Gamma, W, Lambda, 0.0, 0.0, which="joint") == 0.0

    def test_joint_equals_discrete_for_one_hot(self, rng):
        for _ in range(20):
            X, Pi, S, Gamma, W, Lambda = random_instance(rng, D=4, K=3, T=10, M=3, fuzzy=False)
            a = objective(X, Pi, S, Gamma, W, Lambda, 0.3, 0.7, which="joint")
            b = objective(X, Pi, S, Gamma, W, Lambda, 0.3, 0.7, which="discrete")
            assert a == pytest.approx(b, abs=1e-12, rel=1e-12)

    def test_jensen_bound_fuzzy(self, rng):
        for _ in range(100):
            X, Pi, S, Gamma, W, Lambda = random_instance(rng, D=3, K=3, T=8, M=2)
            eps_e, eps_cl = rng.random(2)
            a = objective(X, Pi, S, Gamma, W, Lambda, eps_e, eps_cl, which="joint")
            b = objective(X, Pi, S, Gamma, W, Lambda, eps_e, eps_cl, which="discrete")
            assert a <= b + 1e-12

    def test_joint_without_labels_is_entropy_weighted(self, rng):
        X, Pi, S, Gamma, W, Lambda = random_instance(rng)
        a = objective(X, Pi, S, Gamma, W, Lambda, 0.2, 0.0, which="joint")
        b = objective(X, None, S, Gamma, W, None, 0.2, 0.0, which="entropy_weighted")
        assert a == b

    def test_entropy_weighted_uniform_equals_spa(self, rng):
        for _ in range(10):
            X, Pi, S, Gamma, _, _ = random_instance(rng, D=5, K=3, T=9)
            W = np.full(5, 0.2)
            a = objective(X, None, S, Gamma, W, None, 0.0, which="entropy_weighted")
            b = objective(X, None, S, Gamma, None, None, epsilon_S=0.0, which="spa")
            assert a == pytest.approx(b, abs=1e-12)

    def test_kl_infinite_sentinel(self):
        Pi = np.array([[1.0], [0.0]])
        Lambda = np.array([[0.0], [1.0]])
        v = objective(np.zeros((1, 1)), Pi, np.zeros((1, 1)), np.ones((1, 1)), None, Lambda, which="kl")
        assert v == math.inf

    def test_floor_inside_joint(self):
        Pi = np.array([[1.0], [0.0]])
        Lambda = np.array([[0.0], [1.0]])
        v = objective(np.zeros((1, 1)), Pi, np.zeros((1, 1)), np.ones((1, 1)), np.ones(1), Lambda,
                      0.0, 1.0, which="joint")
        assert v == pytest.approx(-math.log(LAMBDA_MIN) / 2)

    def test_spa_penalty_identity(self, rng):
        S = rng.normal(size=(4, 3))
        brute = sum((S[d, a] - S[d, b]) ** 2 for d in range(4) for a in range(3) for b in range(3))
        assert spa_penalty(S) == pytest.approx(brute, rel=1e-12)

    def test_dimension_mismatch(self, rng):
        X, Pi, S, Gamma, W, Lambda = random_instance(rng)
        with pytest.raises(DimensionError):
            objective(X[:2], Pi, S, Gamma, W, Lambda)
        with pytest.raises(DimensionError):
            objective(X, Pi, S, Gamma[:, :3], W, Lambda)

    def test_needs_labels(self, rng):
        X, Pi, S, Gamma, W, Lambda = random_instance(rng)
        with pytest.raises(ValueError):
            objective(X, None, S, Gamma, W, None, which="joint")

    def test_evaluate_objective_uses_model_hyper(self, rng):
        X, Pi, S, Gamma, W, Lambda = random_instance(rng)
        h = Hyperparams(K=2, epsilon_e=0.4, epsilon_CL=0.3)
        m = EspaModel(S=S, Gamma=Gamma, W=W, Lambda=Lambda, hyper=h)
        assert evaluate_objective(X, Pi, m, "joint") == objective(
            X, Pi, S, Gamma, W, Lambda, 0.4, 0.3, which="joint")


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 4), M=st.integers(2, 3),
       eps_e=st.floats(0, 2), eps_cl=st.floats(0, 5))
def test_jensen_property(seed, K, M, eps_e, eps_cl):
    rng = np.random.default_rng(seed)
    X, Pi, S, Gamma, W, Lambda = random_instance(rng, D=3, K=K, T=7, M=M)
    joint = objective(X, Pi, S, Gamma, W, Lambda, eps_e, eps_cl, which="joint")
    discr = objective(X, Pi, S, Gamma, W, Lambda, eps_e, eps_cl, which="discrete")
    assert joint <= discr + 1e-12 * max(1.0, abs(discr))
