import numpy as np
import pytest


def random_stochastic(rng, rows, cols, one_hot=False):
    if one_hot:
        G = np.zeros((rows, cols))
        G[rng.integers(rows, size=cols), np.arange(cols)] = 1.0
        return G
    A = rng.random((rows, cols)) + 1e-3
    return A / A.sum(axis=0)


def random_simplex(rng, n):
    w = rng.random(n) + 1e-3
    return w / w.sum()


def random_instance(rng, D=3, K=2, T=6, M=2, fuzzy=True):
    """Random ``(X, Pi, S, Gamma, W, Lambda)`` with hard labels."""
    X = rng.normal(size=(D, T))
    labels = rng.integers(M, size=T)
    n = min(M, T)
    labels[:n] = np.arange(n)
    Pi = np.zeros((M, T))
    Pi[labels, np.arange(T)] = 1.0
    S = rng.normal(size=(D, K))
    Gamma = random_stochastic(rng, K, T, one_hot=not fuzzy)
    W = random_simplex(rng, D)
    Lambda = random_stochastic(rng, M, K)
    return X, Pi, S, Gamma, W, Lambda


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
