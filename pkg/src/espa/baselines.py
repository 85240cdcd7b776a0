"""K-means, SPA segmentation and the label-counting readout.

These share seeding and empty-cluster repair with the eSPA solver, so any
difference in the results comes from the objective alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RIDGE, spa_penalty
from .solver import (
    _first_min,
    _one_hot,
    lambda_step_discrete,
    reseed_empty,
    restart_rng,
    s_step,
    seed_boxes,
    weighted_sq_distances,
)


@dataclass(frozen=True)
class ClusteringResult:
    S: np.ndarray
    Gamma: np.ndarray
    objective: float
    trace: tuple = field(default=())


def kmeans_objective(X, S, Gamma) -> float:
    D, T = X.shape
    R = X - S @ Gamma
    return float(np.sum(R * R) / (T * D))


def spa_objective(X, S, Gamma, epsilon_S: float) -> float:
    return kmeans_objective(X, S, Gamma) + epsilon_S * spa_penalty(S)


def spa_s_step(X, Gamma, epsilon_S: float) -> np.ndarray:
    """Minimizer over ``S`` of the regularized segmentation error for fixed ``Gamma``.

    Setting the gradient to zero gives, for every feature, the same
    ``K x K`` system ``(G G^T / (T D) + 2 eps (K I - 1 1^T)) s_d = G x_d / (T D)``.
    """
    D, T = X.shape
    K = Gamma.shape[0]
    A = Gamma @ Gamma.T / (T * D) + 2.0 * epsilon_S * (K * np.eye(K) - np.ones((K, K)))
    A += RIDGE * np.eye(K)
    return np.linalg.solve(A, Gamma @ X.T / (T * D)).T


def _lloyd(X, K, rng, max_iter, epsilon_S):
    D, T = X.shape
    W = np.full(D, 1.0 / D)
    S = X[:, seed_boxes(X, K, rng, W)].copy()
    Gamma = _one_hot(_first_min(weighted_sq_distances(X, S, W)), K)
    trace = []
    prev = None
    for _ in range(max_iter):
        if prev is not None:
            Gamma = _one_hot(_first_min(weighted_sq_distances(X, S, W)), K)
        repaired = reseed_empty(X, S, W, Gamma)
        if epsilon_S == 0.0:
            Gamma = repaired
            S = s_step(X, Gamma, "discrete", S)
            value = kmeans_objective(X, S, Gamma)
        else:
            S_plain = spa_s_step(X, Gamma, epsilon_S)
            value = spa_objective(X, S_plain, Gamma, epsilon_S)
            S = S_plain
            if repaired is not Gamma:
                S_rep = spa_s_step(X, repaired, epsilon_S)
                v_rep = spa_objective(X, S_rep, repaired, epsilon_S)
                if v_rep <= value:
                    Gamma, S, value = repaired, S_rep, v_rep
        trace.append(value)
        if prev is not None and prev - value <= 1e-12 * max(abs(prev), 1e-30):
            break
        prev = value
    return S, Gamma, trace


def _best_of(X, K, seed, max_iter, n_restarts, epsilon_S) -> ClusteringResult:
    D, T = X.shape
    if K > T:
        raise ValueError(f"more boxes than samples: K={K}, T={T}")
    best = None
    for r in range(n_restarts):
        S, Gamma, trace = _lloyd(X, K, restart_rng(seed, r), max_iter, epsilon_S)
        value = spa_objective(X, S, Gamma, epsilon_S)
        if best is None or value < best.objective:
            best = ClusteringResult(S=S, Gamma=Gamma, objective=value, trace=tuple(trace))
    return best


def kmeans_fit(X, K: int, seed: int = 0, max_iter: int = 200, n_restarts: int = 1) -> ClusteringResult:
    """Lloyd's algorithm scored by ``(1/(T D)) sum (X - S Gamma)^2``."""
    return _best_of(np.asarray(X, dtype=float), K, seed, max_iter, n_restarts, 0.0)


def spa_fit(X, K: int, epsilon_S: float = 0.0, seed: int = 0, max_iter: int = 200,
            n_restarts: int = 1) -> ClusteringResult:
    """Hard-assignment SPA: nearest-box steps alternating with the regularized S-step."""
    if epsilon_S < 0:
        raise ValueError(f"epsilon_S must be non-negative, got {epsilon_S}")
    return _best_of(np.asarray(X, dtype=float), K, seed, max_iter, n_restarts, float(epsilon_S))


def bayes_readout(Gamma, Pi) -> np.ndarray:
    """Label frequencies per cluster; same rule as the discrete Lambda-step."""
    return lambda_step_discrete(Pi, Gamma)
