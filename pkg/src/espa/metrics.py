"""Rank-based AUC and feature-budget arithmetic."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


def auc_binary(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_macro(proba, labels) -> float:
    """Unweighted one-vs-rest mean of :func:`auc_binary` over the rows of ``proba``."""
    proba = np.asarray(proba, dtype=float)
    labels = np.asarray(labels, dtype=int).ravel()
    M = proba.shape[0]
    missing = sorted(set(range(M)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no samples")
    return float(np.mean([auc_binary(proba[m], labels == m) for m in range(M)]))


def d_max(T: int, ratio: float = 13.8) -> int:
    """Largest feature count usable at sample size ``T`` under a linear ``T/D`` barrier."""
    return int(math.floor(T / ratio))


def feature_combinations(D: int, T: int, ratio: float = 13.8) -> int:
    """Number of ``d_max``-sized feature subsets of ``D`` features."""
    return math.comb(D, d_max(T, ratio))
