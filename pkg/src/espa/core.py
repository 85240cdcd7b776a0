"""Domain types and loss functionals.

Everything here uses the features x samples orientation: ``X`` is ``(D, T)``,
label probabilities ``Pi`` are ``(M, T)``, box coordinates ``S`` are
``(D, K)``, box affiliations ``Gamma`` are ``(K, T)`` and the label
conditional matrix ``Lambda`` is ``(M, K)``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LAMBDA_MIN = 1e-12
TIE_TOL = 1e-12
RIDGE = 1e-10

OBJECTIVES = ("joint", "discrete", "spa", "kl", "entropy_weighted")
MODES = ("discrete", "fuzzy")


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def validate_stochastic(m, tol: float = 1e-9) -> bool:
    """Return True if every entry is >= -tol and every column sums to 1 +- tol."""
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.size == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(m)):
        return False
    return bool(np.all(m >= -tol) and np.all(np.abs(m.sum(axis=0) - 1.0) <= tol))


def is_one_hot(gamma) -> bool:
    gamma = np.asarray(gamma)
    return bool(np.all((gamma == 0.0) | (gamma == 1.0)) and np.all(gamma.sum(axis=0) == 1.0))


@dataclass(frozen=True)
class FeatureMatrix:
    """Real ``D x T`` matrix with optional feature names."""

    values: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"feature matrix must be 2-D and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.feature_names is not None:
            names = tuple(str(n) for n in self.feature_names)
            if len(names) != v.shape[0]:
                raise DimensionError(f"{len(names)} feature names for {v.shape[0]} features")
            object.__setattr__(self, "feature_names", names)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class LabelMatrix:
    """Column-stochastic ``M x T`` matrix of label probabilities."""

    values: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"label matrix must be 2-D, got shape {v.shape}")
        if not (np.all(v >= 0.0) and np.all(v <= 1.0)) or not validate_stochastic(v, 1e-9):
            raise ValueError("label matrix is not column-stochastic")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        names = tuple(str(n) for n in self.class_names) or tuple(str(m) for m in range(v.shape[0]))
        if len(names) != v.shape[0]:
            raise DimensionError(f"{len(names)} class names for {v.shape[0]} classes")
        object.__setattr__(self, "class_names", names)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def from_labels(cls, labels: Sequence[int], n_classes: Optional[int] = None, class_names=()):
        labels = np.asarray(labels, dtype=int)
        m = int(labels.max()) + 1 if n_classes is None else n_classes
        pi = np.zeros((m, labels.size))
        pi[labels, np.arange(labels.size)] = 1.0
        return cls(pi, tuple(class_names))

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.values, axis=0)


@dataclass(frozen=True)
class SimplexVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or np.any(v < 0.0) or abs(v.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class Hyperparams:
    """Hyperparameters of a single eSPA fit.

    ``epsilon_S`` is only read by the SPA baseline.
    """

    K: int = 3
    epsilon_e: float = 0.1
    epsilon_CL: float = 0.1
    epsilon_S: float = 0.0
    mode: str = "discrete"
    tol: float = 1e-8
    max_iter: int = 200
    n_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        for name in ("epsilon_e", "epsilon_CL", "epsilon_S"):
            v = getattr(self, name)
            if not (v >= 0.0) or not math.isfinite(v):
                raise ValueError(f"{name} out of range: {v}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1 or self.n_restarts < 1:
            raise ValueError("max_iter and n_restarts must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "epsilon_e", float(self.epsilon_e))
        object.__setattr__(self, "epsilon_CL", float(self.epsilon_CL))
        object.__setattr__(self, "epsilon_S", float(self.epsilon_S))

    def replace(self, **changes) -> "Hyperparams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EspaModel:
    """A trained box discretization with its label network."""

    S: np.ndarray
    Gamma: np.ndarray
    W: np.ndarray
    Lambda: np.ndarray
    hyper: Hyperparams = field(default_factory=Hyperparams)
    loss_trace: tuple = ()
    class_names: tuple = ()

    def __post_init__(self):
        for name in ("S", "Gamma", "W", "Lambda"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        D, K = self.S.shape
        if self.W.shape != (D,):
            raise DimensionError(f"W has shape {self.W.shape}, expected ({D},)")
        if self.Gamma.shape[0] != K or self.Lambda.shape[1] != K:
            raise DimensionError("Gamma/Lambda disagree with S on the number of boxes")
        object.__setattr__(self, "loss_trace", tuple(float(v) for v in self.loss_trace))
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n_features(self) -> int:
        return self.S.shape[0]

    @property
    def n_boxes(self) -> int:
        return self.S.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Lambda.shape[0]


# ---------------------------------------------------------------------------
# loss functionals
# ---------------------------------------------------------------------------


def _xlogx(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w)
    pos = w > 0
    out[pos] = w[pos] * np.log(w[pos])
    return out


def entropy_term(W, epsilon_e: float) -> float:
    W = np.asarray(W, dtype=float)
    if epsilon_e == 0.0:
        return 0.0
    return float(epsilon_e / W.size * _xlogx(W).sum())


def feature_errors(X, S, Gamma) -> np.ndarray:
    """Per-feature reconstruction error ``(1/T) sum_t (X - S Gamma)^2``."""
    R = X - S @ Gamma
    return np.einsum("dt,dt->d", R, R) / X.shape[1]


def feature_errors_discrete(X, S, Gamma) -> np.ndarray:
    """Per-feature ``(1/T) sum_k sum_t Gamma_kt (X_dt - S_dk)^2``.

    Equals :func:`feature_errors` for one-hot ``Gamma``.
    """
    T = X.shape[1]
    # sum_t g_kt (x_dt - s_dk)^2 expanded to avoid a D x K x T tensor
    x2 = (X * X) @ Gamma.sum(axis=0)
    cross = np.sum(S * (X @ Gamma.T), axis=1)
    s2 = (S * S) @ Gamma.sum(axis=1)
    return (x2 - 2.0 * cross + s2) / T


def _label_term(Pi, P, scale) -> float:
    # -scale * sum Pi log P with 0 log 0 = 0 and +inf on Pi>0, P=0
    pos = Pi > 0
    if np.any(P[pos] <= 0.0):
        return math.inf
    return float(-scale * np.sum(Pi[pos] * np.log(P[pos])))


def kl_term(Pi, Lambda, Gamma, epsilon_CL: float = 1.0, floor: bool = True) -> float:
    """``-(epsilon_CL/(T M)) sum Pi log(Lambda Gamma)``."""
    M, T = Pi.shape
    L = np.maximum(Lambda, LAMBDA_MIN) if floor else Lambda
    return _label_term(Pi, L @ Gamma, epsilon_CL / (T * M))


def kl_term_discrete(Pi, Lambda, Gamma, epsilon_CL: float) -> float:
    M, T = Pi.shape
    logL = np.log(np.maximum(Lambda, LAMBDA_MIN))
    return float(-epsilon_CL / (T * M) * np.sum(logL * (Pi @ Gamma.T)))


def spa_penalty(S) -> float:
    """``sum_d sum_{k1,k2} (S_dk1 - S_dk2)^2`` via ``2K sum S^2 - 2 sum_d (sum_k S_dk)^2``."""
    K = S.shape[1]
    return float(2.0 * K * np.sum(S * S) - 2.0 * np.sum(S.sum(axis=1) ** 2))


def _check_dims(X, Pi, S, Gamma, W, Lambda):
    D, T = X.shape
    if S.shape[0] != D:
        raise DimensionError(f"S has {S.shape[0]} rows, X has {D} features")
    K = S.shape[1]
    if Gamma.shape != (K, T):
        raise DimensionError(f"Gamma has shape {Gamma.shape}, expected {(K, T)}")
    if W is not None and W.shape != (D,):
        raise DimensionError(f"W has shape {W.shape}, expected ({D},)")
    if Pi is not None:
        if Pi.shape[1] != T:
            raise DimensionError(f"Pi has {Pi.shape[1]} samples, X has {T}")
        if Lambda is not None and Lambda.shape != (Pi.shape[0], K):
            raise DimensionError(f"Lambda has shape {Lambda.shape}, expected {(Pi.shape[0], K)}")


def objective(
    X,
    Pi,
    S,
    Gamma,
    W,
    Lambda,
    epsilon_e: float = 0.0,
    epsilon_CL: float = 0.0,
    epsilon_S: float = 0.0,
    which: str = "joint",
) -> float:
    """Evaluate one of the loss functionals on raw arrays.

    ``joint`` is the full fuzzy functional, ``discrete`` its upper bound with
    the box expectation pulled outside the square and the logarithm,
    ``entropy_weighted`` the unsupervised part only, ``spa`` the regularized
    Euclidean segmentation error and ``kl`` the bare label divergence.
    """
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    W = None if W is None else np.asarray(W, dtype=float)
    Pi = None if Pi is None else np.asarray(Pi, dtype=float)
    Lambda = None if Lambda is None else np.asarray(Lambda, dtype=float)
    if which not in OBJECTIVES:
        raise ValueError(f"unknown objective {which!r}")
    if which in ("joint", "discrete", "kl") and (Pi is None or Lambda is None):
        raise ValueError(f"objective {which!r} needs label probabilities and Lambda")
    _check_dims(X, Pi, S, Gamma, W, Lambda)

    if which == "kl":
        return kl_term(Pi, Lambda, Gamma, 1.0, floor=False)
    if which == "spa":
        D, T = X.shape
        R = X - S @ Gamma
        return float(np.sum(R * R) / (T * D) + epsilon_S * spa_penalty(S))

    if which == "discrete":
        value = float(W @ feature_errors_discrete(X, S, Gamma)) + entropy_term(W, epsilon_e)
        if epsilon_CL:
            value += kl_term_discrete(Pi, Lambda, Gamma, epsilon_CL)
        return value

    value = float(W @ feature_errors(X, S, Gamma)) + entropy_term(W, epsilon_e)
    if which == "joint" and epsilon_CL:
        value += kl_term(Pi, Lambda, Gamma, epsilon_CL)
    return value


def evaluate_objective(X, Pi, model: EspaModel, which: str = "joint") -> float:
    """Evaluate the named functional at the parameters stored in ``model``."""
    h = model.hyper
    return objective(
        np.asarray(X),
        None if Pi is None else np.asarray(Pi),
        model.S,
        model.Gamma,
        model.W,
        model.Lambda,
        epsilon_e=h.epsilon_e,
        epsilon_CL=h.epsilon_CL,
        epsilon_S=h.epsilon_S,
        which=which,
    )
