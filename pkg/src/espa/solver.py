"""Alternating minimization of the eSPA functional.

One outer iteration runs the Gamma-, S-, W- and Lambda-steps in that order.
Each step solves its sub-problem exactly (discrete mode) or with a
monotone safeguard (fuzzy mode), so the recorded objective never increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    LAMBDA_MIN,
    RIDGE,
    TIE_TOL,
    DimensionError,
    EspaModel,
    Hyperparams,
    entropy_term,
    feature_errors,
    feature_errors_discrete,
    kl_term,
    kl_term_discrete,
    objective,
)

logger = logging.getLogger(__name__)


class FitError(RuntimeError):
    """Raised when no restart produced a finite objective."""


@dataclass
class FitTrace:
    objective: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    restart_index_selected: int = 0


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """PCG64 stream for one restart, derived from ``(seed, restart)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(restart,))))


# ---------------------------------------------------------------------------
# individual steps
# ---------------------------------------------------------------------------


def weighted_sq_distances(X, S, W) -> np.ndarray:
    """``K x T`` matrix of ``sum_d W_d (X_dt - S_dk)^2``."""
    XW = X * W[:, None]
    d = (W @ (X * X))[None, :] - 2.0 * (S.T @ XW) + (W @ (S * S))[:, None]
    return np.maximum(d, 0.0)


def w_step(errors, epsilon_e: float) -> np.ndarray:
    """Exact minimizer of ``W.e + (eps/D) sum W log W`` over the simplex.

    For ``epsilon_e = 0`` the weight is spread uniformly over the features
    whose error is within ``TIE_TOL`` of the minimum.
    """
    e = np.asarray(errors, dtype=float)
    if epsilon_e < 0:
        raise ValueError(f"epsilon_e must be non-negative, got {epsilon_e}")
    D = e.size
    shifted = e - e.min()
    if epsilon_e == 0.0:
        W = (shifted <= TIE_TOL).astype(float)
    else:
        W = np.exp(-D * shifted / epsilon_e)
    return W / W.sum()


def s_step(X, Gamma, mode: str = "fuzzy", S_prev=None) -> np.ndarray:
    """Least-squares box coordinates for fixed affiliations.

    Discrete mode returns per-box means; a box without samples keeps its
    column from ``S_prev`` (zeros when none is given).
    """
    X = np.asarray(X, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if Gamma.shape[1] != X.shape[1]:
        raise DimensionError(f"Gamma has {Gamma.shape[1]} samples, X has {X.shape[1]}")
    K = Gamma.shape[0]
    if mode == "discrete":
        counts = Gamma.sum(axis=1)
        sums = X @ Gamma.T
        S = np.zeros((X.shape[0], K)) if S_prev is None else np.array(S_prev, dtype=float)
        full = counts > 0
        S[:, full] = sums[:, full] / counts[full]
        return S
    G = Gamma @ Gamma.T + RIDGE * np.eye(K)
    return np.linalg.solve(G, Gamma @ X.T).T


def _first_min(cost) -> np.ndarray:
    """Index of the first entry per column within ``TIE_TOL`` of the column minimum."""
    return np.argmax(cost <= cost.min(axis=0) + TIE_TOL, axis=0)


def _one_hot(idx, K) -> np.ndarray:
    G = np.zeros((K, idx.size))
    G[idx, np.arange(idx.size)] = 1.0
    return G


def discrete_cost(X, S, W, Lambda, Pi, epsilon_CL) -> np.ndarray:
    """Per-sample cost of each box, ``K x T``, scaled by ``T``."""
    cost = weighted_sq_distances(X, S, W)
    if epsilon_CL and Pi is not None:
        M = Pi.shape[0]
        cost = cost - (epsilon_CL / M) * (np.log(np.maximum(Lambda, LAMBDA_MIN)).T @ Pi)
    return cost


def gamma_step_discrete(X, S, W, Lambda, Pi, epsilon_CL) -> np.ndarray:
    X, S, W = (np.asarray(a, dtype=float) for a in (X, S, W))
    Pi = None if Pi is None else np.asarray(Pi, dtype=float)
    Lambda = None if Lambda is None else np.asarray(Lambda, dtype=float)
    cost = discrete_cost(X, S, W, Lambda, Pi, epsilon_CL)
    return _one_hot(_first_min(cost), S.shape[1])


def gamma_step_fuzzy(
    X,
    S,
    W,
    Lambda,
    Pi,
    epsilon_CL,
    Gamma_prev,
    n_inner: int = 5,
    max_backtrack: int = 12,
    interior_mix: float = 0.5,
) -> np.ndarray:
    """Exponentiated-gradient updates of every column of ``Gamma``.

    Columns touching the simplex boundary are first pulled towards the
    barycentre, because multiplicative updates cannot revive a zero entry.
    A column is returned unchanged unless its objective strictly improves.
    """
    X, S, W = (np.asarray(a, dtype=float) for a in (X, S, W))
    G_prev = np.asarray(Gamma_prev, dtype=float)
    K, T = G_prev.shape
    labelled = bool(epsilon_CL) and Pi is not None
    if labelled:
        Pi = np.asarray(Pi, dtype=float)
        L = np.maximum(np.asarray(Lambda, dtype=float), LAMBDA_MIN)
        scale = epsilon_CL / Pi.shape[0]

    # per-column objective and gradient, times T; L @ G >= LAMBDA_MIN keeps the log finite.
    # G may carry a leading batch axis of candidate step lengths.
    def value(cols, G):
        R = X[:, cols] - S @ G
        f = np.sum(W[:, None] * (R * R), axis=-2)
        if labelled:
            f = f - scale * np.sum(Pi[:, cols] * np.log(L @ G), axis=-2)
        return f

    def gradient(cols, G):
        g = -2.0 * S.T @ (W[:, None] * (X[:, cols] - S @ G))
        if labelled:
            g = g - scale * (L.T @ (Pi[:, cols] / (L @ G)))
        return g

    halvings = 0.5 ** np.arange(1, max_backtrack)[:, None, None]
    every = np.arange(T)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f_prev = value(every, G_prev)
        G = G_prev.copy()
        boundary = np.any(G <= 1e-12, axis=0)
        G[:, boundary] = (1.0 - interior_mix) * G[:, boundary] + interior_mix / K
        f = value(every, G)
        active = np.isfinite(f)
        # step = mult / (gradient spread); mult carries over between inner steps
        mult = np.ones(T)
        for _ in range(n_inner):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            Gi = G[:, idx]
            g = gradient(idx, Gi)
            spread = g.max(axis=0) - g.min(axis=0)
            ok = np.all(np.isfinite(g), axis=0) & (spread > 0)
            active[idx[~ok]] = False
            idx, g, spread, Gi = idx[ok], g[:, ok], spread[ok], Gi[:, ok]
            z0 = -(g - g.min(axis=0)) / spread
            # full step first; the shorter ones are tried in one batch where it fails
            cand = Gi * np.exp(mult[idx] * z0)
            cand /= cand.sum(axis=0)
            fc = value(idx, cand)
            found = fc < f[idx]
            j = np.zeros(idx.size, dtype=int)
            retry = np.flatnonzero(~found)
            if retry.size:
                cols = idx[retry]
                cb = Gi[:, retry] * np.exp(halvings * (mult[cols] * z0[:, retry]))
                cb /= cb.sum(axis=1, keepdims=True)
                fb = value(cols, cb)
                better = fb < f[cols]
                hit = better.any(axis=0)
                jb = np.argmax(better, axis=0)[hit]
                r = retry[hit]
                cand[:, r] = cb[jb, :, np.flatnonzero(hit)].T
                fc[r] = fb[jb, np.flatnonzero(hit)]
                found[r] = True
                j[r] = jb + 1
            acc = idx[found]
            G[:, acc] = cand[:, found]
            f[acc] = fc[found]
            # a column whose line search failed would fail again from the same point
            active[idx[~found]] = False
            mult[acc] = np.minimum(2.0 * mult[acc] * 0.5 ** j[found], 1.0)

    keep = ~(np.isfinite(f) & (f < f_prev))
    G[:, keep] = G_prev[:, keep]
    return G


def _floored_normalize(A) -> np.ndarray:
    """Column-wise maximizer of ``sum_m A_mk log L_mk`` over ``{L >= LAMBDA_MIN, sum_m L_mk = 1}``.

    Columns with no mass become uniform.
    """
    A = np.asarray(A, dtype=float)
    M, K = A.shape
    empty = ~(A.sum(axis=0) > 0)
    fixed = A <= 0
    while True:
        free_mass = 1.0 - LAMBDA_MIN * fixed.sum(axis=0)
        free_sum = np.where(fixed, 0.0, A).sum(axis=0)
        free_sum[empty] = 1.0
        L = np.where(fixed, LAMBDA_MIN, A * (free_mass / free_sum))
        low = ~fixed & (L < LAMBDA_MIN)
        if not low.any():
            break
        fixed |= low
    L[:, empty] = 1.0 / M
    return L


def lambda_step_discrete(Pi, Gamma) -> np.ndarray:
    """Label frequencies per box, floored at ``LAMBDA_MIN``; empty boxes are uniform."""
    Pi = np.asarray(Pi, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    return _floored_normalize(Pi @ Gamma.T)


def lambda_step_fuzzy(Pi, Gamma, Lambda_prev) -> np.ndarray:
    """One multiplicative (EM) update of ``Lambda`` for the label divergence."""
    Pi = np.asarray(Pi, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    L = np.maximum(np.asarray(Lambda_prev, dtype=float), LAMBDA_MIN)
    P = L @ Gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Pi > 0, Pi / P, 0.0)
    return _floored_normalize(L * (ratio @ Gamma.T))


# ---------------------------------------------------------------------------
# initialization and the outer loop
# ---------------------------------------------------------------------------


def seed_boxes(X, K: int, rng: np.random.Generator, W=None) -> np.ndarray:
    """Indices of ``K`` distinct samples picked by squared-distance weighted seeding."""
    D, T = X.shape
    if K > T:
        raise ValueError(f"more boxes than samples: K={K}, T={T}")
    W = np.full(D, 1.0 / D) if W is None else W
    chosen = [int(rng.integers(T))]
    d2 = weighted_sq_distances(X, X[:, chosen], W)[0]
    taken = np.zeros(T, dtype=bool)
    taken[chosen[0]] = True
    for _ in range(1, K):
        p = np.where(taken, 0.0, d2)
        total = p.sum()
        if not total > 0:
            p = (~taken).astype(float)
            total = p.sum()
        nxt = int(rng.choice(T, p=p / total))
        chosen.append(nxt)
        taken[nxt] = True
        d2 = np.minimum(d2, weighted_sq_distances(X, X[:, [nxt]], W)[0])
    return np.array(chosen)


def init_model(X, Pi, hyper: Hyperparams, restart_seed: int = 0) -> EspaModel:
    """Seeded boxes, uniform feature weights, one assignment and one counting pass."""
    X = np.asarray(X, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    D, T = X.shape
    if hyper.K > T:
        raise ValueError(f"more boxes than samples: K={hyper.K}, T={T}")
    rng = restart_rng(hyper.seed, restart_seed)
    W = np.full(D, 1.0 / D)
    S = X[:, seed_boxes(X, hyper.K, rng, W)].copy()
    Gamma = gamma_step_discrete(X, S, W, None, None, 0.0)
    Lambda = lambda_step_discrete(Pi, Gamma)
    return EspaModel(S=S, Gamma=Gamma, W=W, Lambda=Lambda, hyper=hyper)


def reseed_empty(X, S, W, Gamma) -> np.ndarray:
    """Move the worst-fitted samples into empty boxes (discrete mode)."""
    counts = Gamma.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return Gamma
    Gamma = Gamma.copy()
    assign = np.argmax(Gamma, axis=0)
    resid = weighted_sq_distances(X, S, W)[assign, np.arange(X.shape[1])]
    order = np.argsort(-resid, kind="stable")
    counts = counts.astype(int)
    j = 0
    for k in empty:
        while j < order.size and counts[assign[order[j]]] < 2:
            j += 1
        if j == order.size:
            break
        t = order[j]
        counts[assign[t]] -= 1
        counts[k] += 1
        Gamma[:, t] = 0.0
        Gamma[k, t] = 1.0
        assign[t] = k
        j += 1
    return Gamma


def _trace_objective(X, Pi, S, Gamma, W, Lambda, hyper: Hyperparams) -> float:
    which = "discrete" if hyper.mode == "discrete" else "joint"
    return objective(X, Pi, S, Gamma, W, Lambda, hyper.epsilon_e, hyper.epsilon_CL, which=which)


def _objective_parts(X, Pi, S, Gamma, W, Lambda, hyper: Hyperparams, errors=None):
    """``(objective, fit)``, where ``fit`` leaves out the entropy term.

    The entropy term lies in ``[-epsilon_e log(D) / D, 0]`` and acts as an
    offset of up to that size, so the stopping rule measures decreases
    relative to the data-fit part only.
    """
    if hyper.mode == "discrete":
        errors = feature_errors_discrete(X, S, Gamma) if errors is None else errors
        spatial = float(W @ errors)
        label = kl_term_discrete(Pi, Lambda, Gamma, hyper.epsilon_CL) if hyper.epsilon_CL else 0.0
    else:
        spatial = float(W @ feature_errors(X, S, Gamma))
        label = kl_term(Pi, Lambda, Gamma, hyper.epsilon_CL) if hyper.epsilon_CL else 0.0
    return spatial + entropy_term(W, hyper.epsilon_e) + label, spatial + label


def iterate(X, Pi, model: EspaModel, hyper: Optional[Hyperparams] = None):
    """Run the four-step loop from ``model`` until the stopping rule fires.

    Returns ``(model, trace_values, converged)``.
    """
    hyper = model.hyper if hyper is None else hyper
    S = np.array(model.S)
    Gamma = np.array(model.Gamma)
    W = np.array(model.W)
    Lambda = np.array(model.Lambda)
    eps_cl = hyper.epsilon_CL
    discrete = hyper.mode == "discrete"
    trace = []
    converged = False
    prev, prev_fit = _objective_parts(X, Pi, S, Gamma, W, Lambda, hyper)
    if not math.isfinite(prev):
        raise FloatingPointError("non-finite objective at initialization")

    for _ in range(hyper.max_iter):
        if discrete:
            Gamma = gamma_step_discrete(X, S, W, Lambda, Pi, eps_cl)
            Gamma = reseed_empty(X, S, W, Gamma)
            S = s_step(X, Gamma, "discrete", S)
            errors = feature_errors_discrete(X, S, Gamma)
            W = w_step(errors, hyper.epsilon_e)
            Lambda = lambda_step_discrete(Pi, Gamma)
        else:
            errors = None
            Gamma = gamma_step_fuzzy(X, S, W, Lambda, Pi, eps_cl, Gamma)
            S_new = s_step(X, Gamma, "fuzzy")
            if W @ feature_errors(X, S_new, Gamma) <= W @ feature_errors(X, S, Gamma):
                S = S_new
            W = w_step(feature_errors(X, S, Gamma), hyper.epsilon_e)
            if eps_cl:
                Lambda = lambda_step_fuzzy(Pi, Gamma, Lambda)
        value, fit = _objective_parts(X, Pi, S, Gamma, W, Lambda, hyper, errors)
        if not math.isfinite(value):
            raise FloatingPointError("non-finite objective during iteration")
        trace.append(value)
        if (prev - value) / max(abs(prev_fit), 1e-30) < hyper.tol:
            converged = True
            break
        prev, prev_fit = value, fit

    fitted = EspaModel(S=S, Gamma=Gamma, W=W, Lambda=Lambda, hyper=hyper,
                       loss_trace=trace, class_names=model.class_names)
    return fitted, trace, converged


def fit(X, Pi, hyper: Hyperparams, class_names=()):
    """Best-of-``n_restarts`` eSPA fit.

    Returns ``(EspaModel, FitTrace)``; ties between restarts go to the
    lower restart index.
    """
    X = np.asarray(X, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    if X.ndim != 2 or Pi.ndim != 2 or X.shape[1] != Pi.shape[1]:
        raise DimensionError(f"X {X.shape} and Pi {Pi.shape} disagree on the number of samples")
    if hyper.K > X.shape[1]:
        raise ValueError(f"more boxes than samples: K={hyper.K}, T={X.shape[1]}")

    best = None
    for r in range(hyper.n_restarts):
        start = init_model(X, Pi, hyper, r)
        try:
            model, values, converged = iterate(X, Pi, start, hyper)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            logger.warning("restart %d aborted: %s", r, exc)
            continue
        final = values[-1] if values else _trace_objective(
            X, Pi, model.S, model.Gamma, model.W, model.Lambda, hyper)
        if best is None or final < best[0]:
            best = (final, r, model, values, converged)
    if best is None:
        raise FitError("all restarts produced a non-finite objective")
    _, r, model, values, converged = best
    if class_names:
        model = EspaModel(S=model.S, Gamma=model.Gamma, W=model.W, Lambda=model.Lambda,
                          hyper=hyper, loss_trace=model.loss_trace, class_names=class_names)
    trace = FitTrace(objective=list(values), iterations_run=len(values),
                     converged=converged, restart_index_selected=r)
    return model, trace
