"""Replicated cross-validation, grid search and the (D, T) barrier sweep.

Every unit of work (cell, replicate, grid point) gets its own seed derived
from the master seed, and results are gathered by key, so the output does
not depend on how many workers ran the tasks or in which order.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import datagen
from .core import Hyperparams
from .estimator import ClusterBayesClassifier, EspaClassifier
from .metrics import auc_macro

logger = logging.getLogger(__name__)

METHODS = ("espa", "kmeans_bayes", "spa_bayes")
NO_BARRIER = "no barrier in grid"

PAPER_K_GRID = tuple(range(2, 21))
PAPER_EPS_GRID = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

_DATA, _FIT = 0, 1


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for the task identified by ``key``."""
    state = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)).generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class ReplicateResult:
    replicate: int
    auc: Optional[float]
    seconds: float
    relevant_weight: Optional[float] = None
    error: Optional[str] = None


@dataclass
class CvReport:
    hyper: Hyperparams
    method: str
    replicates: list
    scaling: str = "minmax"

    @property
    def aucs(self) -> list:
        return [r.auc for r in self.replicates if r.auc is not None]

    @property
    def mean_auc(self) -> float:
        a = self.aucs
        return float(np.mean(a)) if a else math.nan

    @property
    def std_auc(self) -> float:
        a = self.aucs
        return float(np.std(a)) if a else math.nan

    @property
    def mean_seconds(self) -> float:
        return float(np.mean([r.seconds for r in self.replicates]))

    @property
    def failures(self) -> list:
        return [(r.replicate, r.error) for r in self.replicates if r.error is not None]


@dataclass
class SweepCell:
    D: int
    T: int
    method: str
    mean_auc: float
    std_auc: float
    mean_seconds: float
    n_ok: int
    failures: list = field(default_factory=list)


@dataclass
class BarrierFit:
    slope: float
    intercept: float
    r2: float
    p_value: float
    threshold: float
    points: list = field(default_factory=list)


@dataclass
class SweepReport:
    cells: list
    n_replicates: int
    master_seed: int
    hyper: dict = field(default_factory=dict)
    barriers: dict = field(default_factory=dict)

    def methods(self) -> list:
        return sorted({c.method for c in self.cells}, key=lambda m: (METHODS + (m,)).index(m))

    def surface(self, method: str) -> dict:
        return {(c.D, c.T): c.mean_auc for c in self.cells if c.method == method}


# ---------------------------------------------------------------------------
# single replicate
# ---------------------------------------------------------------------------


def make_classifier(method: str, hyper: Hyperparams, seed: int, scaling: str = "minmax"):
    if method == "espa":
        return EspaClassifier.from_hyperparams(hyper.replace(seed=seed), scaling=scaling)
    if method in ("kmeans_bayes", "spa_bayes"):
        return ClusterBayesClassifier(
            K=hyper.K, method="kmeans" if method == "kmeans_bayes" else "spa",
            epsilon_S=hyper.epsilon_S, max_iter=hyper.max_iter, n_restarts=hyper.n_restarts,
            random_state=seed, scaling=scaling)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


Source = Union[datagen.SyntheticDataset, Callable[[int], datagen.SyntheticDataset]]


def _replicate_data(source: Source, master_seed: int, cell: int, replicate: int, train_fraction: float):
    data_seed = derive_seed(master_seed, _DATA, cell, replicate)
    dataset = source(data_seed) if callable(source) else source
    return datagen.split(dataset, train_fraction, seed=data_seed)


def run_replicate(source: Source, hyper: Hyperparams, method: str, train_fraction: float,
                  master_seed: int, cell: int, replicate: int, grid_index: int = 0,
                  scaling: str = "minmax") -> ReplicateResult:
    """Fit on the training part of one replicate and score AUC on the rest."""
    start = time.perf_counter()
    try:
        train, valid = _replicate_data(source, master_seed, cell, replicate, train_fraction)
        clf = make_classifier(method, hyper, derive_seed(master_seed, _FIT, cell, replicate, grid_index),
                              scaling)
        clf.fit(np.asarray(train.X).T, train.labels)
        proba = clf.predict_proba(np.asarray(valid.X).T).T
        labels = np.searchsorted(clf.classes_, valid.labels)
        auc = auc_macro(proba, labels)
        weight = None
        if train.relevant_dims:
            weight = float(clf.feature_weights_[list(train.relevant_dims)].sum())
        return ReplicateResult(replicate, auc, time.perf_counter() - start, weight)
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        logger.warning("replicate %d (cell %d, grid %d) failed: %s", replicate, cell, grid_index, exc)
        return ReplicateResult(replicate, None, time.perf_counter() - start, error=str(exc))


def _run_tasks(tasks: list, n_workers: int) -> list:
    if n_workers <= 1 or len(tasks) <= 1:
        return [fn(*args, **kw) for fn, args, kw in tasks]
    return Parallel(n_jobs=n_workers)(delayed(fn)(*args, **kw) for fn, args, kw in tasks)


# ---------------------------------------------------------------------------
# cross-validation and grid search
# ---------------------------------------------------------------------------


def cross_validate(source: Source, hyper: Hyperparams, n_replicates: int = 20,
                   train_fraction: float = 0.75, master_seed: int = 0, method: str = "espa",
                   n_workers: int = 1, scaling: str = "minmax", cell: int = 0) -> CvReport:
    """Mean validation AUC over ``n_replicates`` random train/validation splits.

    ``source`` is either a fixed dataset (fresh split per replicate) or a
    callable ``seed -> dataset`` (fresh data per replicate).
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    tasks = [(run_replicate, (source, hyper, method, train_fraction, master_seed, cell, r),
              {"scaling": scaling}) for r in range(n_replicates)]
    results = _run_tasks(tasks, n_workers)
    report = CvReport(hyper=hyper, method=method, replicates=sorted(results, key=lambda r: r.replicate),
                      scaling=scaling)
    if not report.aucs:
        raise RuntimeError(f"all {n_replicates} replicates failed: {report.failures[0][1]}")
    return report


@dataclass
class GridResult:
    best: Hyperparams
    report: CvReport
    table: list

    def best_row(self) -> dict:
        return next(row for row in self.table if row["index"] == self.table_index)

    @property
    def table_index(self) -> int:
        for row in self.table:
            if (row["K"], row["epsilon_e"], row["epsilon_CL"]) == (
                    self.best.K, self.best.epsilon_e, self.best.epsilon_CL):
                return row["index"]
        raise LookupError("selected cell missing from table")


def _selection_key(row):
    # highest AUC, then smaller K, larger epsilon_e, smaller epsilon_CL
    auc = row["mean_auc"]
    return (-(auc if math.isfinite(auc) else -math.inf), row["K"], -row["epsilon_e"],
            row["epsilon_CL"], row["index"])


def grid_search(source: Source, K_grid: Sequence[int] = PAPER_K_GRID,
                eps_e_grid: Sequence[float] = PAPER_EPS_GRID,
                eps_CL_grid: Sequence[float] = PAPER_EPS_GRID, n_replicates: int = 20,
                master_seed: int = 0, base: Optional[Hyperparams] = None,
                train_fraction: float = 0.75, n_workers: int = 1, scaling: str = "minmax",
                evaluate: Optional[Callable[[Hyperparams], CvReport]] = None) -> GridResult:
    """Cross-validate every ``(K, epsilon_e, epsilon_CL)`` combination and keep the best.

    All combinations see the same replicate datasets and splits. ``evaluate``
    replaces the cross-validation of a single combination (used in tests).
    """
    if not (K_grid and eps_e_grid and eps_CL_grid):
        raise ValueError("grids must be non-empty")
    base = Hyperparams() if base is None else base
    combos = [base.replace(K=int(K), epsilon_e=float(e), epsilon_CL=float(c))
              for K, e, c in itertools.product(K_grid, eps_e_grid, eps_CL_grid)]

    if evaluate is not None:
        reports = [evaluate(h) for h in combos]
    else:
        tasks = [(run_replicate, (source, h, "espa", train_fraction, master_seed, 0, r),
                  {"grid_index": g, "scaling": scaling})
                 for g, h in enumerate(combos) for r in range(n_replicates)]
        results = _run_tasks(tasks, n_workers)
        reports = []
        for g, h in enumerate(combos):
            reps = sorted(results[g * n_replicates:(g + 1) * n_replicates], key=lambda r: r.replicate)
            reports.append(CvReport(hyper=h, method="espa", replicates=reps, scaling=scaling))

    table = []
    for g, (h, rep) in enumerate(zip(combos, reports)):
        table.append({"index": g, "K": h.K, "epsilon_e": h.epsilon_e, "epsilon_CL": h.epsilon_CL,
                      "mean_auc": rep.mean_auc, "std_auc": rep.std_auc,
                      "n_ok": len(rep.aucs), "mean_seconds": rep.mean_seconds})
    valid = [row for row in table if row["n_ok"] > 0]
    if not valid:
        raise RuntimeError("every grid cell failed")
    chosen = min(valid, key=_selection_key)
    return GridResult(best=combos[chosen["index"]], report=reports[chosen["index"]], table=table)


# ---------------------------------------------------------------------------
# (D, T) sweep and barrier line
# ---------------------------------------------------------------------------


def barrier_sweep(method: str, D_grid: Sequence[int], T_grid: Sequence[int], n_replicates: int = 20,
                  master_seed: int = 0, hyper: Optional[Hyperparams] = None, generator: str = "toy1",
                  sigma: float = 5.0, train_fraction: float = 0.75, n_workers: int = 1,
                  scaling: str = "minmax", generator_kwargs: Optional[dict] = None) -> SweepReport:
    """Cross-validated AUC on fresh synthetic data for every ``(D, T)`` cell."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if not D_grid or not T_grid or n_replicates < 1:
        raise ValueError("grids must be non-empty and n_replicates >= 1")
    hyper = Hyperparams() if hyper is None else hyper
    gen_kw = dict(generator_kwargs or {})
    cells = [(int(D), int(T)) for D in D_grid for T in T_grid]
    tasks = []
    for c, (D, T) in enumerate(cells):
        source = _Generator(generator, D, T, sigma, gen_kw)
        for r in range(n_replicates):
            tasks.append((run_replicate, (source, hyper, method, train_fraction, master_seed, c, r),
                          {"scaling": scaling}))
    results = _run_tasks(tasks, n_workers)
    out = []
    for c, (D, T) in enumerate(cells):
        reps = sorted(results[c * n_replicates:(c + 1) * n_replicates], key=lambda r: r.replicate)
        aucs = [r.auc for r in reps if r.auc is not None]
        out.append(SweepCell(
            D=D, T=T, method=method,
            mean_auc=float(np.mean(aucs)) if aucs else math.nan,
            std_auc=float(np.std(aucs)) if aucs else math.nan,
            mean_seconds=float(np.mean([r.seconds for r in reps])),
            n_ok=len(aucs),
            failures=[(r.replicate, r.error) for r in reps if r.error is not None]))
    return SweepReport(cells=out, n_replicates=n_replicates, master_seed=master_seed,
                       hyper={method: hyper})


class _Generator:
    """Picklable ``seed -> dataset`` closure for worker processes."""

    def __init__(self, name, D, T, sigma, kwargs):
        self.name, self.D, self.T, self.sigma, self.kwargs = name, D, T, sigma, kwargs

    def __call__(self, seed):
        if self.name == "toy1":
            return datagen.toy1(self.D, self.T, self.sigma, seed=seed, **self.kwargs)
        if self.name == "toy2":
            return datagen.toy2(self.D, self.T, self.sigma, seed=seed, **self.kwargs)
        raise ValueError(f"unknown generator {self.name!r}")


def merge_reports(reports: Sequence[SweepReport]) -> SweepReport:
    cells = [c for r in reports for c in r.cells]
    hyper = {}
    for r in reports:
        hyper.update(r.hyper)
    first = reports[0]
    return SweepReport(cells=cells, n_replicates=first.n_replicates, master_seed=first.master_seed,
                       hyper=hyper)


def crossing_points(surface: dict, threshold: float) -> list:
    """``(D, T*)`` pairs where the mean AUC first rises through ``threshold`` along ``T``.

    ``T*`` is linearly interpolated between the two grid cells that bracket
    the crossing. Rows already above the threshold at the smallest ``T``, or
    never reaching it, have no crossing.
    """
    points = []
    for D in sorted({d for d, _ in surface}):
        row = sorted((T, a) for (d, T), a in surface.items() if d == D)
        for (t0, a0), (t1, a1) in zip(row, row[1:]):
            if a0 < threshold <= a1:
                points.append((D, t0 + (threshold - a0) * (t1 - t0) / (a1 - a0)))
                break
    return points


def barrier_fit(report: SweepReport, auc_threshold: float = 0.75,
                method: Optional[str] = None) -> Union[BarrierFit, str]:
    """Least-squares line ``T* = slope * D + intercept`` through the AUC crossings.

    Returns :data:`NO_BARRIER` when fewer than three crossings exist.
    """
    if not 0.5 < auc_threshold < 1.0:
        raise ValueError(f"threshold must lie in (0.5, 1), got {auc_threshold}")
    methods = report.methods()
    method = methods[0] if method is None else method
    points = crossing_points(report.surface(method), auc_threshold)
    if len(points) < 3:
        return NO_BARRIER
    return fit_line(points, auc_threshold)


def fit_line(points, threshold: float) -> BarrierFit:
    """Ordinary least squares of ``T*`` on ``D`` with the slope's t-test p-value."""
    D = np.array([p[0] for p in points], dtype=float)
    T = np.array([p[1] for p in points], dtype=float)
    if D.size < 2 or np.all(D == D[0]):
        raise ValueError("degenerate regression: all crossings at the same D")
    res = stats.linregress(D, T)
    return BarrierFit(slope=float(res.slope), intercept=float(res.intercept), r2=float(res.rvalue ** 2),
                      p_value=float(res.pvalue), threshold=threshold, points=list(points))
