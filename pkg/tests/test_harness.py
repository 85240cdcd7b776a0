import math

import numpy as np
import pytest

from espa import datagen, harness
from espa.core import Hyperparams
from espa.estimator import EspaClassifier
from espa.metrics import auc_macro

FAST = Hyperparams(K=3, epsilon_e=0.1, epsilon_CL=0.1, n_restarts=2)


def small_source(D=8, T=80):
    return harness._Generator("toy1", D, T, 5.0, {})


def test_single_replicate_equals_fit_and_score():
    src = small_source()
    rep = harness.cross_validate(src, FAST, n_replicates=1, master_seed=4)
    seed = harness.derive_seed(4, harness._DATA, 0, 0)
    train, valid = datagen.split(src(seed), 0.75, seed=seed)
    clf = EspaClassifier.from_hyperparams(FAST.replace(seed=harness.derive_seed(4, harness._FIT, 0, 0, 0)))
    clf.fit(np.asarray(train.X).T, train.labels)
    auc = auc_macro(clf.predict_proba(np.asarray(valid.X).T).T, valid.labels)
    assert rep.aucs == [auc]


def test_report_invariants_and_determinism():
    a = harness.cross_validate(small_source(), FAST, n_replicates=4, master_seed=1)
    b = harness.cross_validate(small_source(), FAST, n_replicates=4, master_seed=1)
    assert a.aucs == b.aucs
    assert all(0 <= x <= 1 for x in a.aucs)
    assert min(a.aucs) <= a.mean_auc <= max(a.aucs)
    assert a.std_auc == pytest.approx(np.std(a.aucs))
    c = harness.cross_validate(small_source(), FAST, n_replicates=4, master_seed=2)
    assert c.aucs != a.aucs


def test_worker_count_does_not_change_results():
    a = harness.cross_validate(small_source(), FAST, n_replicates=3, master_seed=5, n_workers=1)
    b = harness.cross_validate(small_source(), FAST, n_replicates=3, master_seed=5, n_workers=2)
    assert a.aucs == b.aucs


def test_fixed_dataset_gets_fresh_splits():
    ds = datagen.toy1(6, 80, seed=0)
    rep = harness.cross_validate(ds, FAST, n_replicates=3, master_seed=0)
    assert len(rep.aucs) == 3


class Flaky:
    """Dataset source that breaks for every other seed."""

    def __init__(self):
        self.inner = small_source()

    def __call__(self, seed):
        if seed % 2:
            raise ValueError("synthetic failure")
        return self.inner(seed)


def test_replicate_failure_recorded():
    rep = harness.cross_validate(Flaky(), FAST, n_replicates=6, master_seed=0)
    assert rep.failures and len(rep.aucs) + len(rep.failures) == 6


def test_all_replicates_failing_raises():
    def bad(seed):
        raise ValueError("nope")
    with pytest.raises(RuntimeError, match="all"):
        harness.cross_validate(bad, FAST, n_replicates=2)


def test_grid_singleton_equals_cross_validate():
    src = small_source()
    g = harness.grid_search(src, [3], [0.1], [0.1], n_replicates=3, master_seed=2, base=FAST)
    cv = harness.cross_validate(src, FAST, n_replicates=3, master_seed=2)
    assert g.report.aucs == cv.aucs and g.best == FAST


def _fake(score_of):
    def evaluate(h):
        reps = [harness.ReplicateResult(0, score_of(h), 0.0)]
        return harness.CvReport(hyper=h, method="espa", replicates=reps)
    return evaluate


def test_paper_grid_size_and_oracle_selection():
    g = harness.grid_search(None, evaluate=_fake(lambda h: 1.0 - abs(h.K - 3) / 100))
    assert len(g.table) == 19 * 6 * 6 == 684
    assert g.best.K == 3
    # every epsilon ties at K=3: larger epsilon_e, then smaller epsilon_CL
    assert g.best.epsilon_e == 0.1 and g.best.epsilon_CL == 0.0


def test_selection_prefers_smaller_k_on_ties():
    g = harness.grid_search(None, K_grid=[5, 2, 3], eps_e_grid=[0.0], eps_CL_grid=[0.0],
                            evaluate=_fake(lambda h: 0.8))
    assert g.best.K == 2


def test_selected_cell_is_maximal():
    g = harness.grid_search(small_source(), [2, 3], [0.0, 0.1], [0.1], n_replicates=2, base=FAST)
    row = next(r for r in g.table if (r["K"], r["epsilon_e"], r["epsilon_CL"]) ==
               (g.best.K, g.best.epsilon_e, g.best.epsilon_CL))
    assert row["mean_auc"] == max(r["mean_auc"] for r in g.table)


def test_empty_grid():
    with pytest.raises(ValueError):
        harness.grid_search(small_source(), [], [0.1], [0.1])


def test_sweep_single_cell_equals_cross_validate():
    rep = harness.barrier_sweep("espa", [8], [80], n_replicates=3, master_seed=6, hyper=FAST)
    cv = harness.cross_validate(small_source(8, 80), FAST, n_replicates=3, master_seed=6)
    assert rep.cells[0].mean_auc == cv.mean_auc
    assert rep.cells[0].n_ok == 3


def test_sweep_methods_and_worker_invariance():
    for method in harness.METHODS:
        a = harness.barrier_sweep(method, [4, 6], [40], n_replicates=2, master_seed=1, hyper=FAST)
        b = harness.barrier_sweep(method, [4, 6], [40], n_replicates=2, master_seed=1, hyper=FAST,
                                  n_workers=2)
        assert [c.mean_auc for c in a.cells] == [c.mean_auc for c in b.cells]
    with pytest.raises(ValueError):
        harness.barrier_sweep("svm", [4], [40])


def _report(surface, method="espa"):
    cells = [harness.SweepCell(D, T, method, auc, 0.0, 0.0, 1) for (D, T), auc in surface.items()]
    return harness.SweepReport(cells=cells, n_replicates=1, master_seed=0)


def test_barrier_fit_recovers_step_line():
    Ds, Ts = [10, 20, 30, 40, 50], list(range(20, 400, 10))
    surface = {(D, T): (1.0 if T >= 5 * D else 0.5) for D in Ds for T in Ts}
    fit = harness.barrier_fit(_report(surface), 0.75)
    assert fit.slope == pytest.approx(5.0, abs=0.5)
    assert fit.r2 > 0.99 and fit.p_value < 1e-3
    assert len(fit.points) == 5


def test_barrier_interpolation():
    surface = {(D, T): a for D in (1, 2, 3) for T, a in ((10, 0.5), (20, 1.0))}
    pts = harness.crossing_points(surface, 0.75)
    assert pts == [(1, 15.0), (2, 15.0), (3, 15.0)]


def test_flat_surface_has_no_barrier():
    surface = {(D, T): 0.5 for D in (10, 20, 30) for T in (40, 80)}
    assert harness.barrier_fit(_report(surface)) == harness.NO_BARRIER


def test_degenerate_regression():
    with pytest.raises(ValueError, match="degenerate"):
        harness.fit_line([(10, 15.0), (10, 17.0), (10, 12.0)], 0.75)


def test_threshold_range():
    with pytest.raises(ValueError):
        harness.barrier_fit(_report({(1, 1): 0.5}), 1.0)
