import numpy as np
import pytest

from espa import datagen
from espa.core import is_one_hot


def _relevant(ds):
    X = np.asarray(ds.X)
    return X[list(ds.relevant_dims)]


def test_toy1_same_marginal_means():
    # both red clouds hold the same number of samples, so only sampling noise
    # moves the class means: 4 standard errors sigma / sqrt(n_class)
    T, sigma = 500, 5.0
    for seed in range(5):
        ds = datagen.toy1(2, T, sigma, seed=seed)
        R = _relevant(ds)
        for m in (0, 1):
            cls = R[:, ds.labels == m]
            assert np.all(np.abs(cls.mean(axis=1)) <= 4 * sigma / np.sqrt(cls.shape[1]))


def test_toy1_noise_variance():
    ds = datagen.toy1(6, 500, 5.0, seed=2)
    noise = np.delete(np.asarray(ds.X), list(ds.relevant_dims), axis=0)
    assert np.all(np.abs(noise.var(axis=1) / 25.0 - 1) <= 0.2)
    assert np.all(np.abs(noise) <= 5.0 * np.sqrt(3) + 1e-12)


def test_toy1_noise_variance_large_t():
    ds = datagen.toy1(12, 200, 3.0, seed=5)
    noise = np.delete(np.asarray(ds.X), list(ds.relevant_dims), axis=0)
    assert np.all(np.abs(noise.var(axis=1) / 9.0 - 1) <= 0.3)


def test_toy1_structure():
    ds = datagen.toy1(10, 101, seed=0, blue_fraction=0.3)
    assert ds.X.shape == (10, 101) and ds.Pi.shape == (2, 101)
    assert is_one_hot(np.asarray(ds.Pi))
    assert int((ds.labels == 0).sum()) == round(0.3 * 101)
    assert len(set(ds.relevant_dims)) == 2
    assert ds.Pi.class_names == ("blue", "red")


def test_toy1_red_clouds_on_diagonal():
    ds = datagen.toy1(2, 4000, 1.0, seed=1, separation=5.0)
    R = _relevant(ds)[:, ds.labels == 1]
    s = R.sum(axis=0) / np.sqrt(2)
    assert np.mean(np.abs(np.abs(s) - 5.0) < 3.0) > 0.99


def test_determinism_and_seed_sensitivity():
    a, b = datagen.toy1(5, 50, seed=4), datagen.toy1(5, 50, seed=4)
    np.testing.assert_array_equal(np.asarray(a.X), np.asarray(b.X))
    assert a.relevant_dims == b.relevant_dims
    c = datagen.toy1(5, 50, seed=5)
    assert not np.array_equal(np.asarray(a.X), np.asarray(c.X))


def test_relevant_positions_vary():
    positions = {datagen.toy1(20, 10, seed=s).relevant_dims for s in range(30)}
    assert len(positions) > 10


def test_toy2_radii():
    ds = datagen.toy2(4, 400, 2.0, seed=3)
    r = np.hypot(*_relevant(ds))
    assert np.all(r[ds.labels == 0] <= 2.0 + 1e-12)
    red = r[ds.labels == 1]
    assert np.all((red >= 4.0 - 1e-12) & (red <= 6.0 + 1e-12))


def test_toy2_not_linearly_separable():
    from sklearn.linear_model import LogisticRegression
    from espa.metrics import auc_binary
    ds = datagen.toy2(2, 2000, 5.0, seed=8)
    R = _relevant(ds).T
    score = LogisticRegression().fit(R, ds.labels).decision_function(R)
    assert auc_binary(score, ds.labels) <= 0.6


@pytest.mark.parametrize("kw", [dict(D=1, T=10), dict(D=3, T=3), dict(D=3, T=10, sigma=0.0),
                                dict(D=3, T=10, blue_fraction=1.0)])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        datagen.toy1(**kw)


def test_split_sizes_and_partition():
    ds = datagen.toy1(3, 100, seed=0)
    tr, va = datagen.split(ds, 0.75, seed=1)
    assert tr.n_samples == 75 and va.n_samples == 25
    X = np.asarray(ds.X)
    both = np.hstack([np.asarray(tr.X), np.asarray(va.X)])
    assert sorted(map(tuple, both.T)) == sorted(map(tuple, X.T))


def test_split_two_per_class():
    ds = datagen.toy1(3, 4, seed=0)
    tr, va = datagen.split(ds, 0.5, seed=0)
    assert sorted(tr.labels) == [0, 1] and sorted(va.labels) == [0, 1]


def test_split_deterministic():
    ds = datagen.toy1(3, 40, seed=0)
    a, b = datagen.split(ds, 0.75, seed=9)[0], datagen.split(ds, 0.75, seed=9)[0]
    np.testing.assert_array_equal(np.asarray(a.X), np.asarray(b.X))


def test_split_stratification_failure():
    ds = datagen.toy1(3, 4, seed=0)
    with pytest.raises(ValueError, match="stratification failed"):
        datagen.split(ds, 0.1, seed=0)
