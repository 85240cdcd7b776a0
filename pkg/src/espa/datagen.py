"""Synthetic two-class problems with two informative features.

All randomness comes from numpy's PCG64 generator. Each purpose (class
sizes, informative coordinates, noise, feature and sample shuffles) draws
from its own substream ``SeedSequence(seed, spawn_key=(purpose,))`` so that
changing one part of a generator does not perturb the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureMatrix, LabelMatrix

CLASS_NAMES = ("blue", "red")

_SIGNAL, _NOISE, _FEATURE_PERM, _SAMPLE_PERM, _SPLIT = range(5)


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class SyntheticDataset:
    X: FeatureMatrix
    Pi: LabelMatrix
    relevant_dims: tuple
    sigma: float
    seed: int

    @property
    def labels(self) -> np.ndarray:
        return self.Pi.hard_labels()

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]


def _check(D, T, sigma):
    if int(D) != D or D < 2:
        raise ValueError(f"D must be an integer >= 2, got {D}")
    if int(T) != T or T < 4:
        raise ValueError(f"T must be an integer >= 4, got {T}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


def _assemble(signal, labels, D, sigma, seed) -> SyntheticDataset:
    T = labels.size
    half_width = sigma * np.sqrt(3.0)
    noise = substream(seed, _NOISE).uniform(-half_width, half_width, size=(D - 2, T))
    X = np.vstack([signal, noise])
    feat = substream(seed, _FEATURE_PERM).permutation(D)
    # row i of the output holds original feature feat[i]
    X = X[feat]
    relevant = tuple(int(np.flatnonzero(feat == j)[0]) for j in (0, 1))
    order = substream(seed, _SAMPLE_PERM).permutation(T)
    X = X[:, order]
    labels = labels[order]
    names = tuple(f"f{i}" for i in range(D))
    return SyntheticDataset(
        X=FeatureMatrix(X, names),
        Pi=LabelMatrix.from_labels(labels, 2, CLASS_NAMES),
        relevant_dims=relevant,
        sigma=float(sigma),
        seed=int(seed),
    )


def _class_sizes(T, blue_fraction):
    n_blue = int(round(blue_fraction * T))
    if n_blue < 1 or n_blue > T - 2:
        raise ValueError(f"blue_fraction={blue_fraction} leaves a class empty for T={T}")
    return n_blue, T - n_blue


def toy1(
    D: int,
    T: int,
    sigma: float = 5.0,
    blue_fraction: float = 0.5,
    seed: int = 0,
    separation: float = 5.0,
) -> SyntheticDataset:
    """Gaussian sandwich: a blue cloud at the origin between two red clouds.

    The red clouds sit at ``+-separation * sigma * (1, 1)/sqrt(2)`` so both
    classes have zero marginal mean in each informative feature. The
    remaining ``D - 2`` features are uniform with variance ``sigma**2`` for
    every sample.

    At ``separation=3`` the clouds overlap enough that three boxes cap the
    attainable AUC near 0.91; the default of 5 leaves the classes separable
    by three boxes while keeping the noise features at the same variance.
    """
    _check(D, T, sigma)
    if not 0 < blue_fraction < 1:
        raise ValueError(f"blue_fraction must lie in (0, 1), got {blue_fraction}")
    n_blue, n_red = _class_sizes(T, blue_fraction)
    n_red_a = n_red // 2
    rng = substream(seed, _SIGNAL)
    u = np.array([1.0, 1.0]) / np.sqrt(2.0)
    centers = np.vstack([
        np.zeros((n_blue, 2)),
        np.tile(separation * sigma * u, (n_red_a, 1)),
        np.tile(-separation * sigma * u, (n_red - n_red_a, 1)),
    ])
    signal = (centers + sigma * rng.standard_normal((T, 2))).T
    labels = np.r_[np.zeros(n_blue, dtype=int), np.ones(n_red, dtype=int)]
    return _assemble(signal, labels, D, sigma, seed)


def toy2(D: int, T: int, sigma: float = 5.0, seed: int = 0, blue_fraction: float = 0.5) -> SyntheticDataset:
    """Disk inside an annulus: blue uniform on radius ``sigma``, red on ``(2 sigma, 3 sigma)``."""
    _check(D, T, sigma)
    n_blue, n_red = _class_sizes(T, blue_fraction)
    rng = substream(seed, _SIGNAL)
    r_blue = sigma * np.sqrt(rng.uniform(0.0, 1.0, n_blue))
    r_red = sigma * np.sqrt(rng.uniform(4.0, 9.0, n_red))
    radius = np.r_[r_blue, r_red]
    angle = rng.uniform(0.0, 2.0 * np.pi, T)
    signal = np.vstack([radius * np.cos(angle), radius * np.sin(angle)])
    labels = np.r_[np.zeros(n_blue, dtype=int), np.ones(n_red, dtype=int)]
    return _assemble(signal, labels, D, sigma, seed)


def generate(model: str, D: int, T: int, sigma: float = 5.0, seed: int = 0, blue_fraction: float = 0.5):
    if model == "toy1":
        return toy1(D, T, sigma, blue_fraction, seed)
    if model == "toy2":
        return toy2(D, T, sigma, seed, blue_fraction)
    raise ValueError(f"unknown generator {model!r}")


def _stratified_counts(sizes, fraction):
    """Per-class training counts summing to ``round(fraction * T)`` (largest remainder)."""
    quota = fraction * sizes
    counts = np.floor(quota).astype(int)
    total = int(np.floor(fraction * sizes.sum() + 0.5))
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[: max(total - counts.sum(), 0)]] += 1
    return counts


def split(dataset: SyntheticDataset, train_fraction: float = 0.75, seed: int = 0):
    """Stratified random split of the sample columns into (train, validation)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = dataset.labels
    rng = substream(seed, _SPLIT)
    n_train = _stratified_counts(np.bincount(labels, minlength=dataset.Pi.shape[0]), train_fraction)
    train = []
    for m, n in enumerate(n_train):
        idx = np.flatnonzero(labels == m)
        if idx.size and (n == 0 or n == idx.size):
            raise ValueError(f"stratification failed: class {dataset.Pi.class_names[m]!r} "
                             f"with {idx.size} samples cannot be split at {train_fraction}")
        train.extend(rng.permutation(idx)[:n].tolist())
    train_idx = np.sort(np.array(train, dtype=int))
    mask = np.zeros(labels.size, dtype=bool)
    mask[train_idx] = True
    val_idx = np.flatnonzero(~mask)
    return subset(dataset, train_idx), subset(dataset, val_idx)


def subset(dataset: SyntheticDataset, idx) -> SyntheticDataset:
    X = dataset.X
    Pi = dataset.Pi
    return SyntheticDataset(
        X=FeatureMatrix(X.values[:, idx], X.feature_names),
        Pi=LabelMatrix(Pi.values[:, idx], Pi.class_names),
        relevant_dims=dataset.relevant_dims,
        sigma=dataset.sigma,
        seed=dataset.seed,
    )
