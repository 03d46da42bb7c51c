"""Deterministic toy classification datasets, CSV I/O and minibatching.

Randomness comes from numpy's ``Generator(PCG64)`` seeded explicitly, so a
given seed reproduces a dataset bit for bit with this implementation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text, csv_text


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    k: int
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if self.labels.shape != (n,):
            raise DataError("need exactly one label per feature row")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise DataError(f"labels must lie in [0, {self.k})")
        both = np.concatenate([self.train_idx, self.test_idx])
        if both.size != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise DataError("train and test indices must partition the rows")
        for arr in (self.features, self.labels, self.train_idx, self.test_idx):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def x_train(self):
        return self.features[self.train_idx]

    @property
    def y_train(self):
        return self.labels[self.train_idx]

    @property
    def x_test(self):
        return self.features[self.test_idx]

    @property
    def y_test(self):
        return self.labels[self.test_idx]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.k == other.k
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.train_idx, other.train_idx)
                and np.array_equal(self.test_idx, other.test_idx))


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle into sorted train/test index arrays."""
    if not 0 <= test_fraction < 1:
        raise DataError("test_fraction must lie in [0, 1)")
    perm = _rng([seed, 0x5EED]).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _finish(x, y, k, test_fraction, seed):
    train, test = split(len(y), test_fraction, seed)
    return Dataset(np.ascontiguousarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64), k, train, test)


def two_moons(n: int = 2000, noise_sigma: float = 0.2, seed: int = 0, test_fraction: float = 0.2) -> Dataset:
    """Two interleaved half circles of radius 1, ``n/2`` points each.

    Class 0 lies on ``(cos a, sin a)``, class 1 on ``(1 - cos a, 0.5 - sin a)``
    for ``a`` evenly spaced over ``[0, pi]``.
    """
    if n < 2 or n % 2:
        raise DataError("two_moons needs an even n >= 2")
    if noise_sigma < 0:
        raise DataError("noise_sigma must be non-negative")
    half = n // 2
    a = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(a), np.sin(a)])
    lower = np.column_stack([1.0 - np.cos(a), 0.5 - np.sin(a)])
    x = np.vstack([upper, lower])
    y = np.repeat([0, 1], half)
    if noise_sigma > 0:
        x = x + _rng(seed).normal(0.0, noise_sigma, size=x.shape)
    return _finish(x, y, 2, test_fraction, seed)


def gaussian_blobs(n: int = 600, k: int = 3, separation: float = 5.0, seed: int = 0,
                   noise_sigma: float = 1.0, dim: int = 2, test_fraction: float = 0.2) -> Dataset:
    """``k`` isotropic clusters with centres evenly spaced on a circle of radius ``separation``."""
    if k < 2:
        raise DataError("gaussian_blobs needs k >= 2")
    if n % k:
        raise DataError(f"n={n} is not divisible by k={k}")
    if dim < 2:
        raise DataError("dim must be at least 2")
    centres = blob_centres(k, separation, dim)
    y = np.repeat(np.arange(k), n // k)
    x = centres[y] + _rng(seed).normal(0.0, noise_sigma, size=(n, dim))
    return _finish(x, y, k, test_fraction, seed)


def blob_centres(k: int, separation: float, dim: int = 2) -> np.ndarray:
    ang = 2 * np.pi * np.arange(k) / k
    c = np.zeros((k, dim))
    c[:, 0] = separation * np.cos(ang)
    c[:, 1] = separation * np.sin(ang)
    return c


def spirals(n: int = 600, turns: float = 1.5, noise_sigma: float = 0.0, seed: int = 0,
            k: int = 2, test_fraction: float = 0.2) -> Dataset:
    """``k`` interleaved Archimedean spiral arms.

    Arm ``j`` point ``i`` sits at radius ``r = (i + 1) / m`` and angle
    ``2*pi*turns*r + 2*pi*j/k`` where ``m = n / k``.
    """
    if k < 2:
        raise DataError("spirals needs k >= 2")
    if n % k:
        raise DataError(f"n={n} is not divisible by k={k}")
    m = n // k
    r = np.tile((np.arange(m) + 1) / m, k)
    y = np.repeat(np.arange(k), m)
    theta = 2 * np.pi * turns * r + 2 * np.pi * y / k
    x = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    if noise_sigma > 0:
        x = x + _rng(seed).normal(0.0, noise_sigma, size=x.shape)
    return _finish(x, y, k, test_fraction, seed)


GENERATORS = {"two_moons": two_moons, "gaussian_blobs": gaussian_blobs, "spirals": spirals}


def load_csv(path, label_column: str | int = -1, test_fraction: float = 0.2, seed: int = 0) -> Dataset:
    """Read a headed, comma-separated file; labels are re-indexed densely.

    ``label_column`` is a header name or a column position. Rows keep their
    file order; distinct labels are mapped to ``0..k-1`` in ascending order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    if isinstance(label_column, str):
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r}")
        col = header.index(label_column)
    else:
        col = label_column % len(header)
    feats, raw = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            feats.append([float(v) for j, v in enumerate(row) if j != col])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
        try:
            lab = float(row[col])
        except ValueError:
            raise DataError(f"{path}:{lineno}: label {row[col]!r} is not an integer") from None
        if not lab.is_integer():
            raise DataError(f"{path}:{lineno}: label {row[col]!r} is not an integer")
        raw.append(int(lab))
    values, labels = np.unique(np.asarray(raw), return_inverse=True)
    x = np.asarray(feats, dtype=np.float64).reshape(len(body), len(header) - 1)
    return _finish(x, labels.reshape(-1), len(values), test_fraction, seed)


def write_csv(dataset: Dataset, path, label_name: str = "label") -> None:
    """Inverse of :func:`load_csv` (label in the last column)."""
    header = [f"x{j}" for j in range(dataset.d)] + [label_name]
    rows = ([*(float(v) for v in row), int(lab)] for row, lab in zip(dataset.features, dataset.labels))
    atomic_write_text(path, csv_text(header, rows))


def minibatches(dataset: Dataset, batchsize: int, seed: int, epoch: int) -> list[np.ndarray]:
    """One epoch of training-row index batches, shuffled by ``(seed, epoch)``.

    Gives ``ceil(n_train / batchsize)`` batches; the last may be short. A
    batch as large as the training set returns it whole, in order.
    """
    n = dataset.train_idx.shape[0]
    if not 1 <= batchsize <= n:
        raise DataError(f"batchsize must lie in [1, {n}], got {batchsize}")
    if batchsize == n:
        return [dataset.train_idx.copy()]
    order = dataset.train_idx[_rng([seed, epoch]).permutation(n)]
    return [order[i: i + batchsize] for i in range(0, n, batchsize)]


def batches_per_epoch(n_train: int, batchsize: int) -> int:
    return math.ceil(n_train / batchsize)
