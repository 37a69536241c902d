"""Synthetic Gaussian transfer tasks, subset partitioning, and subset selection.

Tasks are pairs of classification datasets: a source built from unit-norm
random class means, and a target whose means are a rotated and offset copy of
the source means. Everything is deterministic per seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .linalg import Rng
from .losses import scl_loss
from .model import ModelParams, forward


@dataclass
class Dataset:
    x: np.ndarray  # (samples, dim)
    y: np.ndarray  # (samples,) int labels
    num_classes: int

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise InputError("x and y lengths differ")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise InputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.y)

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes)


@dataclass(frozen=True)
class ShiftConfig:
    rotation_seed: int
    magnitude: float


@dataclass
class TaskPair:
    source: Dataset
    target_train: Dataset
    target_test: Dataset
    shift: ShiftConfig

    @property
    def dim(self) -> int:
        return self.source.x.shape[1]


def _unit_rows(rng: Rng, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _rotation(dim: int, shift: ShiftConfig) -> np.ndarray:
    """Orthogonal matrix via the Cayley transform of a scaled skew matrix."""
    rng = Rng(shift.rotation_seed)
    b = rng.standard_normal((dim, dim))
    skew = 0.5 * shift.magnitude * (b - b.T) / dim
    eye = np.eye(dim)
    return np.linalg.solve(eye - skew, eye + skew)


def _sample(rng: Rng, means: np.ndarray, per_class: int, sigma: float) -> Dataset:
    classes, dim = means.shape
    y = np.repeat(np.arange(classes), per_class)
    noise = rng.standard_normal((len(y), dim))
    x = means[y] + sigma * noise
    return Dataset(x, y, classes)


def gen_task(dim: int, classes: int, per_class: int, noise_sigma: float,
             shift: ShiftConfig, seed: int) -> TaskPair:
    """Gaussian class clusters; target means are a rotated + offset copy of source means."""
    if classes < 2 or per_class < 2:
        raise ConfigError("need at least 2 classes and 2 samples per class")
    if dim < 1 or noise_sigma < 0:
        raise ConfigError("dim must be >= 1 and noise_sigma >= 0")
    rng = Rng(seed)
    source_means = _unit_rows(rng.child(0), classes, dim)
    if shift.magnitude == 0.0:
        target_means = source_means.copy()
    else:
        offset_rng = Rng(shift.rotation_seed).child(1)
        target_means = (source_means @ _rotation(dim, shift).T
                        + shift.magnitude * _unit_rows(offset_rng, classes, dim))
    source = _sample(rng.child(1), source_means, per_class, noise_sigma)
    target_train = _sample(rng.child(2), target_means, per_class, noise_sigma)
    target_test = _sample(rng.child(3), target_means, per_class, noise_sigma)
    return TaskPair(source, target_train, target_test, shift)


def partition_subsets(data: Dataset, n: int, seed: int | Rng) -> list[Dataset]:
    """Seeded random split into n parts with sizes differing by at most one."""
    if not 1 <= n <= len(data):
        raise ConfigError(f"n={n} out of range for {len(data)} samples")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    order = rng.permutation(len(data))
    return [data.take(chunk) for chunk in np.array_split(order, n)]


def select_mask_subset(pre: ModelParams, subsets: list[Dataset],
                       tau: float) -> tuple[int, Dataset]:
    """Pick the subset whose per-sample contrastive loss at the given weights
    is minimal; ties go to the lowest index. No parameters are updated."""
    losses = []
    for s in subsets:
        if len(s) == 0:
            raise ConfigError("subsets must be non-empty")
        _, features, _ = forward(pre, s.x)
        loss, _ = scl_loss(features, s.y, tau)
        losses.append(loss / len(s))
    idx = int(np.argmin(losses))
    return idx, subsets[idx]


def save_dataset_csv(data: Dataset, path: str | Path) -> None:
    dim = data.x.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{i}" for i in range(dim)])
        for label, row in zip(data.y, data.x):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_dataset_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "y":
            raise InputError(f"{path}: expected header starting with 'y'")
        rows = list(reader)
    y = np.array([int(r[0]) for r in rows], dtype=np.int64)
    x = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    if num_classes is None:
        num_classes = int(y.max()) + 1 if len(y) else 0
    return Dataset(x, y, num_classes)
