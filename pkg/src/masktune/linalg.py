"""Dense float64 linear algebra, counter-based seeded RNG, and finite differences.

All matrices are 2-D float64 numpy arrays with row-major semantics. Operations
are pure functions; nothing here holds mutable shared state, so concurrent
callers are safe. Randomness goes through :class:`Rng`, a thin wrapper over
numpy's Philox counter-based generator, so identical seeds reproduce identical
streams on every platform.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError

Matrix = np.ndarray


def as_matrix(data) -> Matrix:
    """Coerce to a finite 2-D float64 array, validating shape and values."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix contains non-finite entries")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit inner-dimension check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul requires 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def frobenius_sq(a: Matrix) -> float:
    """Sum of squared entries."""
    return float(np.sum(a * a))


def elementwise_mul(a: Matrix, b: Matrix) -> Matrix:
    """Hadamard product of equal-shaped matrices."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def finite_diff_grad(f: Callable[[Matrix], float], at: Matrix, h: float) -> Matrix:
    """Central-difference gradient of a scalar function, entry by entry.

    Test oracle only: O(rows*cols) evaluations of ``f``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    grad = np.zeros_like(at, dtype=np.float64)
    for idx in np.ndindex(at.shape):
        xp = at.copy()
        xp[idx] += h
        xm = at.copy()
        xm[idx] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value at entry {idx}")
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


class Rng:
    """Deterministic random stream keyed by (seed, spawn path).

    Backed by numpy's Philox counter-based bit generator: the same seed and
    spawn path replay the exact same draws regardless of platform or of what
    sibling streams were consumed. ``child(tag)`` derives an independent
    stream, which lets callers give each consumer (init, shuffle, ...) its
    own stream without draw-order coupling.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, tag: int) -> "Rng":
        """Derive an independent deterministic sub-stream."""
        return Rng(self.seed, self._spawn_key + (int(tag),))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)
