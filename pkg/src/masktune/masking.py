"""Selection scores, mask construction, objective accounting, and storage costs.

A mask decides which weight entries train. Row and column masks store only
sorted index lists; the per-neuron sparse variant stores one index list per
row; dense masks store the full bit matrix; ``full`` marks an entirely
trainable layer (canonical form for the head) and costs zero storage.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import frobenius_sq
from .losses import scl_loss
from .model import ModelParams, backward, forward

VARIANTS = ("row", "col", "sparse", "dense", "full")


def _check_indices(indices, bound: int, what: str) -> tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ConfigError(f"{what} indices must be strictly increasing: {idx}")
    if idx and (idx[0] < 0 or idx[-1] >= bound):
        raise ConfigError(f"{what} indices out of bounds [0, {bound}): {idx}")
    return idx


@dataclass(frozen=True)
class LayerMask:
    """Per-layer selection of trainable weight entries.

    ``indices`` is a sorted int tuple for row/col, a tuple of per-row sorted
    int tuples for sparse, a 0/1 matrix for dense, and None for full.
    """
    variant: str
    shape: tuple[int, int]
    indices: object = None

    def __post_init__(self):
        rows, cols = self.shape
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown mask variant {self.variant!r}")
        if self.variant == "row":
            object.__setattr__(self, "indices", _check_indices(self.indices, rows, "row"))
        elif self.variant == "col":
            object.__setattr__(self, "indices", _check_indices(self.indices, cols, "col"))
        elif self.variant == "sparse":
            if len(self.indices) != rows:
                raise ConfigError(f"sparse mask needs {rows} per-row lists")
            fixed = tuple(_check_indices(r, cols, f"sparse row {i}")
                          for i, r in enumerate(self.indices))
            object.__setattr__(self, "indices", fixed)
        elif self.variant == "dense":
            bits = np.asarray(self.indices)
            if bits.shape != self.shape:
                raise ShapeError(f"dense mask shape {bits.shape} != layer shape {self.shape}")
            if not np.all((bits == 0) | (bits == 1)):
                raise ConfigError("dense mask must be 0/1")
            object.__setattr__(self, "indices", bits.astype(np.float64))
        elif self.indices is not None:
            raise ConfigError("full mask carries no indices")

    def to_dense(self) -> np.ndarray:
        rows, cols = self.shape
        if self.variant == "full":
            return np.ones(self.shape)
        if self.variant == "dense":
            return self.indices.copy()
        m = np.zeros(self.shape)
        if self.variant == "row":
            m[list(self.indices), :] = 1.0
        elif self.variant == "col":
            m[:, list(self.indices)] = 1.0
        else:
            for i, cols_i in enumerate(self.indices):
                m[i, list(cols_i)] = 1.0
        return m

    def bias_mask(self) -> np.ndarray:
        """0/1 trainability of each output neuron's bias.

        A bias trains when its row holds selected weights; column masks leave
        all biases frozen (a column targets no single output neuron).
        """
        rows, _ = self.shape
        if self.variant == "full":
            return np.ones(rows)
        if self.variant == "col":
            return np.zeros(rows)
        if self.variant == "row":
            b = np.zeros(rows)
            b[list(self.indices)] = 1.0
            return b
        return (self.to_dense().sum(axis=1) > 0).astype(np.float64)

    def storage_bits(self) -> int:
        rows, cols = self.shape
        if self.variant == "full":
            return 0
        if self.variant == "dense":
            return rows * cols
        if self.variant == "row":
            return len(self.indices) * math.ceil(math.log2(rows))
        if self.variant == "col":
            return len(self.indices) * math.ceil(math.log2(cols))
        per_row = math.ceil(math.log2(cols))
        return sum(len(r) for r in self.indices) * per_row


def full_mask(shape: tuple[int, int]) -> LayerMask:
    return LayerMask("full", shape)


def to_dense(mask: LayerMask) -> np.ndarray:
    return mask.to_dense()


def storage_bits(mask: LayerMask) -> int:
    return mask.storage_bits()


def row_scores(h: np.ndarray) -> np.ndarray:
    """Per-row sum of squared entries: the selection statistic."""
    return np.sum(h * h, axis=1)


def col_scores(h: np.ndarray) -> np.ndarray:
    """Per-column sum of squared entries."""
    return np.sum(h * h, axis=0)


def topk_indices(scores: np.ndarray, k: int) -> tuple[int, ...]:
    """Indices of the k largest scores, ties broken by lowest index, sorted."""
    scores = np.asarray(scores)
    if not 1 <= k <= len(scores):
        raise ConfigError(f"k={k} out of range for {len(scores)} scores")
    order = np.argsort(-scores, kind="stable")
    return tuple(sorted(int(i) for i in order[:k]))


def build_mask(h: np.ndarray, k: int, variant: str) -> LayerMask:
    """Mask from a gradient matrix: top-k rows, columns, or per-row entries."""
    rows, cols = h.shape
    if variant == "row":
        return LayerMask("row", (rows, cols), topk_indices(row_scores(h), k))
    if variant == "col":
        return LayerMask("col", (rows, cols), topk_indices(col_scores(h), k))
    if variant == "sparse":
        per_row = tuple(topk_indices(np.abs(h[i]), k) for i in range(rows))
        return LayerMask("sparse", (rows, cols), per_row)
    raise ConfigError(f"build_mask supports row/col/sparse, got {variant!r}")


def mask_objective(h: np.ndarray, mask: LayerMask) -> float:
    """Squared norm of the gradient energy the mask discards."""
    if h.shape != mask.shape:
        raise ShapeError(f"gradient shape {h.shape} != mask shape {mask.shape}")
    return frobenius_sq(h - h * mask.to_dense())


def retained_energy(h: np.ndarray, mask: LayerMask) -> float:
    """Squared norm of the kept gradient entries; complements mask_objective."""
    if h.shape != mask.shape:
        raise ShapeError(f"gradient shape {h.shape} != mask shape {mask.shape}")
    kept = h * mask.to_dense()
    return float(np.sum(kept * kept))


def brute_force_best_rows(h: np.ndarray, k: int) -> tuple[int, ...]:
    """Exhaustive row-subset minimizer of mask_objective; oracle only.

    Enumerates in lexicographic order and keeps the first optimum.
    """
    rows = h.shape[0]
    if rows > 20:
        raise ConfigError(f"enumeration guard: {rows} rows > 20")
    if not 1 <= k <= rows:
        raise ConfigError(f"k={k} out of range for {rows} rows")
    best, best_obj = None, np.inf
    for combo in itertools.combinations(range(rows), k):
        obj = mask_objective(h, LayerMask("row", h.shape, combo))
        if obj < best_obj:
            best, best_obj = combo, obj
    return best


@dataclass(frozen=True)
class GradientMaskSet:
    """One LayerMask per model layer; the head layer is always full."""
    layers: tuple[LayerMask, ...]

    @staticmethod
    def all_full(model: ModelParams) -> "GradientMaskSet":
        return GradientMaskSet(tuple(full_mask(l.weight.shape) for l in model.layers))

    @staticmethod
    def head_only(model: ModelParams) -> "GradientMaskSet":
        """Linear-probe masks: nothing trainable except the head."""
        masks = [LayerMask("row", l.weight.shape, ()) for l in model.layers[:-1]]
        masks.append(full_mask(model.layers[-1].weight.shape))
        return GradientMaskSet(tuple(masks))

    def total_storage_bits(self) -> int:
        return sum(m.storage_bits() for m in self.layers)


def scl_gradients(pre: ModelParams, x: np.ndarray, y: np.ndarray, tau: float) -> list[np.ndarray]:
    """Mean contrastive-loss weight gradient per layer at the given parameters.

    The head is excluded from the loss path, so its entry is all zeros.
    """
    _, features, cache = forward(pre, x)
    _, d_features = scl_loss(features, y, tau)
    grads = backward(pre, cache, d_features=d_features / len(y))
    return [g.weight for g in grads.layers]


def compute_mask_set(pre: ModelParams, x: np.ndarray, y: np.ndarray,
                     k: int, variant: str, tau: float) -> GradientMaskSet:
    """Single pass over the mask data; builds one mask per maskable layer.

    The head is never scored: it is freshly initialized per task and stays
    fully trainable.
    """
    if variant == "full":
        return GradientMaskSet.all_full(pre)
    if variant not in ("row", "col", "sparse"):
        raise ConfigError(f"unknown selection variant {variant!r}")
    if len(y) == 0:
        raise ConfigError("mask data must be non-empty")
    for i, layer in enumerate(pre.layers[:-1]):
        rows, cols = layer.weight.shape
        limit = rows if variant == "row" else cols
        if not 1 <= k <= limit:
            raise ConfigError(f"k={k} out of range for layer {i} with shape {rows}x{cols}")
    hs = scl_gradients(pre, x, y, tau)
    masks = [build_mask(h, k, variant) for h in hs[:-1]]
    masks.append(full_mask(pre.layers[-1].weight.shape))
    return GradientMaskSet(tuple(masks))


def trainable_fraction(model: ModelParams, masks: GradientMaskSet) -> float:
    """Share of all parameters (weights and biases) the masks leave trainable."""
    if len(masks.layers) != len(model.layers):
        raise ShapeError("mask count does not match layer count")
    selected = 0.0
    for layer, mask in zip(model.layers, masks.layers):
        if layer.weight.shape != mask.shape:
            raise ShapeError(f"mask shape {mask.shape} != weight shape {layer.weight.shape}")
        selected += float(mask.to_dense().sum()) + float(mask.bias_mask().sum())
    return selected / model.param_count()


def mask_to_doc(mask: LayerMask) -> dict:
    doc = {"variant": mask.variant, "shape": list(mask.shape),
           "storage_bits": mask.storage_bits()}
    if mask.variant in ("row", "col"):
        doc["indices"] = list(mask.indices)
    elif mask.variant == "sparse":
        doc["indices"] = [list(r) for r in mask.indices]
    elif mask.variant == "dense":
        doc["indices"] = mask.indices.astype(int).tolist()
    else:
        doc["indices"] = None
    return doc


def mask_from_doc(doc: dict) -> LayerMask:
    variant = doc["variant"]
    shape = tuple(doc["shape"])
    if variant == "full":
        return LayerMask("full", shape)
    return LayerMask(variant, shape, doc["indices"])


def save_masks(masks: GradientMaskSet, path: str | Path) -> None:
    doc = {"layers": [mask_to_doc(m) for m in masks.layers],
           "storage_bits": masks.total_storage_bits()}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_masks(path: str | Path) -> GradientMaskSet:
    doc = json.loads(Path(path).read_text())
    return GradientMaskSet(tuple(mask_from_doc(m) for m in doc["layers"]))
