"""Training objectives: cross-entropy, supervised contrastive loss, and the
pull-to-pretrained penalty, each returning exact analytic gradients.

The supervised contrastive loss L2-normalizes feature rows before the dot
products, and its gradient w.r.t. the raw (pre-normalization) features carries
the normalization Jacobian. Samples without a same-class partner in the batch
contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, NumericError, ShapeError
from .model import GradientSet, LayerGrad, ModelParams, backward, forward


@dataclass(frozen=True)
class RegularSet:
    """Which layers the distance penalty covers.

    ``last_l`` counts trailing hidden layers; embedding and head are toggled
    separately, mirroring "last L layers + embedding + head".
    """
    last_l: int
    include_embedding: bool = True
    include_head: bool = True


@dataclass(frozen=True)
class RegConfig:
    lam: float
    norm: str = "l2"  # l2 | l1 | none
    regular: RegularSet = RegularSet(last_l=0)

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.norm not in ("l2", "l1", "none"):
            raise ConfigError(f"unknown norm {self.norm!r}")


def resolve_regular_layers(model: ModelParams, regular: RegularSet) -> list[int]:
    """Indices of layers in the regular set, in ascending order."""
    hidden = [i for i, l in enumerate(model.layers) if l.role == "hidden"]
    if regular.last_l > len(hidden):
        raise ConfigError(f"last_l={regular.last_l} exceeds the {len(hidden)} hidden layers")
    chosen = set(hidden[len(hidden) - regular.last_l:])
    if regular.include_embedding:
        chosen.update(i for i, l in enumerate(model.layers) if l.role == "embedding")
    if regular.include_head:
        chosen.add(len(model.layers) - 1)
    return sorted(chosen)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class; gradient is (softmax - onehot)/batch."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    batch, num_classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise InputError(f"labels must lie in [0, {num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    loss = float(np.mean(lse - shifted[np.arange(batch), labels]))
    softmax = np.exp(shifted) / np.sum(np.exp(shifted), axis=1, keepdims=True)
    d_logits = softmax
    d_logits[np.arange(batch), labels] -= 1.0
    d_logits /= batch
    return loss, d_logits


def scl_loss(features: np.ndarray, labels: np.ndarray, tau: float) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss over L2-normalized feature rows.

    Returns the summed loss over anchors and its gradient w.r.t. the raw
    features (normalization Jacobian included).
    """
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    batch = features.shape[0]
    if batch < 2:
        raise InputError("contrastive loss needs a batch of at least 2")
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")

    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0.0):
        raise NumericError("zero-norm feature row cannot be normalized")
    z = features / norms[:, None]

    sim = (z @ z.T) / tau
    off_diag = ~np.eye(batch, dtype=bool)
    positives = (labels[:, None] == labels[None, :]) & off_diag
    n_pos = positives.sum(axis=1)
    valid = n_pos > 0

    # log-sum-exp over a != i, stabilized per row
    row_max = np.where(off_diag, sim, -np.inf).max(axis=1)
    exp_shift = np.where(off_diag, np.exp(sim - row_max[:, None]), 0.0)
    lse = row_max + np.log(exp_shift.sum(axis=1))

    mean_pos_sim = (positives * sim).sum(axis=1) / np.maximum(n_pos, 1)
    per_anchor = np.where(valid, lse - mean_pos_sim, 0.0)
    loss = float(per_anchor.sum())

    # dL/dsim: softmax over non-self entries minus positive-average, per valid anchor
    softmax = exp_shift / exp_shift.sum(axis=1, keepdims=True)
    g = np.where(valid[:, None], softmax - positives / np.maximum(n_pos, 1)[:, None], 0.0)
    # sim is used both as (i, a) and (a, i) terms; tau divides once more because
    # sim already includes 1/tau -> chain through raw dot products
    d_z = (g + g.T) @ z / tau

    # normalization Jacobian: d/df [f/|f|] applied row-wise
    inner = np.sum(d_z * z, axis=1, keepdims=True)
    d_features = (d_z - inner * z) / norms[:, None]
    return loss, d_features


def reg_penalty(model: ModelParams, pre: ModelParams, cfg: RegConfig) -> tuple[float, GradientSet]:
    """Distance penalty lambda * sum over regular layers of |W - W_pre| (l2 squared or l1).

    Biases of regular layers are penalized symmetrically. sign(0) = 0 for l1.
    """
    if [l.weight.shape for l in model.layers] != [l.weight.shape for l in pre.layers]:
        raise ShapeError("model and pretrained snapshot have different shapes")
    grads = GradientSet.zeros_like(model)
    if cfg.norm == "none" or cfg.lam == 0.0:
        return 0.0, grads
    loss = 0.0
    for i in resolve_regular_layers(model, cfg.regular):
        dw = model.layers[i].weight - pre.layers[i].weight
        db = model.layers[i].bias - pre.layers[i].bias
        if cfg.norm == "l2":
            loss += cfg.lam * (float(np.sum(dw * dw)) + float(np.sum(db * db)))
            grads.layers[i] = LayerGrad(2.0 * cfg.lam * dw, 2.0 * cfg.lam * db)
        else:
            loss += cfg.lam * (float(np.sum(np.abs(dw))) + float(np.sum(np.abs(db))))
            grads.layers[i] = LayerGrad(cfg.lam * np.sign(dw), cfg.lam * np.sign(db))
    return loss, grads


def combined_grad(model: ModelParams, pre: ModelParams,
                  x_batch: np.ndarray, labels: np.ndarray,
                  cfg: RegConfig) -> tuple[float, float, GradientSet]:
    """Cross-entropy plus distance penalty; returns (total loss, ce loss, gradients)."""
    logits, _, cache = forward(model, x_batch)
    ce, d_logits = cross_entropy(logits, labels)
    grads = backward(model, cache, d_logits=d_logits)
    if cfg.norm == "none" or cfg.lam == 0.0:
        return ce, ce, grads
    reg_loss, reg_grads = reg_penalty(model, pre, cfg)
    return ce + reg_loss, ce, grads.add(reg_grads)
