"""Masked Adam and the cosine-decay schedule with linear warmup.

The gradient is masked *before* the moment updates, so moments at frozen
entries never accumulate and a masked trajectory is exactly an unmasked Adam
trajectory on pre-zeroed gradients. Epsilon sits inside the square root:
W <- W - lr * m_hat / sqrt(v_hat + eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .masking import GradientMaskSet
from .model import GradientSet, Layer, LayerGrad, ModelParams


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float
    total_epochs: int
    warmup_epochs: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConfigError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ConfigError(f"need 0 <= warmup ({self.warmup_epochs}) "
                              f"< total ({self.total_epochs})")


@dataclass
class AdamState:
    m: GradientSet
    v: GradientSet
    t: int = 0


def init_adam_state(model: ModelParams) -> AdamState:
    return AdamState(GradientSet.zeros_like(model), GradientSet.zeros_like(model))


def cosine_warmup_lr(epoch: int, cfg: OptimConfig) -> float:
    """Linear warmup from 0 over the first warmup epochs, cosine decay to 0 after."""
    if not 0 <= epoch <= cfg.total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.total_epochs}]")
    w, t = cfg.warmup_epochs, cfg.total_epochs
    if epoch < w:
        return cfg.base_lr * epoch / w
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * (epoch - w) / (t - w)))


def masked_adam_step(model: ModelParams, state: AdamState, grad: GradientSet,
                     masks: GradientMaskSet, lr: float,
                     cfg: OptimConfig) -> tuple[ModelParams, AdamState]:
    """One Adam step on mask-selected entries; frozen entries stay bitwise put."""
    t = state.t + 1
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.epsilon
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_layers: list[Layer] = []
    new_m: list[LayerGrad] = []
    new_v: list[LayerGrad] = []
    for layer, g, mask, m, v in zip(model.layers, grad.layers, masks.layers,
                                    state.m.layers, state.v.layers):
        if not (np.all(np.isfinite(g.weight)) and np.all(np.isfinite(g.bias))):
            raise NumericError("non-finite gradient entry")
        wm = mask.to_dense()
        bm = mask.bias_mask()
        gw = g.weight * wm
        gb = g.bias * bm
        mw = b1 * m.weight + (1.0 - b1) * gw
        mb = b1 * m.bias + (1.0 - b1) * gb
        vw = b2 * v.weight + (1.0 - b2) * gw * gw
        vb = b2 * v.bias + (1.0 - b2) * gb * gb
        weight = layer.weight - lr * (mw / bc1) / np.sqrt(vw / bc2 + eps)
        bias = layer.bias - lr * (mb / bc1) / np.sqrt(vb / bc2 + eps)
        # guarantee frozen entries are bitwise untouched, not just numerically
        weight = np.where(wm == 0.0, layer.weight, weight)
        bias = np.where(bm == 0.0, layer.bias, bias)
        new_layers.append(Layer(weight, bias, layer.role, layer.activation))
        new_m.append(LayerGrad(mw, mb))
        new_v.append(LayerGrad(vw, vb))
    return ModelParams(new_layers), AdamState(GradientSet(new_m), GradientSet(new_v), t)
