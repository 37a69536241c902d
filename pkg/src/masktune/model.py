"""Multilayer perceptron with layer roles, forward cache, and exact backprop.

The model is deliberately small: dense layers, ReLU on non-head layers,
identity on the head. Roles tag layers as ``embedding`` (first), ``hidden``,
or ``head`` (last) so downstream code can address "the head" or "the last L
hidden layers" without positional guesswork.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .linalg import Rng

ROLES = ("embedding", "hidden", "head")
ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    role: str
    activation: str

    def copy(self) -> "Layer":
        return Layer(self.weight.copy(), self.bias.copy(), self.role, self.activation)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class ModelParams:
    layers: list[Layer]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.layers:
            raise ConfigError("model must have at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.role not in ROLES:
                raise ConfigError(f"layer {i}: unknown role {layer.role!r}")
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[0],):
                raise ShapeError(f"layer {i}: bias length {layer.bias.shape} "
                                 f"does not match weight rows {layer.weight.shape[0]}")
            if i > 0 and layer.in_dim != self.layers[i - 1].out_dim:
                raise ShapeError(f"layer {i}: input width {layer.in_dim} does not chain "
                                 f"with previous output width {self.layers[i - 1].out_dim}")
        if self.layers[-1].role != "head":
            raise ConfigError("last layer must have role 'head'")
        if any(l.role == "head" for l in self.layers[:-1]):
            raise ConfigError("only the last layer may have role 'head'")
        if any(l.role == "embedding" for l in self.layers[1:]):
            raise ConfigError("only the first layer may have role 'embedding'")

    def copy(self) -> "ModelParams":
        return ModelParams([l.copy() for l in self.layers])

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def roles(self) -> list[str]:
        return [l.role for l in self.layers]

    @property
    def feature_dim(self) -> int:
        """Width of the head input (penultimate activation)."""
        return self.layers[-1].in_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    def param_count(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)


@dataclass
class LayerGrad:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class GradientSet:
    layers: list[LayerGrad]

    @staticmethod
    def zeros_like(model: ModelParams) -> "GradientSet":
        return GradientSet([LayerGrad(np.zeros_like(l.weight), np.zeros_like(l.bias))
                            for l in model.layers])

    def add(self, other: "GradientSet") -> "GradientSet":
        if len(self.layers) != len(other.layers):
            raise ShapeError("gradient sets have different layer counts")
        return GradientSet([LayerGrad(a.weight + b.weight, a.bias + b.bias)
                            for a, b in zip(self.layers, other.layers)])


@dataclass
class ForwardCache:
    model: ModelParams
    inputs: list[np.ndarray] = field(repr=False, default_factory=list)
    preacts: list[np.ndarray] = field(repr=False, default_factory=list)


def default_roles(num_layers: int) -> list[str]:
    if num_layers == 1:
        return ["head"]
    return ["embedding"] + ["hidden"] * (num_layers - 2) + ["head"]


def init_model(dims: list[int], seed: int | Rng, roles: list[str] | None = None) -> ModelParams:
    """Build an MLP with uniform [-sqrt(1/fan_in), sqrt(1/fan_in)] weights and zero biases."""
    if len(dims) < 2:
        raise ConfigError("dims must list at least an input and an output width")
    num_layers = len(dims) - 1
    if roles is None:
        roles = default_roles(num_layers)
    if len(roles) != num_layers:
        raise ConfigError(f"got {len(roles)} roles for {num_layers} layers")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    layers = []
    for i in range(num_layers):
        fan_in = dims[i]
        bound = np.sqrt(1.0 / fan_in)
        weight = rng.uniform(-bound, bound, size=(dims[i + 1], dims[i]))
        bias = np.zeros(dims[i + 1])
        activation = "identity" if roles[i] == "head" else "relu"
        layers.append(Layer(weight, bias, roles[i], activation))
    return ModelParams(layers)


def reinit_head(model: ModelParams, num_classes: int, rng: Rng) -> ModelParams:
    """Return a copy with a freshly initialized head of the given class count."""
    new = model.copy()
    fan_in = new.feature_dim
    bound = np.sqrt(1.0 / fan_in)
    weight = rng.uniform(-bound, bound, size=(num_classes, fan_in))
    new.layers[-1] = Layer(weight, np.zeros(num_classes), "head", "identity")
    return new


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    # ReLU subgradient at 0 is 0.
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(model: ModelParams, x_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Run the network; return (logits, features, cache).

    ``features`` is the head input, i.e. the penultimate activation (or the
    raw batch for a head-only model).
    """
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2 or x_batch.shape[1] != model.layers[0].in_dim:
        raise ShapeError(f"batch shape {x_batch.shape} does not match "
                         f"input width {model.layers[0].in_dim}")
    cache = ForwardCache(model=model)
    a = x_batch
    for layer in model.layers:
        cache.inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        cache.preacts.append(z)
        a = _apply_activation(z, layer.activation)
    logits = a
    features = cache.inputs[-1]
    return logits, features, cache


def backward(model: ModelParams, cache: ForwardCache,
             d_logits: np.ndarray | None = None,
             d_features: np.ndarray | None = None) -> GradientSet:
    """Exact gradients of an upstream loss w.r.t. every weight and bias.

    Exactly one of ``d_logits`` / ``d_features`` must be given. The
    ``d_features`` path starts at the head input and leaves the head's
    gradients zero; this is the route used for head-free mask gradients.
    """
    if cache.model is not model:
        raise StateError("cache does not belong to this model")
    if (d_logits is None) == (d_features is None):
        raise ValueError("provide exactly one of d_logits or d_features")

    grads = GradientSet.zeros_like(model)
    n = len(model.layers)
    if d_logits is not None:
        delta = np.asarray(d_logits, dtype=np.float64)
        start = n - 1
    else:
        d_out = np.asarray(d_features, dtype=np.float64)
        start = n - 2
        if start < 0:
            return grads  # head-only model: features are the raw input
        delta = d_out * _activation_grad(cache.preacts[start], model.layers[start].activation)

    for l in range(start, -1, -1):
        layer = model.layers[l]
        grads.layers[l].weight = delta.T @ cache.inputs[l]
        grads.layers[l].bias = delta.sum(axis=0)
        if l > 0:
            d_out = delta @ layer.weight
            delta = d_out * _activation_grad(cache.preacts[l - 1], model.layers[l - 1].activation)
    return grads


def save_checkpoint(model: ModelParams, path: str | Path) -> None:
    """Write the JSON checkpoint; floats serialize via shortest round-trip repr."""
    doc = {
        "dims": model.dims,
        "roles": model.roles,
        "layers": [{"weight": l.weight.tolist(), "bias": l.bias.tolist()}
                   for l in model.layers],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path: str | Path) -> ModelParams:
    doc = json.loads(Path(path).read_text())
    roles = doc["roles"]
    layers = []
    for role, rec in zip(roles, doc["layers"]):
        weight = np.asarray(rec["weight"], dtype=np.float64)
        bias = np.asarray(rec["bias"], dtype=np.float64)
        activation = "identity" if role == "head" else "relu"
        layers.append(Layer(weight, bias, role, activation))
    return ModelParams(layers)
