"""Minimal feed-forward network: dense layers with optional ReLU after each.

Just enough substrate to evaluate compression end to end: forward
inference on column-sample batches, splicing a factor pair in place of a
layer, pruning with downstream column removal, accuracy, and parameter
accounting. Networks are immutable; every edit returns a new one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType

import numpy as np

from . import linalg
from .compress import ActivationBatch, FactorPair, LinearLayer
from .errors import BatchError, DimensionError

__all__ = [
    "Activation",
    "LabeledBatch",
    "Network",
    "accuracy",
    "apply_pruning",
    "extract_activations",
    "forward",
    "parameter_count",
    "splice",
    "weight_parameter_count",
]


class Activation(str, Enum):
    RELU = "relu"
    NONE = "none"


@dataclass(frozen=True)
class Network:
    """Ordered dense layers; activations[i] is applied after layer i.

    The default wiring is ReLU between layers and a linear final layer.
    spliced records which layer indices were replaced by factor pairs;
    keys refer to the index the layer had when it was replaced.
    """

    layers: tuple[LinearLayer, ...]
    activations: tuple[Activation, ...] | None = None
    spliced: dict[int, FactorPair] = field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("network needs at least one layer")
        for i in range(len(layers) - 1):
            if layers[i].out_features != layers[i + 1].in_features:
                raise DimensionError(
                    f"layer {i} outputs {layers[i].out_features} features but "
                    f"layer {i + 1} expects {layers[i + 1].in_features}"
                )
        acts = self.activations
        if acts is None:
            acts = tuple(
                Activation.RELU if i < len(layers) - 1 else Activation.NONE
                for i in range(len(layers))
            )
        else:
            acts = tuple(Activation(a) for a in acts)
            if len(acts) != len(layers):
                raise DimensionError(
                    f"{len(acts)} activations for {len(layers)} layers"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "spliced", MappingProxyType(dict(self.spliced)))

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def out_features(self) -> int:
        return self.layers[-1].out_features


@dataclass(frozen=True)
class LabeledBatch:
    """Column-sample inputs (n x p) with one class index per column."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = linalg.as_matrix(self.inputs, "batch inputs")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != inputs.shape[1]:
            raise BatchError(
                f"labels shape {labels.shape} does not match {inputs.shape[1]} samples"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if not np.array_equal(as_int, labels):
                raise BatchError("labels must be integers")
            labels = as_int
        if (labels < 0).any():
            raise BatchError("labels must be non-negative class indices")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", np.ascontiguousarray(labels, dtype=np.int64))

    @property
    def samples(self) -> int:
        return self.inputs.shape[1]


def forward(net: Network, inputs) -> np.ndarray:
    """Final layer outputs (pre-softmax) for a batch of column samples."""
    h = linalg.as_matrix(inputs, "network inputs")
    if h.shape[0] != net.in_features:
        raise DimensionError(
            f"inputs have {h.shape[0]} features, network expects {net.in_features}"
        )
    for layer, act in zip(net.layers, net.activations):
        h = layer.apply(h)
        if act == Activation.RELU:
            h = np.maximum(h, 0.0)
    return h


def extract_activations(net: Network, inputs, layer_index: int) -> ActivationBatch:
    """The batch feeding layer layer_index, as the compression ops expect it.

    Index 0 returns the raw inputs. The post-ReLU flag is set when the
    preceding layer is ReLU-gated.
    """
    if not 0 <= layer_index < len(net.layers):
        raise IndexError(f"layer index {layer_index} outside [0, {len(net.layers) - 1}]")
    h = linalg.as_matrix(inputs, "network inputs")
    if h.shape[0] != net.in_features:
        raise DimensionError(
            f"inputs have {h.shape[0]} features, network expects {net.in_features}"
        )
    for i in range(layer_index):
        h = net.layers[i].apply(h)
        if net.activations[i] == Activation.RELU:
            h = np.maximum(h, 0.0)
    post_relu = layer_index > 0 and net.activations[layer_index - 1] == Activation.RELU
    return ActivationBatch(h, post_relu=post_relu)


def splice(net: Network, layer_index: int, pair: FactorPair) -> Network:
    """Replace one layer with the pair's two-layer realization.

    The first new layer carries b.T with a zero bias, the second carries
    a with the pair's bias; nothing nonlinear sits between them, so the
    spliced network computes a @ (b.T @ x) + new_bias where the original
    layer sat.
    """
    if not 0 <= layer_index < len(net.layers):
        raise IndexError(f"layer index {layer_index} outside [0, {len(net.layers) - 1}]")
    old = net.layers[layer_index]
    if pair.a.shape[0] != old.out_features or pair.b.shape[0] != old.in_features:
        raise DimensionError(
            f"factor shapes {pair.a.shape}/{pair.b.shape} do not match "
            f"{old.out_features}x{old.in_features} layer"
        )
    first = LinearLayer(np.ascontiguousarray(pair.b.T), np.zeros(pair.rank))
    second = LinearLayer(pair.a, pair.new_bias)
    layers = net.layers[:layer_index] + (first, second) + net.layers[layer_index + 1:]
    acts = (
        net.activations[:layer_index]
        + (Activation.NONE, net.activations[layer_index])
        + net.activations[layer_index + 1:]
    )
    provenance = dict(net.spliced)
    provenance[layer_index] = pair
    return Network(layers=layers, activations=acts, spliced=provenance)


def apply_pruning(net: Network, layer_index: int, pruned: LinearLayer,
                  kept_indices) -> Network:
    """Swap in a pruned layer and drop the matching next-layer columns."""
    if not 0 <= layer_index < len(net.layers):
        raise IndexError(f"layer index {layer_index} outside [0, {len(net.layers) - 1}]")
    if layer_index == len(net.layers) - 1:
        raise ValueError("cannot prune the final layer; its outputs are the classes")
    kept = np.asarray(kept_indices, dtype=np.int64)
    if pruned.out_features != kept.shape[0]:
        raise DimensionError(
            f"pruned layer has {pruned.out_features} units but {kept.shape[0]} kept indices"
        )
    nxt = net.layers[layer_index + 1]
    narrowed = LinearLayer(nxt.weights[:, kept].copy(), nxt.bias.copy())
    layers = (
        net.layers[:layer_index] + (pruned, narrowed) + net.layers[layer_index + 2:]
    )
    return Network(layers=layers, activations=net.activations, spliced=dict(net.spliced))


def accuracy(net: Network, batch: LabeledBatch) -> float:
    """Fraction of columns whose argmax output matches the label.

    Argmax ties break toward the lowest class index.
    """
    top = int(batch.labels.max())
    if net.out_features < top + 1:
        raise ValueError(
            f"label out of range: network has {net.out_features} outputs, "
            f"labels reach {top}"
        )
    outputs = forward(net, batch.inputs)
    predictions = np.argmax(outputs, axis=0)
    return float(np.mean(predictions == batch.labels))


def parameter_count(net: Network) -> int:
    """Weights plus biases across all layers."""
    return sum(l.weights.size + l.bias.size for l in net.layers)


def weight_parameter_count(net: Network) -> int:
    return sum(l.weights.size for l in net.layers)
