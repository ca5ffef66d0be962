"""Feed-forward binary classifiers with ReLU hidden layers and a linear output.

The classifier computes a single score h(x); the predicted label is positive
when h(x) >= 0 and negative otherwise. Hidden layers apply ReLU unless a
layer is explicitly declared linear (useful for piecewise-linear toy models
and for bound-computation fixtures).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputShapeError, ModelFormatError

RELU = "relu"
LINEAR = "linear"

FORMAT_VERSION = 1


class Label(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    def opposite(self) -> "Label":
        return Label.NEGATIVE if self is Label.POSITIVE else Label.POSITIVE


@dataclass(frozen=True)
class Layer:
    """One affine layer: weights (k_out, k_in), biases (k_out,)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise ModelFormatError("layer weights must be a 2-D matrix")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ModelFormatError(
                f"bias length {b.shape} does not match weight rows {w.shape[0]}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError("non-finite weight or bias")
        if self.activation not in (RELU, LINEAR):
            raise ModelFormatError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class FeedForwardNetwork:
    """Immutable network; safe to share across workers."""

    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_dim <= 0:
            raise ModelFormatError("input_dim must be positive")
        if not self.layers:
            raise ModelFormatError("network needs at least one layer")
        fan_in = self.input_dim
        for idx, layer in enumerate(self.layers):
            if layer.fan_in != fan_in:
                raise ModelFormatError(
                    f"layer {idx + 1} expects {layer.fan_in} inputs, previous width is {fan_in}"
                )
            fan_in = layer.width
        last = self.layers[-1]
        if last.width != 1:
            raise ModelFormatError(
                f"output layer must have a single row, got {last.width}"
            )
        if last.activation != LINEAR:
            raise ModelFormatError("output layer must be linear")

    @property
    def depth(self) -> int:
        """Number of weight layers (hidden layers + output)."""
        return len(self.layers)

    @property
    def hidden_layers(self) -> tuple[Layer, ...]:
        return self.layers[:-1]


@dataclass(frozen=True)
class ActivationTrace:
    """Pre/post-activation values for every layer plus the scalar output."""

    pre_activation: tuple[np.ndarray, ...]
    post_activation: tuple[np.ndarray, ...]
    output: float


def _check_input(net: FeedForwardNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise InputShapeError(
            f"expected input of shape ({net.input_dim},), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InputShapeError("input contains non-finite entries")
    return x


def forward(net: FeedForwardNetwork, x: np.ndarray) -> ActivationTrace:
    """Evaluate the network, recording every layer's pre/post activations."""
    x = _check_input(net, x)
    pre, post = [], []
    value = x
    for layer in net.layers:
        z = layer.weights @ value + layer.biases
        zhat = np.maximum(z, 0.0) if layer.activation == RELU else z
        pre.append(z)
        post.append(zhat)
        value = zhat
    return ActivationTrace(tuple(pre), tuple(post), float(pre[-1][0]))


def forward_batch(
    net: FeedForwardNetwork, xs: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Vectorized forward pass over rows of ``xs``.

    Returns per-layer pre/post activation matrices (n_samples, width) and the
    output vector. Used by the sampling oracles; semantics match ``forward``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise InputShapeError(
            f"expected batch of shape (n, {net.input_dim}), got {xs.shape}"
        )
    pre, post = [], []
    value = xs
    for layer in net.layers:
        z = value @ layer.weights.T + layer.biases
        zhat = np.maximum(z, 0.0) if layer.activation == RELU else z
        pre.append(z)
        post.append(zhat)
        value = zhat
    return pre, post, pre[-1][:, 0]


def predicted_label(net: FeedForwardNetwork, x: np.ndarray) -> Label:
    """Positive iff h(x) >= 0."""
    return Label.POSITIVE if forward(net, x).output >= 0.0 else Label.NEGATIVE


def label_flipped(
    output: float, factual_label: Label, margin: float = 0.0, tol: float = 0.0
) -> bool:
    """Single source of truth for the flip rule shared by encoder and oracles.

    A negative factual flips when the score reaches the positive side
    (output >= 0); a positive factual flips when the score is at least
    ``margin`` below zero (the open set h < 0 closed with a margin).
    ``tol`` loosens the test for validating floating-point solver output.
    """
    if factual_label is Label.NEGATIVE:
        return output >= -tol
    return output <= -margin + tol


def load_network(text: str) -> FeedForwardNetwork:
    """Parse and validate a network document (see serialize_network)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("parse error: top-level value must be an object")
    if doc.get("format") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format {doc.get('format')!r}, expected {FORMAT_VERSION}"
        )
    try:
        input_dim = int(doc["input_dim"])
        raw_layers = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"parse error: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelFormatError("parse error: layers must be a non-empty list")

    layers = []
    for idx, raw in enumerate(raw_layers):
        if not isinstance(raw, dict):
            raise ModelFormatError(f"parse error: layer {idx + 1} must be an object")
        try:
            weights = np.asarray(raw["weights"], dtype=np.float64)
            biases = np.asarray(raw["biases"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(
                f"parse error in layer {idx + 1}: {exc}"
            ) from exc
        is_last = idx == len(raw_layers) - 1
        activation = raw.get("activation", LINEAR if is_last else RELU)
        if is_last and activation != LINEAR:
            raise ModelFormatError("output layer must be linear")
        layers.append(Layer(weights, biases, activation))
    return FeedForwardNetwork(tuple(layers), input_dim)


def load_network_file(path) -> FeedForwardNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return load_network(fh.read())


def serialize_network(net: FeedForwardNetwork) -> str:
    doc = {
        "format": FORMAT_VERSION,
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ],
    }
    return json.dumps(doc, indent=2)


def save_network(net: FeedForwardNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_network(net))
