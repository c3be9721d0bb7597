"""
Small feed-forward encoder with hand-written backpropagation.

Layout: inputs are standardised with a fixed shift and scalar scale, then pass
through tanh hidden layers and an identity output layer whose result is
multiplied by a fixed ``output_scale``. Batches are rows:
``h_l = act(h_{l-1} @ W_l.T + b_l)``. Everything is float64.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from augmanifold.errors import ConfigurationError, NumericalError
from augmanifold.rng import stream


logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class EncoderParams:
    """Weights (out x in) and biases per layer, the input standardisation and the fixed output multiplier."""

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_shift: np.ndarray
    input_scale: float = 1.0
    activation: str = "tanh"
    output_scale: float = 1.0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ConfigurationError(f"layer dims must list at least input and output sizes, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ConfigurationError("one weight matrix and one bias vector per layer are required")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            if w.shape != (dims[layer + 1], dims[layer]) or b.shape != (dims[layer + 1],):
                raise ConfigurationError(f"layer {layer} has shapes {w.shape}, {b.shape}; dims are {dims}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError(f"layer {layer} has non-finite parameters")
        if np.shape(self.input_shift) != (dims[0],):
            raise ConfigurationError(f"input shift must have length {dims[0]}")
        if not (self.input_scale > 0 and math.isfinite(self.input_scale)):
            raise ConfigurationError(f"input scale must be positive, got {self.input_scale}")
        if not (self.output_scale > 0 and math.isfinite(self.output_scale)):
            raise ConfigurationError(f"output scale must be positive, got {self.output_scale}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases, strict=True))

    def flat(self) -> np.ndarray:
        """All trainable parameters, layer by layer, weight then bias."""
        return np.concatenate([part.ravel() for w, b in zip(self.weights, self.biases, strict=True) for part in (w, b)])

    def with_flat(self, vector: np.ndarray) -> "EncoderParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ConfigurationError(f"expected {self.size} parameters, got {vector.shape}")
        weights, biases, offset = [], [], 0
        for w, b in zip(self.weights, self.biases, strict=True):
            weights.append(vector[offset : offset + w.size].reshape(w.shape))
            offset += w.size
            biases.append(vector[offset : offset + b.size].copy())
            offset += b.size
        return replace(self, weights=tuple(weights), biases=tuple(biases))


@dataclass(frozen=True)
class EncoderGradient:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([part.ravel() for w, b in zip(self.weights, self.biases, strict=True) for part in (w, b)])

    def __add__(self, other: "EncoderGradient") -> "EncoderGradient":
        return EncoderGradient(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights, strict=True)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases, strict=True)),
        )


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations kept for the backward pass."""

    inputs: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)


def init_params(
    layer_dims: list[int] | tuple[int, ...],
    seed: int,
    input_shift: np.ndarray | None = None,
    input_scale: float = 1.0,
    output_scale: float = 1.0,
    activation: str = "tanh",
) -> EncoderParams:
    """Glorot-uniform weights, zero biases; ``output_scale`` is kept as the fixed output multiplier."""
    dims = tuple(int(d) for d in layer_dims)
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:], strict=True)):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(stream(seed, "encoder-init", layer).uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    shift = np.zeros(dims[0]) if input_shift is None else np.asarray(input_shift, dtype=np.float64)
    return EncoderParams(dims, tuple(weights), tuple(biases), shift, float(input_scale), activation, float(output_scale))


def zero_params(layer_dims: list[int] | tuple[int, ...], activation: str = "tanh") -> EncoderParams:
    dims = tuple(int(d) for d in layer_dims)
    weights = tuple(np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:], strict=True))
    biases = tuple(np.zeros(o) for o in dims[1:])
    return EncoderParams(dims, weights, biases, np.zeros(dims[0]), 1.0, activation)


def _activate(params: EncoderParams, pre: np.ndarray) -> np.ndarray:
    return np.tanh(pre) if params.activation == "tanh" else pre


def _activation_slope(params: EncoderParams, pre: np.ndarray) -> np.ndarray:
    if params.activation == "tanh":
        return 1.0 - np.tanh(pre) ** 2
    return np.ones_like(pre)


def forward(params: EncoderParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Encode a batch (B, D) and keep what the backward pass needs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ConfigurationError(f"encoder expects inputs of dimension {params.input_dim}, got {x.shape[1]}")
    cache = ForwardCache()
    h = (x - params.input_shift) / params.input_scale
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        cache.inputs.append(h)
        pre = h @ w.T + b
        cache.pre_activations.append(pre)
        h = pre * params.output_scale if layer == last else _activate(params, pre)
    if not np.all(np.isfinite(h)):
        raise NumericalError("encoder produced non-finite activations")
    return h, cache


def backward(params: EncoderParams, cache: ForwardCache, grad_output: np.ndarray) -> EncoderGradient:
    """Gradient of sum(grad_output * output) with respect to weights and biases."""
    grad = np.asarray(grad_output, dtype=np.float64)
    n_layers = len(params.weights)
    grad_w: list[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: list[np.ndarray] = [np.empty(0)] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        if layer == n_layers - 1:
            grad = grad * params.output_scale
        else:
            grad = grad * _activation_slope(params, cache.pre_activations[layer])
        grad_w[layer] = grad.T @ cache.inputs[layer]
        grad_b[layer] = grad.sum(axis=0)
        grad = grad @ params.weights[layer]
    return EncoderGradient(tuple(grad_w), tuple(grad_b))


def encode(params: EncoderParams, x: np.ndarray) -> np.ndarray:
    """Representation of one point (D,) -> (N,), or of a batch (B, D) -> (B, N)."""
    x = np.asarray(x, dtype=np.float64)
    out, _ = forward(params, x)
    return out[0] if x.ndim == 1 else out


def encoder_layout(input_dim: int, hidden: list[int] | tuple[int, ...], output_dim: int) -> tuple[int, ...]:
    return (int(input_dim), *(int(h) for h in hidden), int(output_dim))
