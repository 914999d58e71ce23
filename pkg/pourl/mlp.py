"""Multilayer perceptron for Q-values: forward pass, squared TD loss, backprop, SGD.

Everything is float64 so gradients agree bit-for-bit across runs.
"""
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from pourl.errors import DimensionMismatch, DumpFormatError, EmptyBatch, ShapeMismatch

SNAPSHOT_MAGIC = b"QNET"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (outputs, inputs)
    bias: np.ndarray  # (outputs,)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class NetworkParams:
    """Layer stack; arrays are treated as immutable, every update builds new ones."""

    layers: Tuple[Layer, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def shapes(self) -> List[Tuple[Tuple[int, int], Tuple[int]]]:
        return [(layer.weights.shape, layer.bias.shape) for layer in self.layers]


def init_params(input_dim: int, hidden_sizes: Sequence[int], output_dim: int, seed: int) -> NetworkParams:
    if input_dim <= 0 or output_dim <= 0 or any(h <= 0 for h in hidden_sizes):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    sizes = [input_dim, *hidden_sizes, output_dim]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(weights=weights, bias=np.zeros(fan_out)))
    return NetworkParams(layers=tuple(layers))


def _as_inputs(params: NetworkParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionMismatch(f"expected inputs of width {params.input_dim}, got shape {x.shape}")
    return x


def _forward_cached(params: NetworkParams, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    activations = [x]
    pre_activations = []
    a = x
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        z = a @ layer.weights.T + layer.bias
        pre_activations.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return a, activations, pre_activations


def forward(params: NetworkParams, state) -> np.ndarray:
    """Q-values for one state (1-D result) or a batch of states (2-D result)."""
    single = np.ndim(state) == 1
    out, _, _ = _forward_cached(params, _as_inputs(params, state))
    return out[0] if single else out


def loss_and_gradients(params: NetworkParams, target_params: NetworkParams, batch, gamma: float) -> Tuple[float, NetworkParams]:
    """Mean squared TD error over ``batch`` and its exact gradient w.r.t. ``params`` only.

    ``batch`` is a sequence of transitions with fields s, a, r, s_next, terminal.
    """
    if len(batch) == 0:
        raise EmptyBatch("loss needs at least one transition")
    states = _as_inputs(params, [t.s for t in batch])
    next_states = _as_inputs(target_params, [t.s_next for t in batch])
    actions = np.array([t.a for t in batch], dtype=np.int64)
    rewards = np.array([t.r for t in batch], dtype=np.float64)
    bootstrap = np.array([0.0 if t.terminal else 1.0 for t in batch])
    if target_params.output_dim != params.output_dim:
        raise DimensionMismatch("prediction and target networks disagree on action count")
    if np.any(actions < 0) or np.any(actions >= params.output_dim):
        raise DimensionMismatch("transition action outside the network's output range")

    q_next, _, _ = _forward_cached(target_params, next_states)
    targets = rewards + gamma * bootstrap * q_next.max(axis=1)

    q, activations, pre_activations = _forward_cached(params, states)
    rows = np.arange(len(batch))
    residual = q[rows, actions] - targets
    loss = float(np.mean(residual ** 2))

    delta = np.zeros_like(q)
    delta[rows, actions] = 2.0 * residual / len(batch)
    grads: List[Layer] = []
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        grads.append(Layer(weights=delta.T @ activations[i], bias=delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ layer.weights) * (pre_activations[i - 1] > 0.0)
    grads.reverse()
    return loss, NetworkParams(layers=tuple(grads))


def _check_shapes(params: NetworkParams, other: NetworkParams) -> None:
    if params.shapes() != other.shapes():
        raise ShapeMismatch(f"shapes differ: {params.shapes()} vs {other.shapes()}")


def sgd_step(params: NetworkParams, gradients: NetworkParams, alpha: float) -> NetworkParams:
    _check_shapes(params, gradients)
    layers = tuple(
        Layer(weights=p.weights - alpha * g.weights, bias=p.bias - alpha * g.bias)
        for p, g in zip(params.layers, gradients.layers)
    )
    return NetworkParams(layers, params.hidden_activation, params.output_activation)


def copy_params(params: NetworkParams) -> NetworkParams:
    layers = tuple(Layer(weights=l.weights.copy(), bias=l.bias.copy()) for l in params.layers)
    return NetworkParams(layers, params.hidden_activation, params.output_activation)


def params_equal(a: NetworkParams, b: NetworkParams) -> bool:
    """Bitwise equality of every weight and bias."""
    if a.shapes() != b.shapes():
        return False
    return all(
        x.weights.tobytes() == y.weights.tobytes() and x.bias.tobytes() == y.bias.tobytes()
        for x, y in zip(a.layers, b.layers)
    )


def snapshot_bytes(params: NetworkParams) -> bytes:
    parts = [SNAPSHOT_MAGIC, struct.pack("<II", SNAPSHOT_VERSION, len(params.layers))]
    for layer in params.layers:
        rows, cols = layer.weights.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_snapshot(data: bytes) -> NetworkParams:
    if data[:4] != SNAPSHOT_MAGIC:
        raise DumpFormatError("not a QNET snapshot")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != SNAPSHOT_VERSION:
            raise DumpFormatError(f"unsupported snapshot version {version}")
        offset = 12
        layers = []
        for _ in range(count):
            rows, cols = struct.unpack_from("<II", data, offset)
            offset += 8
            w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
            offset += 8 * rows * cols
            b = np.frombuffer(data, dtype="<f8", count=rows, offset=offset)
            offset += 8 * rows
            layers.append(Layer(weights=w.astype(np.float64), bias=b.astype(np.float64)))
    except (struct.error, ValueError) as exc:
        raise DumpFormatError(f"snapshot truncated: {exc}") from exc
    if offset != len(data):
        raise DumpFormatError("trailing bytes after snapshot")
    return NetworkParams(layers=tuple(layers))
