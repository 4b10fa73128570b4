"""Fully-connected ReLU Q-network with hand-derived backpropagation.

The network is a plain numpy object: per-layer weight matrices of shape
[n_out, n_in] and bias vectors, ReLU on every hidden layer and an affine
output. The penultimate activations ("features") are first-class citizens:
`forward` returns them alongside the Q-values, and the last layer can be read
and replaced wholesale, which is what the batch least-squares refit needs.

Checkpoint file layout (little-endian, documented for external readers):

    bytes 0..7   magic b"QNETCKPT"
    int64        format version (1)
    int64        number of entries in layer_sizes (= n_layers + 1)
    int64[...]   layer_sizes
    float64[...] for each layer, weights row-major [n_out, n_in], then bias

All parameters are float64; files are byte-stable across runs for identical
networks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

_MAGIC = b"QNETCKPT"
_FORMAT_VERSION = 1


@dataclass
class QNetwork:
    weights: list[np.ndarray]  # layer l: [n_out, n_in]
    biases: list[np.ndarray]  # layer l: [n_out]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_features(self) -> int:
        """Width of the penultimate activations feeding the linear head."""
        return self.weights[-1].shape[1]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_network(layer_sizes: list[int], rng: np.random.Generator) -> QNetwork:
    """Uniform init in +-1/sqrt(fan_in) for weights and biases."""
    if len(layer_sizes) < 2:
        raise DimensionMismatch("need at least an input and an output width")
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(rng.uniform(-bound, bound, size=n_out))
    return QNetwork(weights=weights, biases=biases)


def _check_states(net: QNetwork, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != net.layer_sizes[0]:
        raise DimensionMismatch(
            f"states must be [n, {net.layer_sizes[0]}], got shape {states.shape}"
        )
    return states


def forward_batch(net: QNetwork, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Q-values [n, |A|] and penultimate features [n, f] for a state batch."""
    act = _check_states(net, states)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        act = np.maximum(act @ w.T + b, 0.0)
    q = act @ net.weights[-1].T + net.biases[-1]
    return q, act


def forward(net: QNetwork, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-state forward pass: (q_values, features).

    q_values is exactly weights[-1] @ features + biases[-1]; features are the
    post-ReLU activations of the last hidden layer (the input itself for a
    single-layer network).
    """
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1:
        raise DimensionMismatch(f"state must be a vector, got shape {state.shape}")
    q, feats = forward_batch(net, state[None, :])
    return q[0], feats[0]


def backward_batch(net: QNetwork, states: np.ndarray, output_grads: np.ndarray) -> Gradients:
    """Gradients of sum_i output_grads[i] . q(states[i]) w.r.t. all parameters.

    Runs its own forward pass to cache pre-activations; gradients are summed
    over the batch. ReLU derivative at exactly 0 is taken as 0.
    """
    states = _check_states(net, states)
    output_grads = np.asarray(output_grads, dtype=np.float64)
    if output_grads.shape != (states.shape[0], net.n_actions):
        raise DimensionMismatch(
            f"output_grads must be [{states.shape[0]}, {net.n_actions}], "
            f"got {output_grads.shape}"
        )
    # Forward, keeping each layer's input.
    layer_inputs = [states]
    act = states
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        act = np.maximum(act @ w.T + b, 0.0)
        layer_inputs.append(act)

    n_layers = len(net.weights)
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = output_grads
    for layer in range(n_layers - 1, -1, -1):
        grad_w[layer] = delta.T @ layer_inputs[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            # Hidden activations are ReLU outputs, so act > 0 marks the
            # positive pre-activations.
            delta = (delta @ net.weights[layer]) * (layer_inputs[layer] > 0.0)
    return Gradients(weights=grad_w, biases=grad_b)


def backward(net: QNetwork, state: np.ndarray, output_grad: np.ndarray) -> Gradients:
    state = np.asarray(state, dtype=np.float64)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if state.ndim != 1 or output_grad.ndim != 1:
        raise DimensionMismatch("state and output_grad must be vectors")
    return backward_batch(net, state[None, :], output_grad[None, :])


def get_last_layer(net: QNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Copies of the linear head: (weights [|A|, f], biases [|A|])."""
    return net.weights[-1].copy(), net.biases[-1].copy()


def set_last_layer(net: QNetwork, weights: np.ndarray, biases: np.ndarray) -> None:
    """Replace the linear head in place; earlier layers are untouched."""
    weights = np.asarray(weights, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    if weights.shape != net.weights[-1].shape or biases.shape != net.biases[-1].shape:
        raise DimensionMismatch(
            f"last layer shapes are {net.weights[-1].shape}/{net.biases[-1].shape}, "
            f"got {weights.shape}/{biases.shape}"
        )
    net.weights[-1] = weights.copy()
    net.biases[-1] = biases.copy()


def clone(net: QNetwork) -> QNetwork:
    """Deep, independent copy."""
    return QNetwork(
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
    )


def params(net: QNetwork) -> list[np.ndarray]:
    """Flat parameter list in a stable order: all weights, then all biases."""
    return list(net.weights) + list(net.biases)


def set_params(net: QNetwork, values: list[np.ndarray]) -> None:
    n = len(net.weights)
    if len(values) != 2 * n:
        raise DimensionMismatch(f"expected {2 * n} parameter arrays, got {len(values)}")
    net.weights = [np.asarray(v, dtype=np.float64) for v in values[:n]]
    net.biases = [np.asarray(v, dtype=np.float64) for v in values[n:]]


def grads_list(g: Gradients) -> list[np.ndarray]:
    return list(g.weights) + list(g.biases)


def feature_sparsity(net: QNetwork, states: np.ndarray) -> float:
    """Fraction of exactly-zero entries in the features over a state batch."""
    _, feats = forward_batch(net, states)
    if feats.size == 0:
        return 0.0
    return float(np.mean(feats == 0.0))


def save_checkpoint(net: QNetwork, path: str) -> None:
    sizes = np.asarray(net.layer_sizes, dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.asarray([_FORMAT_VERSION, sizes.size], dtype="<i8").tobytes())
        fh.write(sizes.tobytes())
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> QNetwork:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path} is not a network checkpoint")
    off = len(_MAGIC)
    version, n_sizes = np.frombuffer(blob, dtype="<i8", count=2, offset=off)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += 16
    sizes = np.frombuffer(blob, dtype="<i8", count=int(n_sizes), offset=off).tolist()
    off += 8 * int(n_sizes)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=n_in * n_out, offset=off)
        off += 8 * n_in * n_out
        b = np.frombuffer(blob, dtype="<f8", count=n_out, offset=off)
        off += 8 * n_out
        weights.append(w.reshape(n_out, n_in).copy())
        biases.append(b.copy())
    if off != len(blob):
        raise ValueError(f"{path} has {len(blob) - off} trailing bytes")
    return QNetwork(weights=weights, biases=biases)
