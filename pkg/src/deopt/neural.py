"""Dense feed-forward Q-network with manual backpropagation and Adam.

Default architecture: 99 inputs, four hidden ReLU layers of 100 units,
four linear outputs (one Q-value per mutation strategy). Double precision
throughout. Checkpoints are a small versioned binary (magic, dims,
row-major little-endian float64 weights) plus a JSON sidecar carrying the
feature-layout version, the strategy ordinal table and run metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from deopt.features import FEATURE_LAYOUT_VERSION, N_FEATURES

DEFAULT_DIMS = (N_FEATURES, 100, 100, 100, 100, 4)

_MAGIC = b"QNET"
_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, truncated or incompatible checkpoint."""


class QNetwork:
    """Weight matrices and bias vectors; ReLU hidden, identity output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def create(cls, seed: int, dims: tuple[int, ...] = DEFAULT_DIMS) -> "QNetwork":
        """Fan-in/fan-out scaled uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def forward(self, state: np.ndarray) -> np.ndarray:
        """Q-values for a single state or a batch of states."""
        h = np.asarray(state, dtype=float)
        if not np.isfinite(h.sum()):  # one reduction instead of a full mask
            raise ValueError("non-finite network input")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h @ self.weights[-1] + self.biases[-1]

    def clone(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def copy_weights(src: QNetwork, dst: QNetwork) -> None:
    if src.dims != dst.dims:
        raise ValueError(f"architecture mismatch: {src.dims} vs {dst.dims}")
    for wd, bd, ws, bs in zip(dst.weights, dst.biases, src.weights, src.biases):
        wd[...] = ws
        bd[...] = bs


@dataclass
class AdamState:
    """First/second moment accumulators for one network.

    The network's parameters are re-homed into one flat buffer (the layer
    arrays become views into it) so the whole update runs as a handful of
    vectorized operations instead of one pass per layer.
    """

    net: QNetwork
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.0  # global-norm clip; 0 disables
    step: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)
    _flat: np.ndarray = field(init=False)

    def __post_init__(self):
        params = self.net.weights + self.net.biases
        self._flat = np.concatenate([p.ravel() for p in params])
        views, pos = [], 0
        for p in params:
            views.append(self._flat[pos : pos + p.size].reshape(p.shape))
            pos += p.size
        n = len(self.net.weights)
        self.net.weights = views[:n]
        self.net.biases = views[n:]
        self.m = np.zeros_like(self._flat)
        self.v = np.zeros_like(self._flat)

    def apply(self, grads: list[np.ndarray]) -> None:
        self.step += 1
        g = np.concatenate([a.ravel() for a in grads])
        if self.grad_clip > 0:
            norm = float(np.sqrt(g @ g))
            if norm > self.grad_clip:
                g *= self.grad_clip / norm
        c1 = 1.0 - self.beta1**self.step
        c2 = 1.0 - self.beta2**self.step
        _adam_kernel(self._flat, self.m, self.v, g, self.learning_rate,
                     self.beta1, self.beta2, self.eps, c1, c2)


@njit(cache=True)
def _adam_kernel(flat, m, v, g, lr, beta1, beta2, eps, c1, c2):
    for k in range(flat.size):
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k]
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
        flat[k] -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)


def batch_loss_gradients(
    net: QNetwork, states: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error on the selected action's Q-value, with gradients.

    Non-selected outputs receive zero gradient. Returns (loss, grads) with
    grads ordered as net.weights + net.biases.
    """
    B = states.shape[0]
    activations = [np.asarray(states, dtype=float)]
    h = activations[0]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    q = h @ net.weights[-1] + net.biases[-1]

    rows = np.arange(B)
    err = q[rows, actions] - targets
    loss = float(np.mean(err**2))

    delta = np.zeros_like(q)
    delta[rows, actions] = 2.0 * err / B

    w_grads: list[np.ndarray] = [None] * len(net.weights)
    b_grads: list[np.ndarray] = [None] * len(net.biases)
    for layer in range(len(net.weights) - 1, -1, -1):
        a = activations[layer]
        w_grads[layer] = a.T @ delta
        b_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer].T) * (a > 0)
    return loss, w_grads + b_grads


def train_step(
    net: QNetwork,
    adam: AdamState,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> float:
    """One Adam update on a minibatch; returns the mean loss."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    if states.shape[0] < 1:
        raise ValueError("batch must contain at least one observation")
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite training target")
    loss, grads = batch_loss_gradients(net, states, actions, targets)
    adam.apply(grads)
    return loss


def save_weights(
    net: QNetwork, path: str | Path, metadata: dict | None = None
) -> None:
    """Write the binary checkpoint and its JSON sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(net.dims)))
        fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    sidecar = {
        "format_version": _FORMAT_VERSION,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "strategies": ["rand1", "rand2", "rand_to_best2", "curr_to_rand1"],
        "dims": list(net.dims),
    }
    sidecar.update(metadata or {})
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_weights(path: str | Path) -> tuple[QNetwork, dict]:
    """Read a checkpoint; returns (network, sidecar metadata)."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise CheckpointError(f"missing checkpoint sidecar {sidecar_path}")
    metadata = json.loads(sidecar_path.read_text())
    if metadata.get("format_version") != _FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {metadata.get('format_version')!r}"
        )
    if metadata.get("feature_layout_version") != FEATURE_LAYOUT_VERSION:
        raise CheckpointError(
            "feature layout version mismatch: checkpoint has "
            f"{metadata.get('feature_layout_version')!r}, "
            f"expected {FEATURE_LAYOUT_VERSION}"
        )

    data = path.read_bytes()
    try:
        if data[:4] != _MAGIC:
            raise CheckpointError(f"{path}: bad magic bytes")
        fmt, n_dims = struct.unpack_from("<II", data, 4)
        if fmt != _FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported binary format {fmt}")
        dims = struct.unpack_from(f"<{n_dims}I", data, 12)
        offset = 12 + 4 * n_dims
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            n = fan_in * fan_out
            w = np.frombuffer(data, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
            offset += 8 * fan_out
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(b.copy())
        if offset != len(data):
            raise CheckpointError(f"{path}: trailing bytes in checkpoint")
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint: {exc}") from None
    return QNetwork(weights, biases), metadata
