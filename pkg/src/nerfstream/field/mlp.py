"""Dense networks with hand-written reverse mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    pass


@dataclass
class MLPParams:
    """Layers as ``(weight, bias)`` pairs; weight is (out, in)."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for k, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ConfigurationError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[1] != self.layers[k - 1][0].shape[0]:
                raise ConfigurationError(f"layer {k} expects {w.shape[1]} inputs, previous emits {self.layers[k - 1][0].shape[0]}")

    @property
    def in_width(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_width(self) -> int:
        return self.layers[-1][0].shape[0]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in self.layers:
            out.extend((w, b))
        return out

    @classmethod
    def from_tensors(cls, tensors) -> "MLPParams":
        ts = list(tensors)
        return cls([(np.asarray(ts[i], dtype=np.float64), np.asarray(ts[i + 1], dtype=np.float64)) for i in range(0, len(ts), 2)])

    def copy(self) -> "MLPParams":
        return MLPParams([(w.copy(), b.copy()) for w, b in self.layers])

    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


def init_mlp(widths: list[int], rng: np.random.Generator) -> MLPParams:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-lim, lim, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return MLPParams(layers)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def mlp_forward(params: MLPParams, x: np.ndarray, cache: list | None = None) -> np.ndarray:
    """Apply the network to ``x`` of shape (..., in).

    Hidden layers use tanh, the last layer is linear. When ``cache`` is a list
    it receives the per-layer inputs needed by :func:`mlp_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_width:
        raise ConfigurationError(f"input width {x.shape[-1]} != network input width {params.in_width}")
    h = x
    last = len(params.layers) - 1
    for k, (w, b) in enumerate(params.layers):
        if cache is not None:
            cache.append(h)
        h = h @ w.T + b
        if k != last:
            h = np.tanh(h)
    return h


def mlp_backward(params: MLPParams, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients for every tensor (weight, bias, weight, bias, ...) given dL/d(output).

    ``cache`` is the list filled by :func:`mlp_forward`; inputs are flattened to 2-D.
    """
    g = grad_out.reshape(-1, grad_out.shape[-1])
    grads: list[np.ndarray] = [None] * (2 * len(params.layers))
    for k in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[k]
        h_in = cache[k].reshape(-1, cache[k].shape[-1])
        grads[2 * k] = g.T @ h_in
        grads[2 * k + 1] = g.sum(axis=0)
        if k:
            # cache[k] is tanh output of layer k-1
            g = (g @ w) * (1.0 - h_in * h_in)
    return grads
