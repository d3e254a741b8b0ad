"""Minimal fully-connected network with reverse-mode gradients.

This is the substrate for both the ratio classifier and the sampler
network. It supports exactly what the transport procedure needs: batched
forward evaluation, gradients of sum(upstream * output) with respect to
the flat parameter vector AND with respect to the input batch (the latter
feeds the spatial gradient of the estimated density ratio), and RMSProp
updates. No convolutions, no normalization layers, CPU numpy only.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_count, check_rng

_MAGIC = b"MLPCKPT1"

_ACTIVATIONS = ("relu", "tanh", "identity")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}; valid: {', '.join(_ACTIVATIONS)}")


def _act_grad(name, z, a):
    # derivative of the activation, from preactivation z and output a
    if name == "relu":
        return (z > 0).astype(np.float64)  # subgradient at 0 is 0
    if name == "tanh":
        return 1.0 - a * a
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class RmsPropConfig:
    learning_rate: float = 1e-4
    decay: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must lie in (0, 1), got {self.decay}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


class Mlp:
    """Fully-connected network with a flat parameter vector.

    ``layer_sizes`` lists the widths [d_in, h_1, ..., d_out]. Hidden layers
    use ``hidden_activation`` (one name, or one per hidden layer); the
    output layer uses ``output_activation`` ("identity" or "tanh").
    Weights are He-uniform for relu layers and Xavier-uniform otherwise;
    biases start at zero. Initialization is seeded via ``rng``.
    """

    def __init__(self, layer_sizes, hidden_activation="relu", output_activation="identity", rng=0):
        sizes = [check_count(s, "layer size", minimum=1) for s in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        n_hidden = len(sizes) - 2
        if isinstance(hidden_activation, str):
            hidden = [hidden_activation] * n_hidden
        else:
            hidden = list(hidden_activation)
            if len(hidden) != n_hidden:
                raise ValueError(f"expected {n_hidden} hidden activations, got {len(hidden)}")
        if output_activation not in ("identity", "tanh"):
            raise ValueError(f"output activation must be identity or tanh, got {output_activation!r}")
        for name in hidden:
            _act(name, np.zeros(1))
        self.layer_sizes = sizes
        self.activations = hidden + [output_activation]

        self._spans = []
        offset = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self._spans.append((offset, fan_in, fan_out))
            offset += (fan_in + 1) * fan_out
        self.params = np.zeros(offset)
        self.sq_grad_avg = np.zeros(offset)
        self._init_params(check_rng(rng))

    def _init_params(self, rng):
        for (offset, fan_in, fan_out), act in zip(self._spans, self.activations):
            if act == "relu":
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.params[offset : offset + fan_in * fan_out] = w.ravel()
            # biases stay zero

    @property
    def n_params(self):
        return self.params.shape[0]

    @property
    def dim_in(self):
        return self.layer_sizes[0]

    @property
    def dim_out(self):
        return self.layer_sizes[-1]

    def _weights(self, i):
        offset, fan_in, fan_out = self._spans[i]
        w = self.params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        b = self.params[offset + fan_in * fan_out : offset + (fan_in + 1) * fan_out]
        return w, b

    def _check_batch(self, batch):
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim_in:
            raise ValueError(
                f"batch must have shape (n, {self.dim_in}), got {np.asarray(batch).shape}"
            )
        return x

    def _trace(self, batch):
        a = self._check_batch(batch)
        acts, pres = [a], []
        for i, name in enumerate(self.activations):
            w, b = self._weights(i)
            z = a @ w + b
            a = _act(name, z)
            pres.append(z)
            acts.append(a)
        return acts, pres

    def forward(self, batch):
        """Evaluate the network on a batch of shape (n, d_in)."""
        acts, _ = self._trace(batch)
        return acts[-1]

    def _backprop(self, batch, upstream):
        acts, pres = self._trace(batch)
        up = np.asarray(upstream, dtype=np.float64)
        if up.shape != acts[-1].shape:
            raise ValueError(f"upstream must have shape {acts[-1].shape}, got {up.shape}")
        grad = np.zeros_like(self.params)
        delta = up * _act_grad(self.activations[-1], pres[-1], acts[-1])
        for i in range(len(self._spans) - 1, -1, -1):
            offset, fan_in, fan_out = self._spans[i]
            w, _ = self._weights(i)
            grad[offset : offset + fan_in * fan_out] = (acts[i].T @ delta).ravel()
            grad[offset + fan_in * fan_out : offset + (fan_in + 1) * fan_out] = delta.sum(axis=0)
            delta = delta @ w.T
            if i > 0:
                delta = delta * _act_grad(self.activations[i - 1], pres[i - 1], acts[i])
        return grad, delta

    def grad_params(self, batch, upstream):
        """Gradient of sum(upstream * forward(batch)) w.r.t. the flat parameters."""
        return self._backprop(batch, upstream)[0]

    def grad_input(self, batch, upstream):
        """Gradient of sum(upstream * forward(batch)) w.r.t. the input batch."""
        return self._backprop(batch, upstream)[1]

    def rmsprop_step(self, grad, config):
        """One RMSProp update in place; returns self."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.params.shape:
            raise ValueError(f"gradient has length {grad.shape}, expected {self.params.shape}")
        self.sq_grad_avg *= config.decay
        self.sq_grad_avg += (1.0 - config.decay) * grad * grad
        self.params -= config.learning_rate * grad / (np.sqrt(self.sq_grad_avg) + config.epsilon)
        return self

    def copy(self):
        clone = Mlp.__new__(Mlp)
        clone.layer_sizes = list(self.layer_sizes)
        clone.activations = list(self.activations)
        clone._spans = list(self._spans)
        clone.params = self.params.copy()
        clone.sq_grad_avg = self.sq_grad_avg.copy()
        return clone

    def save(self, path):
        """Write parameters as little-endian float64 after a JSON header."""
        header = json.dumps(
            {
                "layer_sizes": self.layer_sizes,
                "hidden_activations": self.activations[:-1],
                "output_activation": self.activations[-1],
            }
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise ValueError(f"{path} is not a network checkpoint")
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            net = cls(
                header["layer_sizes"],
                hidden_activation=header["hidden_activations"],
                output_activation=header["output_activation"],
            )
            raw = fh.read(net.n_params * 8)
        params = np.frombuffer(raw, dtype="<f8")
        if params.shape[0] != net.n_params:
            raise ValueError(f"{path} holds {params.shape[0]} parameters, expected {net.n_params}")
        net.params = params.astype(np.float64)
        return net
