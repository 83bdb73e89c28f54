"""Multilayer perceptron built on the autodiff Tensor."""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor, transpose

__all__ = ["Linear", "Mlp", "ACTIVATIONS", "mlp_forward", "save_mlp", "load_mlp"]

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "identity")


def _apply_activation(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return x.relu()
    if name == "leaky_relu":
        return x.leaky_relu(0.01)
    if name == "tanh":
        return x.tanh()
    if name == "identity":
        return x
    raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


class Linear:
    """Affine layer y = x @ W.T + b with weight shape [out_dim, in_dim]."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.data.ndim != 2 or bias.data.ndim != 1:
            raise ValueError("weight must be 2-D and bias 1-D")
        if weight.data.shape[0] != bias.data.shape[0]:
            raise ValueError("weight rows must match bias length")
        self.weight = weight
        self.bias = bias

    @property
    def in_dim(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.data.shape[0]

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, rng: np.random.Generator, name: str) -> "Linear":
        # uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); bias starts at zero
        a = np.sqrt(6.0 / (in_dim + out_dim))
        weight = Tensor(rng.uniform(-a, a, size=(out_dim, in_dim)), requires_grad=True, name=f"{name}.weight")
        bias = Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.bias")
        return cls(weight, bias)


class Mlp:
    """Stack of Linear layers with one activation name per layer."""

    def __init__(self, layers: list[Linear], activations: list[str]):
        if len(layers) != len(activations):
            raise ValueError("need one activation per layer")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}; expected one of {ACTIVATIONS}")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ValueError(
                    f"layer {i} expects input dim {layers[i].in_dim} "
                    f"but layer {i - 1} produces {layers[i - 1].out_dim}"
                )
        self.layers = layers
        self.activations = list(activations)

    @classmethod
    def initialize(
        cls,
        dims: list[int],
        activations: list[str],
        rng: np.random.Generator,
        name: str,
    ) -> "Mlp":
        """Build from a dim chain [in, h1, ..., out]; len(activations) == len(dims) - 1."""
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = [
            Linear.initialize(dims[i], dims[i + 1], rng, name=f"{name}.layer{i}")
            for i in range(len(dims) - 1)
        ]
        return cls(layers, activations)

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2:
            raise ValueError("input must be 2-D [batch, features]")
        if x.data.shape[1] != self.layers[0].in_dim:
            raise ValueError(
                f"input has {x.data.shape[1]} features but layer 0 expects {self.layers[0].in_dim}"
            )
        h = x
        for layer, act in zip(self.layers, self.activations):
            h = h @ transpose(layer.weight) + layer.bias
            h = _apply_activation(h, act)
        return h

    __call__ = forward

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


def mlp_forward(mlp: Mlp, x: Tensor) -> Tensor:
    """Functional alias for Mlp.forward."""
    return mlp.forward(x)


def save_mlp(mlp: Mlp, path: str) -> None:
    """JSON checkpoint of a bare Mlp (exact float64 round trip)."""
    payload = {
        "format_version": 1,
        "activations": mlp.activations,
        "layers": [
            {
                "name": layer.weight.name.rsplit(".", 1)[0],
                "weight": layer.weight.data.tolist(),
                "bias": layer.bias.data.tolist(),
            }
            for layer in mlp.layers
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_mlp(path: str) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise ValueError(f"unsupported mlp checkpoint version: {payload.get('format_version')!r}")
    layers = []
    for entry in payload["layers"]:
        weight = Tensor(np.asarray(entry["weight"]), requires_grad=True, name=f"{entry['name']}.weight")
        bias = Tensor(np.asarray(entry["bias"]), requires_grad=True, name=f"{entry['name']}.bias")
        layers.append(Linear(weight, bias))
    return Mlp(layers, payload["activations"])
