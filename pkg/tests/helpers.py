"""Shared test utilities: random toy specs and parameter randomization."""

from __future__ import annotations

import numpy as np

from saliencylab import nets


def random_conv_spec(rng: np.random.Generator, biases: bool = True,
                     batchnorm: bool = False) -> nets.NetworkSpec:
    """A small random conv net: 1-2 conv stages, optional pool, dense head."""
    size = int(rng.integers(5, 8))
    in_ch = int(rng.integers(1, 3))
    classes = int(rng.integers(2, 5))
    layers: list = []
    n_conv = int(rng.integers(1, 3))
    for _ in range(n_conv):
        ch = int(rng.integers(2, 5))
        layers.append(nets.Conv(ch, kernel=3, stride=1, padding=1, bias=biases))
        if batchnorm:
            layers.append(nets.BatchNorm())
        layers.append(nets.Relu())
    if size % 2 == 0 and rng.random() < 0.5:
        layers.append(nets.MaxPool(2, 2))
    layers += [nets.Flatten(), nets.Dense(classes, bias=biases)]
    return nets.NetworkSpec((size, size, in_ch), classes, tuple(layers))


def randomize_params(checkpoint: nets.Checkpoint, rng: np.random.Generator,
                     bias_scale: float = 0.3) -> nets.Checkpoint:
    """Random weights, nonzero biases, and non-trivial batchnorm statistics."""
    out = checkpoint.copy()
    for name, value in out.params.items():
        role = nets.param_role(name)
        if role in ("kernel", "weight"):
            out.params[name] = rng.normal(0.0, 0.5, value.shape)
        elif role in ("bias", "beta", "mean"):
            out.params[name] = rng.normal(0.0, bias_scale, value.shape)
        elif role == "gamma":
            out.params[name] = rng.uniform(0.5, 1.5, value.shape)
        elif role == "var":
            out.params[name] = rng.uniform(0.5, 2.0, value.shape)
    return out


def random_mlp(rng: np.random.Generator, sizes, biases: bool = True):
    """Dense ReLU MLP spec + randomized checkpoint over a flat input."""
    layers: list = [nets.Flatten()]
    for width in sizes[1:-1]:
        layers += [nets.Dense(width, bias=biases), nets.Relu()]
    layers.append(nets.Dense(sizes[-1], bias=biases))
    spec = nets.NetworkSpec((sizes[0], 1, 1), sizes[-1], tuple(layers))
    return randomize_params(nets.build_network(spec, int(rng.integers(1 << 16))), rng)
