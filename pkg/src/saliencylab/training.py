"""Classifier training: SGD/Adam on softmax cross-entropy.

Batchnorm parameters stay frozen at all times (evaluation semantics); conv
and dense weights and biases are trainable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets

Array = np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    optimizer: str = "adam"  # "sgd" | "adam"
    learning_rate: float = 1e-3
    seed: int = 0


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, Array], grads: dict[str, Array]):
        for name, g in grads.items():
            params[name] = params[name] - self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, Array] = {}
        self.v: dict[str, Array] = {}

    def step(self, params: dict[str, Array], grads: dict[str, Array]):
        self.t += 1
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - self.beta1 ** self.t)
            vhat = v / (1 - self.beta2 ** self.t)
            params[name] = params[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r} (expected 'sgd' or 'adam')")


def trainable_names(checkpoint: nets.Checkpoint) -> list[str]:
    return [n for n in checkpoint.params
            if nets.param_role(n) in ("kernel", "weight", "bias")]


def _loss_and_grads(checkpoint, xb, yb, names):
    run = nets._execute(checkpoint.spec, checkpoint.params,
                        np.moveaxis(xb, -1, 1), nets._GraphOps())
    loss = ad.softmax_cross_entropy(run.logits, yb)
    ad.backward(loss, np.ones(()))
    grads = {}
    for name in names:
        node = run.param_nodes[name]
        grads[name] = node.grad if node.grad is not None else np.zeros_like(node.data)
    return float(loss.data), grads


def train_classifier(checkpoint: nets.Checkpoint, dataset,
                     config: TrainConfig) -> tuple[nets.Checkpoint, list[float]]:
    """Minibatch training; returns the updated checkpoint and per-step loss
    history. A non-finite loss aborts, returning the last good parameters."""
    if dataset.split != "train":
        raise ValueError(f"train_classifier requires a train split, got {dataset.split!r}")
    student = checkpoint.copy()
    names = trainable_names(student)
    opt = make_optimizer(config.optimizer, config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    n = len(dataset)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            last_good = {k: student.params[k].copy() for k in names}
            loss, grads = _loss_and_grads(student, dataset.images[idx],
                                          dataset.labels[idx], names)
            if not np.isfinite(loss):
                student.params.update(last_good)
                return student, history
            history.append(loss)
            if config.learning_rate != 0.0:
                opt.step(student.params, grads)
    return student, history
