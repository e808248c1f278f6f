"""Minimal reverse-mode differentiation over the numpy kernels.

A `Node` wraps one float64 array in the computation graph. Ops build nodes
eagerly (forward values are computed immediately) and attach a closure that
scatters the upstream gradient to the parents. `backward` replays those
closures in reverse topological order, after which every node reachable from
the output carries `grad` with the same shape as its data.

Nodes are treated as immutable once created; a graph is single-writer during
backward. Separate graphs over shared parameter arrays are independent.
"""

from __future__ import annotations

import numpy as np

from . import functional as F

Array = np.ndarray


class Node:
    __slots__ = ("data", "grad", "parents", "op", "_backward")

    def __init__(self, data, parents: tuple = (), op: str = "leaf"):
        self.data = F.as_f64(data)
        self.grad: Array | None = None
        self.parents = parents
        self.op = op
        self._backward = None

    def accumulate(self, g: Array):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.data.shape})"


def topo_order(root: Node) -> list[Node]:
    """Ancestors of `root` in topological order (iterative DFS)."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Node, seed=None):
    """Reverse pass from `root`. `seed` is the upstream gradient (defaults to
    ones of the root's shape); gradients of all ancestors are populated."""
    if seed is None:
        seed = np.ones_like(root.data)
    seed = F.as_f64(seed)
    if seed.shape != root.data.shape:
        raise ValueError(
            f"backward: seed shape {seed.shape} does not match output shape {root.data.shape}")
    order = topo_order(root)
    for node in order:
        node.grad = None
    root.grad = seed
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def backward_class(logits: Node, class_index: int):
    """Seed the reverse pass with one scalar logit f_c (single-image batch)."""
    if logits.data.ndim != 2 or logits.data.shape[0] != 1:
        raise ValueError(
            f"backward_class: expected logits of shape (1, C), got {logits.data.shape}")
    n_classes = logits.data.shape[1]
    if not 0 <= class_index < n_classes:
        raise ValueError(
            f"backward_class: class index {class_index} out of range [0, {n_classes})")
    seed = np.zeros_like(logits.data)
    seed[0, class_index] = 1.0
    backward(logits, seed)


# ---------------------------------------------------------------------------
# graph ops


def _data(x):
    return x.data if isinstance(x, Node) else None


def conv2d(x: Node, kernel: Node, bias: Node | None = None,
           stride: int = 1, padding: int = 0) -> Node:
    b = bias.data if bias is not None else None
    parents = (x, kernel) if bias is None else (x, kernel, bias)
    data, cols = F.conv2d_with_cols(x.data, kernel.data, b, stride, padding)
    out = Node(data, parents, "conv2d")

    def _bw(g):
        dx, dk, db = F.conv2d_backward(g, x.data, kernel.data, stride, padding, cols)
        x.accumulate(dx)
        kernel.accumulate(dk)
        if bias is not None:
            bias.accumulate(db)

    out._backward = _bw
    return out


def relu(x: Node) -> Node:
    out = Node(F.relu(x.data), (x,), "relu")
    out._backward = lambda g: x.accumulate(F.relu_backward(g, x.data))
    return out


def maxpool2d(x: Node, window: int, stride: int) -> Node:
    data, idx = F.maxpool2d_with_indices(x.data, window, stride)
    out = Node(data, (x,), "maxpool2d")
    out._backward = lambda g: x.accumulate(
        F.maxpool2d_backward(g, x.data.shape, idx, window, stride))
    return out


def dense(x: Node, weights: Node, bias: Node | None = None) -> Node:
    b = bias.data if bias is not None else None
    parents = (x, weights) if bias is None else (x, weights, bias)
    out = Node(F.dense(x.data, weights.data, b), parents, "dense")

    def _bw(g):
        dx, dw, db = F.dense_backward(g, x.data, weights.data)
        x.accumulate(dx)
        weights.accumulate(dw)
        if bias is not None:
            bias.accumulate(db)

    out._backward = _bw
    return out


def batchnorm_frozen(x: Node, gamma: Node, beta: Node, mean: Node, var: Node,
                     eps: float = 1e-5) -> Node:
    out = Node(F.batchnorm(x.data, gamma.data, beta.data, mean.data, var.data, eps),
               (x, gamma, beta, mean, var), "batchnorm_frozen")

    def _bw(g):
        dx, dgamma, dbeta, dmean, dvar = F.batchnorm_backward(
            g, x.data, gamma.data, mean.data, var.data, eps)
        x.accumulate(dx)
        gamma.accumulate(dgamma)
        beta.accumulate(dbeta)
        mean.accumulate(dmean)
        var.accumulate(dvar)

    out._backward = _bw
    return out


def add(a: Node, b: Node) -> Node:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = Node(a.data + b.data, (a, b), "add")

    def _bw(g):
        a.accumulate(g)
        b.accumulate(g)

    out._backward = _bw
    return out


def flatten(x: Node) -> Node:
    shape = x.data.shape
    out = Node(F.flatten(x.data), (x,), "flatten")
    out._backward = lambda g: x.accumulate(g.reshape(shape))
    return out


def softmax_cross_entropy(logits: Node, labels: Array) -> Node:
    loss, dlogits = F.cross_entropy(logits.data, labels)
    out = Node(loss, (logits,), "softmax_cross_entropy")
    out._backward = lambda g: logits.accumulate(g * dlogits)
    return out


def soft_cross_entropy(logits: Node, target_probs: Array, temperature: float) -> Node:
    loss, dlogits = F.soft_cross_entropy(logits.data, target_probs, temperature)
    out = Node(loss, (logits,), "soft_cross_entropy")
    out._backward = lambda g: logits.accumulate(g * dlogits)
    return out
