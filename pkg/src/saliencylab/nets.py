"""Network descriptions, parameter containers, and forward execution.

A `NetworkSpec` is an ordered tuple of layer descriptors over an (H, W,
channels) input. Parameterized descriptors group into *attribution units*:
a conv (with an immediately following frozen batchnorm fused in), a dense
layer, or a skip-add block, indexed 1..L in network order; index 0 is the
input itself. Each unit's pre-activation output is retained by the graph
path so per-layer attributions can read both the activity and its gradient.

Bias-role parameters are dense/conv biases plus batchnorm beta and mean
(gamma and var are scale-role and stay untouched by `zero_bias`).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from . import autodiff as ad
from . import functional as F
from . import tensorfile

Array = np.ndarray

BIAS_ROLES = ("bias", "beta", "mean")


# ---------------------------------------------------------------------------
# layer descriptors


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    bias: bool = True


@dataclass(frozen=True)
class Dense:
    out_features: int
    bias: bool = True


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int


@dataclass(frozen=True)
class BatchNorm:
    eps: float = 1e-5


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class SkipBlock:
    """Residual block: output = run(body, x) + run(shortcut, x).

    An empty shortcut means identity. Both arms must produce equal shapes."""
    body: tuple
    shortcut: tuple = ()


_KINDS = {"conv": Conv, "dense": Dense, "relu": Relu, "maxpool": MaxPool,
          "batchnorm_frozen": BatchNorm, "flatten": Flatten, "skip": SkipBlock}
_KIND_OF = {cls: kind for kind, cls in _KINDS.items()}


def _layer_to_dict(layer) -> dict:
    d = {"kind": _KIND_OF[type(layer)]}
    if isinstance(layer, SkipBlock):
        d["body"] = [_layer_to_dict(x) for x in layer.body]
        d["shortcut"] = [_layer_to_dict(x) for x in layer.shortcut]
    else:
        for f in fields(layer):
            d[f.name] = getattr(layer, f.name)
    return d


def _layer_from_dict(d: dict):
    cls = _KINDS[d["kind"]]
    if cls is SkipBlock:
        return SkipBlock(body=tuple(_layer_from_dict(x) for x in d["body"]),
                         shortcut=tuple(_layer_from_dict(x) for x in d["shortcut"]))
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    return cls(**kwargs)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]  # (H, W, channels)
    classes: int
    layers: tuple

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "classes": self.classes,
                "layers": [_layer_to_dict(x) for x in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(input_shape=tuple(d["input_shape"]), classes=d["classes"],
                   layers=tuple(_layer_from_dict(x) for x in d["layers"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# shape inference and parameter layout
#
# Shapes during the walk are (c, h, w) for spatial data and (k,) after
# flatten. Walks yield (name, shape) for every parameter in a deterministic
# order; the same walk validates layer composition.


def _shape_after(layer, shape, where: str):
    if isinstance(layer, Conv):
        if len(shape) != 3:
            raise ValueError(f"{where}: conv requires spatial input, got shape {shape}")
        c, h, w = shape
        oh = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
        ow = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ValueError(
                f"{where}: conv output extent ({oh}, {ow}) < 1 for input ({h}, {w})")
        return (layer.out_channels, oh, ow)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ValueError(f"{where}: dense requires flattened input, got shape {shape}")
        return (layer.out_features,)
    if isinstance(layer, MaxPool):
        if len(shape) != 3:
            raise ValueError(f"{where}: maxpool requires spatial input, got shape {shape}")
        c, h, w = shape
        if layer.window > h or layer.window > w:
            raise ValueError(f"{where}: pool window {layer.window} exceeds extent ({h}, {w})")
        return (c, (h - layer.window) // layer.stride + 1,
                (w - layer.window) // layer.stride + 1)
    if isinstance(layer, Flatten):
        if len(shape) != 3:
            raise ValueError(f"{where}: flatten requires spatial input, got shape {shape}")
        return (int(np.prod(shape)),)
    if isinstance(layer, (Relu, BatchNorm)):
        return shape
    if isinstance(layer, SkipBlock):
        body = shape
        for j, inner in enumerate(layer.body):
            body = _shape_after(inner, body, f"{where}.body[{j}] ({_KIND_OF[type(inner)]})")
        short = shape
        for j, inner in enumerate(layer.shortcut):
            short = _shape_after(inner, short, f"{where}.shortcut[{j}] ({_KIND_OF[type(inner)]})")
        if body != short:
            raise ValueError(
                f"{where}: skip-add arms disagree, body {body} vs shortcut {short}")
        return body
    raise TypeError(f"{where}: unknown layer {layer!r}")


def _walk_params(layers, shape, prefix) -> Iterable[tuple[str, tuple]]:
    """Yield (parameter name, shape) pairs; raises on a non-composing spec."""
    for i, layer in enumerate(layers):
        where = f"{prefix}[{i}] ({_KIND_OF[type(layer)]})"
        if isinstance(layer, Conv):
            yield f"{prefix}.{i}.kernel", (layer.out_channels, shape[0], layer.kernel, layer.kernel)
            if layer.bias:
                yield f"{prefix}.{i}.bias", (layer.out_channels,)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ValueError(f"{where}: dense requires flattened input, got shape {shape}")
            yield f"{prefix}.{i}.weight", (layer.out_features, shape[0])
            if layer.bias:
                yield f"{prefix}.{i}.bias", (layer.out_features,)
        elif isinstance(layer, BatchNorm):
            for p in ("gamma", "beta", "mean", "var"):
                yield f"{prefix}.{i}.{p}", (shape[0],)
        elif isinstance(layer, SkipBlock):
            yield from _walk_params(layer.body, shape, f"{prefix}.{i}.body")
            yield from _walk_params(layer.shortcut, shape, f"{prefix}.{i}.shortcut")
        shape = _shape_after(layer, shape, where)


def _validate_spec(spec: NetworkSpec) -> tuple:
    h, w, ch = spec.input_shape
    shape = (ch, h, w)
    for i, layer in enumerate(spec.layers):
        shape = _shape_after(layer, shape, f"layers[{i}] ({_KIND_OF[type(layer)]})")
    if shape != (spec.classes,):
        raise ValueError(
            f"spec output shape {shape} does not match ({spec.classes},) classes")
    return shape


def parameter_shapes(spec: NetworkSpec) -> dict[str, tuple]:
    _validate_spec(spec)
    h, w, ch = spec.input_shape
    return dict(_walk_params(spec.layers, (ch, h, w), "layers"))


def parameter_count(spec: NetworkSpec) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(spec).values())


def param_role(name: str) -> str:
    return name.rsplit(".", 1)[1]


# ---------------------------------------------------------------------------
# checkpoint


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: dict[str, Array]

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.spec, {k: v.copy() for k, v in self.params.items()})

    def save(self, path):
        meta = {"kind": "checkpoint", "spec": self.spec.to_dict(),
                "fingerprint": self.spec.fingerprint()}
        tensorfile.save_tensors(path, self.params, meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, meta = tensorfile.load_tensors(path)
        if meta.get("kind") != "checkpoint":
            raise ValueError(f"{path}: not a checkpoint file (kind={meta.get('kind')!r})")
        spec = NetworkSpec.from_dict(meta["spec"])
        if meta.get("fingerprint") != spec.fingerprint():
            raise ValueError(f"{path}: spec fingerprint mismatch")
        expected = parameter_shapes(spec)
        for name, shape in expected.items():
            if name not in tensors:
                raise ValueError(f"{path}: missing parameter {name}")
            if tensors[name].shape != shape:
                raise ValueError(
                    f"{path}: parameter {name} has shape {tensors[name].shape}, expected {shape}")
        extra = set(tensors) - set(expected)
        if extra:
            raise ValueError(f"{path}: unexpected parameters {sorted(extra)}")
        return cls(spec, tensors)


def build_network(spec: NetworkSpec, init_seed: int = 0) -> Checkpoint:
    """He fan-in initialization for weights, zero biases, identity batchnorm."""
    shapes = parameter_shapes(spec)
    rng = np.random.default_rng(init_seed)
    params = {}
    for name, shape in shapes.items():  # insertion order == walk order
        role = param_role(name)
        if role == "kernel":
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
        elif role == "weight":
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), shape)
        elif role in ("bias", "beta", "mean"):
            params[name] = np.zeros(shape)
        elif role == "gamma":
            params[name] = np.ones(shape)
        elif role == "var":
            params[name] = np.ones(shape)
        else:  # pragma: no cover
            raise ValueError(f"unknown parameter role in {name}")
    return Checkpoint(spec, params)


def zero_bias(checkpoint: Checkpoint) -> Checkpoint:
    """Zero every bias-role parameter (conv/dense bias, batchnorm beta and
    mean); gamma and var are left untouched."""
    out = checkpoint.copy()
    for name in out.params:
        if param_role(name) in BIAS_ROLES:
            out.params[name] = np.zeros_like(out.params[name])
    return out


# ---------------------------------------------------------------------------
# forward execution (shared walker; graph or plain arrays)


class _FastOps:
    wants_graph = False

    def param(self, name, arr):
        return arr

    def make_input(self, x):
        return x

    def value(self, h):
        return h

    conv2d = staticmethod(F.conv2d)
    relu = staticmethod(F.relu)
    maxpool2d = staticmethod(F.maxpool2d)
    dense = staticmethod(F.dense)
    batchnorm = staticmethod(F.batchnorm)
    flatten = staticmethod(F.flatten)

    @staticmethod
    def add(a, b):
        return a + b


class _GraphOps:
    wants_graph = True

    def __init__(self):
        self.param_nodes: dict[str, ad.Node] = {}
        self.input_node: ad.Node | None = None

    def param(self, name, arr):
        node = ad.Node(arr, op=f"param:{name}")
        self.param_nodes[name] = node
        return node

    def make_input(self, x):
        self.input_node = ad.Node(x, op="input")
        return self.input_node

    def value(self, h):
        return h.data

    conv2d = staticmethod(ad.conv2d)
    relu = staticmethod(ad.relu)
    maxpool2d = staticmethod(ad.maxpool2d)
    dense = staticmethod(ad.dense)
    batchnorm = staticmethod(ad.batchnorm_frozen)
    flatten = staticmethod(ad.flatten)
    add = staticmethod(ad.add)


@dataclass
class UnitTrace:
    index: int               # 1..L
    name: str
    output: object           # unit's pre-activation output (Node on graph path)
    spatial: bool
    bias_sites: list         # [(handle, effective bias per channel)]
    bias_params: list        # bias-role parameter names inside this unit


@dataclass
class ForwardRun:
    spec: NetworkSpec
    input: object
    units: list[UnitTrace]
    logits: object
    param_nodes: dict | None


def _segments(layers) -> list[tuple[str, list]]:
    """Group layers into ("unit", [(idx, layer), ...]) and ("glue", (idx, layer)).

    A frozen batchnorm immediately following a conv/dense joins its unit."""
    segs = []
    i = 0
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, (Conv, Dense, BatchNorm, SkipBlock)):
            entry = [(i, layer)]
            if (isinstance(layer, (Conv, Dense)) and i + 1 < len(layers)
                    and isinstance(layers[i + 1], BatchNorm)):
                entry.append((i + 1, layers[i + 1]))
                i += 1
            segs.append(("unit", entry))
        else:
            segs.append(("glue", (i, layer)))
        i += 1
    return segs


def num_units(spec: NetworkSpec) -> int:
    return sum(1 for kind, _ in _segments(spec.layers) if kind == "unit")


class _UnitSink:
    def __init__(self):
        self.sites = []
        self.bias_params = []

    def add_site(self, handle, beff: Array, names: list[str]):
        self.sites.append((handle, beff))
        self.bias_params.extend(names)


def _apply_glue(ops, layer, x):
    if isinstance(layer, Relu):
        return ops.relu(x)
    if isinstance(layer, MaxPool):
        return ops.maxpool2d(x, layer.window, layer.stride)
    if isinstance(layer, Flatten):
        return ops.flatten(x)
    raise TypeError(f"not a glue layer: {layer!r}")


def _apply_unit(ops, params, entries, prefix, x, sink: _UnitSink):
    idx, layer = entries[0]
    if isinstance(layer, Conv):
        k = ops.param(f"{prefix}.{idx}.kernel", params[f"{prefix}.{idx}.kernel"])
        names = []
        beff = np.zeros(layer.out_channels)
        b = None
        if layer.bias:
            bias_name = f"{prefix}.{idx}.bias"
            b = ops.param(bias_name, params[bias_name])
            beff = params[bias_name]
            names.append(bias_name)
        h = ops.conv2d(x, k, b, layer.stride, layer.padding)
        if len(entries) == 2:
            h, beff, bn_names = _apply_bn(ops, params, entries[1], prefix, h, beff)
            names += bn_names
        sink.add_site(h, beff, names)
        return h
    if isinstance(layer, Dense):
        w = ops.param(f"{prefix}.{idx}.weight", params[f"{prefix}.{idx}.weight"])
        names = []
        beff = np.zeros(layer.out_features)
        b = None
        if layer.bias:
            bias_name = f"{prefix}.{idx}.bias"
            b = ops.param(bias_name, params[bias_name])
            beff = params[bias_name]
            names.append(bias_name)
        h = ops.dense(x, w, b)
        if len(entries) == 2:
            h, beff, bn_names = _apply_bn(ops, params, entries[1], prefix, h, beff)
            names += bn_names
        sink.add_site(h, beff, names)
        return h
    if isinstance(layer, BatchNorm):  # standalone
        h, beff, names = _apply_bn(ops, params, entries[0], prefix, x, None)
        sink.add_site(h, beff, names)
        return h
    if isinstance(layer, SkipBlock):
        body = _run_sequence(ops, params, layer.body, f"{prefix}.{idx}.body", x, sink)
        if layer.shortcut:
            short = _run_sequence(ops, params, layer.shortcut,
                                  f"{prefix}.{idx}.shortcut", x, sink)
        else:
            short = x
        out = ops.add(body, short)
        out_hw = ops.value(out).shape[2:]
        for handle, _ in sink.sites:
            site_hw = ops.value(handle).shape[2:]
            if site_hw != out_hw:
                raise ValueError(
                    f"{prefix}.{idx}: inner affine grid {site_hw} differs from block "
                    f"output grid {out_hw}; skip-block bias maps require equal grids")
        return out
    raise TypeError(f"not a unit layer: {layer!r}")


def _apply_bn(ops, params, entry, prefix, h, beff_in):
    idx, layer = entry
    names = {p: f"{prefix}.{idx}.{p}" for p in ("gamma", "beta", "mean", "var")}
    handles = {p: ops.param(n, params[n]) for p, n in names.items()}
    out = ops.batchnorm(h, handles["gamma"], handles["beta"], handles["mean"],
                        handles["var"], layer.eps)
    gamma, beta = params[names["gamma"]], params[names["beta"]]
    mean, var = params[names["mean"]], params[names["var"]]
    scale = gamma / np.sqrt(var + layer.eps)
    carried = beff_in if beff_in is not None else np.zeros_like(beta)
    beff = scale * (carried - mean) + beta
    return out, beff, [names["beta"], names["mean"]]


def _run_sequence(ops, params, layers, prefix, x, sink: _UnitSink):
    """Inner-mode walk (within a skip block): affine outputs become bias
    sites in the enclosing block's sink."""
    cur = x
    for kind, seg in _segments(layers):
        if kind == "glue":
            cur = _apply_glue(ops, seg[1], cur)
        else:
            cur = _apply_unit(ops, params, seg, prefix, cur, sink)
    return cur


def _execute(spec: NetworkSpec, params: dict, x_nchw: Array, ops) -> ForwardRun:
    cur = ops.make_input(x_nchw)
    units = []
    for kind, seg in _segments(spec.layers):
        if kind == "glue":
            cur = _apply_glue(ops, seg[1], cur)
            continue
        sink = _UnitSink()
        cur = _apply_unit(ops, params, seg, "layers", cur, sink)
        idx0, first = seg[0]
        units.append(UnitTrace(
            index=len(units) + 1,
            name=f"{_KIND_OF[type(first)]}:layers.{idx0}",
            output=cur,
            spatial=ops.value(cur).ndim == 4,
            bias_sites=sink.sites,
            bias_params=sink.bias_params,
        ))
    return ForwardRun(spec=spec, input=ops.input_node if ops.wants_graph else x_nchw,
                      units=units, logits=cur,
                      param_nodes=ops.param_nodes if ops.wants_graph else None)


def _to_nchw(spec: NetworkSpec, x: Array) -> tuple[Array, bool]:
    x = F.as_f64(x)
    h, w, ch = spec.input_shape
    if x.shape == (h, w, ch):
        return np.moveaxis(x, -1, 0)[None], True
    if x.ndim == 4 and x.shape[1:] == (h, w, ch):
        return np.moveaxis(x, -1, 1), False
    raise ValueError(
        f"input shape {x.shape} does not match spec input {(h, w, ch)} "
        f"(optionally with a leading batch axis)")


def forward_logits(checkpoint: Checkpoint, x: Array) -> Array:
    """Pre-softmax class scores; (C,) for a single (H, W, ch) image, (N, C)
    for a batch. Fast path, no graph."""
    xb, single = _to_nchw(checkpoint.spec, x)
    run = _execute(checkpoint.spec, checkpoint.params, xb, _FastOps())
    return run.logits[0] if single else run.logits


def forward_run(checkpoint: Checkpoint, x: Array) -> ForwardRun:
    """Graph-path forward over one (H, W, ch) image, retaining every unit's
    pre-activation output for attribution."""
    xb, single = _to_nchw(checkpoint.spec, x)
    if not single:
        raise ValueError("forward_run expects a single (H, W, channels) image")
    return _execute(checkpoint.spec, checkpoint.params, xb, _GraphOps())


# ---------------------------------------------------------------------------
# checkpoint-level analyses


def topk_accuracy(logits: Array, labels: Array, k: int) -> float:
    """Fraction of rows whose label is among the k largest logits; ties break
    toward the lower class index."""
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float((order == np.asarray(labels)[:, None]).any(axis=1).mean())


def _batched_logits(checkpoint: Checkpoint, images: Array, batch: int = 256) -> Array:
    outs = [forward_logits(checkpoint, images[i:i + batch])
            for i in range(0, images.shape[0], batch)]
    return np.concatenate(outs, axis=0)


def evaluate_topk(checkpoint: Checkpoint, dataset, k: int = 1) -> float:
    if k >= checkpoint.spec.classes:
        raise ValueError(f"k={k} must be < class count {checkpoint.spec.classes}")
    logits = _batched_logits(checkpoint, dataset.images)
    return topk_accuracy(logits, dataset.labels, k)


@dataclass
class SweepTable:
    scales: list[float]
    shifts: list[float]
    top1: Array  # (len(scales), len(shifts))

    def rows(self):
        for i, s in enumerate(self.scales):
            for j, t in enumerate(self.shifts):
                yield {"scale": s, "shift": t, "top1": float(self.top1[i, j])}


def scale_shift_sweep(checkpoint: Checkpoint, dataset, scales, shifts) -> SweepTable:
    """Top-1 accuracy on inputs transformed as scale * x + shift."""
    scales = [float(s) for s in scales]
    shifts = [float(t) for t in shifts]
    if any(s <= 0 for s in scales):
        raise ValueError(f"scales must be positive, got {scales}")
    table = np.zeros((len(scales), len(shifts)))
    for i, s in enumerate(scales):
        for j, t in enumerate(shifts):
            logits = _batched_logits(checkpoint, s * dataset.images + t)
            table[i, j] = topk_accuracy(logits, dataset.labels, 1)
    return SweepTable(scales, shifts, table)


@dataclass(frozen=True)
class RegressionFit:
    alpha: float
    beta: float
    residual_norm: float


def fit_output_regression(vanilla_logits: Array, zero_bias_logits: Array) -> RegressionFit:
    """Least squares of zero-bias outputs over vanilla outputs (per class)."""
    x = F.as_f64(vanilla_logits).ravel()
    y = F.as_f64(zero_bias_logits).ravel()
    if x.shape != y.shape:
        raise ValueError(f"logit vectors differ in length: {x.shape} vs {y.shape}")
    if np.ptp(x) == 0:
        raise ValueError("vanilla logits have zero variance; regression undefined")
    alpha, beta = np.polyfit(x, y, 1)
    residual = float(np.linalg.norm(y - (alpha * x + beta)))
    return RegressionFit(float(alpha), float(beta), residual)


def logit_correlation(ck_a: Checkpoint, ck_b: Checkpoint, images: Array) -> float:
    """Mean per-image Pearson correlation between class-score vectors."""
    la = _batched_logits(ck_a, images)
    lb = _batched_logits(ck_b, images)
    la = la - la.mean(axis=1, keepdims=True)
    lb = lb - lb.mean(axis=1, keepdims=True)
    denom = np.linalg.norm(la, axis=1) * np.linalg.norm(lb, axis=1)
    return float(((la * lb).sum(axis=1) / denom).mean())


# ---------------------------------------------------------------------------
# reference architectures


def linear_classifier(input_shape=(28, 28, 1), classes=10, bias=False) -> NetworkSpec:
    return NetworkSpec(input_shape, classes, (Flatten(), Dense(classes, bias=bias)))


def vgg_mini(input_shape=(16, 16, 1), classes=4, biases=True,
             channels=(8, 16, 32)) -> NetworkSpec:
    """Conv-relu-maxpool stages with a dense head; pooled downsampling."""
    layers: list = []
    for ch in channels:
        layers += [Conv(ch, kernel=3, stride=1, padding=1, bias=biases), Relu(),
                   MaxPool(2, 2)]
    layers += [Flatten(), Dense(classes, bias=biases)]
    return NetworkSpec(input_shape, classes, tuple(layers))


def resnet_mini(input_shape=(16, 16, 1), classes=4, channels=(8, 16, 32)) -> NetworkSpec:
    """Skip-add blocks with stride-2 conv downsampling and frozen batchnorm."""
    first = channels[0]
    layers: list = [Conv(first, kernel=3, stride=1, padding=1, bias=False),
                    BatchNorm(), Relu()]
    for ch in channels[1:]:
        body = (Conv(ch, kernel=3, stride=2, padding=1, bias=False), BatchNorm(), Relu(),
                Conv(ch, kernel=3, stride=1, padding=1, bias=False), BatchNorm())
        shortcut = (Conv(ch, kernel=1, stride=2, padding=0, bias=False), BatchNorm())
        layers += [SkipBlock(body=body, shortcut=shortcut), Relu()]
    layers += [Flatten(), Dense(classes, bias=True)]
    return NetworkSpec(input_shape, classes, tuple(layers))
