"""Attribution and saliency construction.

All maps decompose a single pre-softmax class score f_c. Layer indices run
0..L where 0 is the input (gradient x input) and 1..L are the network's
attribution units. Activity attributions multiply a unit's pre-activation
output with its gradient, channel-summed per spatial position; bias
attributions multiply each position's gradient with the unit's effective
bias. For any layer l the identity

    f_c = sum(activity map at l) + sum over l' > l of sum(bias map at l')

holds to floating-point precision, giving L+1 exact decompositions of f_c.

The psi transform (abs -> min-max rescale -> corner-aligned upscale) turns a
signed map into a non-negative, input-sized saliency contribution. A rescale
of a constant map is defined as all zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .resize import resize_map

Array = np.ndarray


@dataclass
class AttributionMap:
    class_index: int
    layer: int                 # 0..L, 0 = input
    kind: str                  # "activity" | "bias"
    values: Array              # signed, (h, w) on the layer's grid
    warning: str | None = None

    def total(self) -> float:
        return float(self.values.sum())


@dataclass
class SaliencyMap:
    values: Array              # non-negative, input-sized
    provenance: str
    warning: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.min() < 0:
            raise ValueError(
                f"saliency values must be non-negative, got min {self.values.min()}")


@dataclass
class DecompositionReport:
    class_index: int
    logit: float
    activity_sums: list[float]   # index l = 0..L
    bias_sums: list[float]       # index l-1 for units 1..L
    residuals: list[float]       # index l = 0..L

    @property
    def num_units(self) -> int:
        return len(self.bias_sums)


@dataclass(frozen=True)
class PsiConfig:
    use_abs: bool = True
    use_rescale: bool = True
    resize_mode: str = "bilinear"       # "bilinear" | "linear"
    granularity: str = "per-layer"      # "per-layer" | "per-feature"

    def __post_init__(self):
        if not (self.use_abs or self.use_rescale):
            raise ValueError("psi needs use_abs or use_rescale to yield a saliency map")
        if self.granularity not in ("per-layer", "per-feature"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.granularity == "per-feature" and not self.use_rescale:
            raise ValueError("per-feature granularity requires use_rescale")

    def label(self) -> str:
        parts = [p for p, on in (("abs", self.use_abs), ("rescale", self.use_rescale)) if on]
        return "+".join(parts + [self.resize_mode])


# the layer-aggregation pipeline (abs -> rescale -> bilinear)
PSI_AGGREGATE = PsiConfig()
# single-layer comparisons (abs -> bilinear; rescale is order-preserving on one map)
PSI_SINGLE_LAYER = PsiConfig(use_rescale=False)


def rescale(values: Array) -> Array:
    """Min-max squash to [0, 1]; a constant map maps to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    span = values.max() - values.min()
    if span == 0:
        return np.zeros_like(values)
    return (values - values.min()) / span


def psi(map_or_values, config: PsiConfig, target: tuple[int, int]) -> SaliencyMap:
    """abs (optional) -> rescale (optional) -> upscale to `target`."""
    if isinstance(map_or_values, AttributionMap):
        values, layer = map_or_values.values, map_or_values.layer
        tag = f"psi[{config.label()}](l={layer})"
    else:
        values = np.asarray(map_or_values, dtype=np.float64)
        tag = f"psi[{config.label()}]"
    if config.use_abs:
        values = np.abs(values)
    if config.use_rescale:
        values = rescale(values)
    return SaliencyMap(resize_map(values, target, config.resize_mode), tag)


# ---------------------------------------------------------------------------
# one forward + one class-seeded backward, with per-layer readers


class AttributionSession:
    def __init__(self, checkpoint: nets.Checkpoint, x: Array, class_index: int):
        self.checkpoint = checkpoint
        self.x = np.asarray(x, dtype=np.float64)
        self.class_index = class_index
        self.run = nets.forward_run(checkpoint, x)
        ad.backward_class(self.run.logits, class_index)

    @property
    def num_units(self) -> int:
        return len(self.run.units)

    @property
    def input_hw(self) -> tuple[int, int]:
        return self.checkpoint.spec.input_shape[:2]

    def logit(self) -> float:
        return float(self.run.logits.data[0, self.class_index])

    def unit(self, layer: int) -> nets.UnitTrace:
        if not 1 <= layer <= self.num_units:
            raise ValueError(f"layer {layer} out of range [1, {self.num_units}]")
        return self.run.units[layer - 1]

    def input_gradient(self) -> Array:
        g = self.run.input.grad
        if g is None:
            g = np.zeros_like(self.run.input.data)
        return np.moveaxis(g[0], 0, -1)  # (H, W, channels)

    def gradient_times_input(self) -> Array:
        return (self.x * self.input_gradient()).sum(axis=-1)

    @staticmethod
    def _grad_of(node: ad.Node) -> Array:
        return node.grad if node.grad is not None else np.zeros_like(node.data)

    def activity_values(self, layer: int) -> Array:
        unit = self.unit(layer)
        h = unit.output.data[0]
        g = self._grad_of(unit.output)[0]
        if unit.spatial:
            return np.einsum("chw,chw->hw", h, g)
        return np.array([[(h * g).sum()]])

    def bias_values(self, layer: int) -> tuple[Array, str | None]:
        unit = self.unit(layer)
        if unit.spatial:
            out_hw = unit.output.data.shape[2:]
            values = np.zeros(out_hw)
        else:
            values = np.zeros((1, 1))
        if not unit.bias_params:
            return values, f"layer {layer} ({unit.name}) has no bias parameters"
        for handle, beff in unit.bias_sites:
            g = self._grad_of(handle)[0]
            if g.ndim == 3:
                values = values + np.einsum("chw,c->hw", g, beff)
            else:
                values = values + (g * beff).sum()
        return values, None

    def bias_total_from_params(self, layer: int) -> float:
        """Parameter-sum view: sum of b * df/db over the unit's bias-role
        parameters. Equals the spatial map's total."""
        unit = self.unit(layer)
        total = 0.0
        for name in unit.bias_params:
            node = self.run.param_nodes[name]
            total += float((node.data * self._grad_of(node)).sum())
        return total


# ---------------------------------------------------------------------------
# public operations


def gradient_saliency(checkpoint, x, class_index) -> SaliencyMap:
    """Channel-summed absolute input gradient."""
    session = AttributionSession(checkpoint, x, class_index)
    values = np.abs(session.input_gradient()).sum(axis=-1)
    return SaliencyMap(values, "gradient")


def gradient_times_input(checkpoint, x, class_index) -> AttributionMap:
    """Input attribution (layer 0): x * df/dx, channel-summed."""
    session = AttributionSession(checkpoint, x, class_index)
    return AttributionMap(class_index, 0, "activity", session.gradient_times_input())


def activity_attribution(checkpoint, x, class_index, layer: int) -> AttributionMap:
    session = AttributionSession(checkpoint, x, class_index)
    return AttributionMap(class_index, layer, "activity", session.activity_values(layer))


def bias_attribution(checkpoint, x, class_index, layer: int) -> AttributionMap:
    session = AttributionSession(checkpoint, x, class_index)
    values, warning = session.bias_values(layer)
    return AttributionMap(class_index, layer, "bias", values, warning)


def decomposition_report(checkpoint, x, class_index) -> DecompositionReport:
    session = AttributionSession(checkpoint, x, class_index)
    fc = session.logit()
    n = session.num_units
    activity = [float(session.gradient_times_input().sum())]
    activity += [float(session.activity_values(l).sum()) for l in range(1, n + 1)]
    bias = [float(session.bias_values(l)[0].sum()) for l in range(1, n + 1)]
    residuals = []
    for l in range(n + 1):
        reconstruction = activity[l] + sum(bias[l:])  # bias[l:] are units l+1..L
        residuals.append(abs(fc - reconstruction))
    return DecompositionReport(class_index, fc, activity, bias, residuals)


def fullgrad_saliency(checkpoint, x, class_index,
                      granularity: str = "per-feature",
                      resize_mode: str = "bilinear") -> SaliencyMap:
    """Input term plus every layer's bias term, each passed through
    abs -> rescale -> upscale. Per-feature granularity rescales each feature's
    bias map independently before summation; per-layer rescales the
    channel-summed bias map of each unit."""
    config = PsiConfig(use_abs=True, use_rescale=True, resize_mode=resize_mode,
                       granularity=granularity)
    session = AttributionSession(checkpoint, x, class_index)
    target = session.input_hw
    total = psi(session.gradient_times_input(), config, target).values
    for l in range(1, session.num_units + 1):
        unit = session.unit(l)
        if not unit.bias_params:
            continue
        if granularity == "per-layer":
            values, _ = session.bias_values(l)
            total = total + psi(values, config, target).values
            continue
        for handle, beff in unit.bias_sites:
            g = session._grad_of(handle)[0]
            per_feature = g * (beff[:, None, None] if g.ndim == 3 else beff)
            for feature_map in per_feature.reshape(per_feature.shape[0], -1):
                side = feature_map.reshape(g.shape[1:] if g.ndim == 3 else (1, 1))
                total = total + psi(side, config, target).values
    warning = None
    if not any(np.any(checkpoint.params[name]) for name in checkpoint.params
               if nets.param_role(name) in nets.BIAS_ROLES):
        warning = "no nonzero bias parameters; saliency reduces to the input term"
    return SaliencyMap(total, f"fullgrad:{granularity}", warning)


def aggregate_activity_saliency(checkpoint, x, class_index, start_layer: int,
                                psi_config: PsiConfig = PSI_AGGREGATE) -> SaliencyMap:
    """Sum of psi-transformed activity attributions for layers
    start_layer..L; start_layer 0 includes the input attribution."""
    session = AttributionSession(checkpoint, x, class_index)
    n = session.num_units
    if not 0 <= start_layer <= n:
        raise ValueError(f"start layer {start_layer} out of range [0, {n}]")
    target = session.input_hw
    total = np.zeros(target)
    for l in range(start_layer, n + 1):
        values = session.gradient_times_input() if l == 0 else session.activity_values(l)
        total = total + psi(values, psi_config, target).values
    return SaliencyMap(total, f"agg:{start_layer}:{psi_config.label()}")


def gradcam_attribution(checkpoint, x, class_index, layer: int,
                        rectified: bool = False) -> AttributionMap:
    """Globally averaged gradient per feature, times activity, channel-summed.

    Differs from activity attribution by pooling the gradient over positions
    before weighting, so per-position gradient structure is discarded."""
    session = AttributionSession(checkpoint, x, class_index)
    unit = session.unit(layer)
    if not unit.spatial:
        raise ValueError(f"layer {layer} ({unit.name}) is not spatial; gradcam undefined")
    h = unit.output.data[0]
    g = session._grad_of(unit.output)[0]
    weights = g.mean(axis=(1, 2))
    values = np.einsum("chw,c->hw", h, weights)
    if rectified:
        values = np.maximum(values, 0.0)
    return AttributionMap(class_index, layer, "activity", values)


def saliency_from_attribution(attribution: AttributionMap) -> SaliencyMap:
    """The absolute value of any attribution map is a valid saliency map
    (on the layer's own grid; resize with psi if input-sized output needed)."""
    return SaliencyMap(np.abs(attribution.values),
                       f"abs({attribution.kind}:l={attribution.layer})")
