"""NumPy kernels for network operations and their hand-derived backward rules.

Everything is float64. Spatial data is NCHW (batch, channel, height, width),
dense data is (batch, features). The autodiff layer (`autodiff`) wires these
kernels into a graph; the fast inference path in `nets` calls them directly,
so both paths share one implementation of the arithmetic.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Array = np.ndarray


def as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# convolution


def _check_conv(x: Array, kernel: Array, bias: Array | None, stride: int, padding: int):
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be NCHW, got {x.ndim} dimensions")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d: kernel must be OIHW, got {kernel.ndim} dimensions")
    n, c, h, w = x.shape
    o, ci, kh, kw = kernel.shape
    if ci != c:
        raise ValueError(
            f"conv2d: input channel count {c} does not match kernel input channels {ci}")
    if bias is not None and bias.shape != (o,):
        raise ValueError(
            f"conv2d: bias shape {bias.shape} does not match output channels ({o},)")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d: padding must be >= 0, got {padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1:
        raise ValueError(f"conv2d: output height {oh} < 1 (input height {h}, kernel {kh})")
    if ow < 1:
        raise ValueError(f"conv2d: output width {ow} < 1 (input width {w}, kernel {kw})")
    return oh, ow


def _pad2d(x: Array, padding: int) -> Array:
    if padding == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    out[:, :, padding:padding + h, padding:padding + w] = x
    return out


def _im2col(xp: Array, kh: int, kw: int, stride: int, oh: int, ow: int) -> Array:
    """(N*oh*ow, C*kh*kw) patch matrix; row layout matches kernel.reshape(O, -1)."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(xp.shape[0] * oh * ow, xp.shape[1] * kh * kw)


def conv2d_with_cols(x: Array, kernel: Array, bias: Array | None = None,
                     stride: int = 1, padding: int = 0) -> tuple[Array, Array]:
    """Cross-correlation plus the im2col matrix (reusable by the backward)."""
    oh, ow = _check_conv(x, kernel, bias, stride, padding)
    n = x.shape[0]
    o, _, kh, kw = kernel.shape
    cols = _im2col(_pad2d(x, padding), kh, kw, stride, oh, ow)
    out = cols @ kernel.reshape(o, -1).T
    if bias is not None:
        out += bias
    return np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2)), cols


def conv2d(x: Array, kernel: Array, bias: Array | None = None,
           stride: int = 1, padding: int = 0) -> Array:
    """Cross-correlate an NCHW input with an OIHW kernel."""
    return conv2d_with_cols(x, kernel, bias, stride, padding)[0]


def conv2d_backward(dout: Array, x: Array, kernel: Array, stride: int, padding: int,
                    cols: Array | None = None) -> tuple[Array, Array, Array]:
    """Gradients (dx, dkernel, dbias) of conv2d given upstream dout."""
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    oh, ow = dout.shape[2], dout.shape[3]
    dout_mat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(n * oh * ow, o)
    if cols is None:
        cols = _im2col(_pad2d(x, padding), kh, kw, stride, oh, ow)
    dk = (dout_mat.T @ cols).reshape(kernel.shape)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += np.moveaxis(
                np.tensordot(dout, kernel[:, :, i, j], axes=([1], [0])), 3, 1)
    db = dout.sum(axis=(0, 2, 3))
    dx = dxp[:, :, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(dx), dk, db


# ---------------------------------------------------------------------------
# rectifier


def relu(x: Array) -> Array:
    return np.maximum(x, 0.0)


def relu_backward(dout: Array, x: Array) -> Array:
    # gradient passes only where the input is strictly positive
    return dout * (x > 0)


# ---------------------------------------------------------------------------
# max pooling


def _check_pool(x: Array, window: int, stride: int):
    if x.ndim != 4:
        raise ValueError(f"maxpool2d: input must be NCHW, got {x.ndim} dimensions")
    h, w = x.shape[2], x.shape[3]
    if window > h or window > w:
        raise ValueError(
            f"maxpool2d: window {window} larger than spatial extent ({h}, {w})")
    if window < 1 or stride < 1:
        raise ValueError(f"maxpool2d: window and stride must be >= 1")


def maxpool2d_with_indices(x: Array, window: int, stride: int) -> tuple[Array, Array]:
    """Per-window maximum plus the flat in-window argmax (first occurrence,
    row-major within the window)."""
    _check_pool(x, window, stride)
    win = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(*win.shape[:4], window * window)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2d(x: Array, window: int, stride: int) -> Array:
    _check_pool(x, window, stride)
    n, c, h, w = x.shape
    if stride == window and h % window == 0 and w % window == 0:
        # non-overlapping windows: elementwise max over the window offsets
        out = None
        for i in range(window):
            for j in range(window):
                s = x[:, :, i::window, j::window]
                out = s if out is None else np.maximum(out, s)
        return out
    return maxpool2d_with_indices(x, window, stride)[0]


def maxpool2d_backward(dout: Array, x_shape: tuple, idx: Array,
                       window: int, stride: int) -> Array:
    """Route dout to the arg-max position of each window."""
    n, c, h, w = x_shape
    oh, ow = idx.shape[2], idx.shape[3]
    py = np.arange(oh)[None, None, :, None] * stride + idx // window
    px = np.arange(ow)[None, None, None, :] * stride + idx % window
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    dx = np.zeros(x_shape, dtype=np.float64)
    np.add.at(dx, (ni, ci, py, px), dout)
    return dx


# ---------------------------------------------------------------------------
# dense


def dense(x: Array, weights: Array, bias: Array | None = None) -> Array:
    """Affine map: x (N, K) with weights (C, K) -> (N, C)."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ValueError(
            f"dense: expected 2-d input and weights, got {x.ndim}-d and {weights.ndim}-d")
    if x.shape[1] != weights.shape[1]:
        raise ValueError(
            f"dense: input features {x.shape[1]} do not match weight columns {weights.shape[1]}")
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ValueError(
            f"dense: bias shape {bias.shape} does not match output features ({weights.shape[0]},)")
    out = x @ weights.T
    if bias is not None:
        out = out + bias
    return out


def dense_backward(dout: Array, x: Array, weights: Array) -> tuple[Array, Array, Array]:
    return dout @ weights, dout.T @ x, dout.sum(axis=0)


# ---------------------------------------------------------------------------
# frozen batch normalization (all statistics are constants at evaluation time)


def _bn_check(x: Array, gamma: Array, beta: Array, mean: Array, var: Array, eps: float):
    if x.ndim < 2:
        raise ValueError("batchnorm: input must have a channel axis (>= 2 dimensions)")
    c = x.shape[1]
    for name, p in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        if p.shape != (c,):
            raise ValueError(
                f"batchnorm: {name} shape {p.shape} does not match channel count ({c},)")
    if np.any(var + eps <= 0):
        raise ValueError(f"batchnorm: var + eps must be positive, got minimum {np.min(var) + eps}")


def _bn_shape(x: Array) -> tuple:
    return (1, x.shape[1]) + (1,) * (x.ndim - 2)


def batchnorm(x: Array, gamma: Array, beta: Array, mean: Array, var: Array,
              eps: float = 1e-5) -> Array:
    _bn_check(x, gamma, beta, mean, var, eps)
    shp = _bn_shape(x)
    scale = gamma / np.sqrt(var + eps)
    return (x - mean.reshape(shp)) * scale.reshape(shp) + beta.reshape(shp)


def batchnorm_effective_bias(gamma: Array, beta: Array, mean: Array, var: Array,
                             eps: float = 1e-5) -> Array:
    """Constant term of the frozen-batchnorm affine map, per channel."""
    return beta - gamma * mean / np.sqrt(var + eps)


def batchnorm_backward(dout: Array, x: Array, gamma: Array, mean: Array, var: Array,
                       eps: float) -> tuple[Array, Array, Array, Array, Array]:
    """Gradients (dx, dgamma, dbeta, dmean, dvar); all four statistics are
    treated as independent constants."""
    axes = (0,) + tuple(range(2, x.ndim))
    shp = _bn_shape(x)
    inv = 1.0 / np.sqrt(var + eps)
    centered = x - mean.reshape(shp)
    dx = dout * (gamma * inv).reshape(shp)
    dgamma = (centered * inv.reshape(shp) * dout).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dmean = -(gamma * inv) * dbeta
    dvar = -0.5 * gamma * inv ** 3 * (centered * dout).sum(axis=axes)
    return dx, dgamma, dbeta, dmean, dvar


# ---------------------------------------------------------------------------
# reshaping


def flatten(x: Array) -> Array:
    return x.reshape(x.shape[0], -1)


# ---------------------------------------------------------------------------
# losses (return value and gradient together; used by training loops and
# wrapped by the graph ops)


def log_softmax(z: Array) -> Array:
    zs = z - z.max(axis=1, keepdims=True)
    return zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))


def softmax(z: Array) -> Array:
    return np.exp(log_softmax(z))


def cross_entropy(logits: Array, labels: Array) -> tuple[float, Array]:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    n = logits.shape[0]
    ls = log_softmax(logits)
    loss = -ls[np.arange(n), labels].mean()
    dlogits = np.exp(ls)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def soft_cross_entropy(logits: Array, target_probs: Array,
                       temperature: float = 1.0) -> tuple[float, Array]:
    """Mean cross-entropy between fixed target distributions and
    softmax(logits / temperature); gradient w.r.t. logits only."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    n = logits.shape[0]
    ls = log_softmax(logits / temperature)
    loss = -(target_probs * ls).sum(axis=1).mean()
    dlogits = (np.exp(ls) - target_probs) / (n * temperature)
    return float(loss), dlogits
