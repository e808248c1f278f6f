"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (nested loops, brute-force
enumeration) and shares no code with the package paths it checks.
"""

from __future__ import annotations

import itertools

import numpy as np


def conv2d_ref(x, kernel, bias=None, stride=1, padding=0):
    """Nested-loop cross-correlation, NCHW x OIHW."""
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + w] = x
    out = np.zeros((n, o, oh, ow))
    for b_i in range(n):
        for oc in range(o):
            for y in range(oh):
                for xpos in range(ow):
                    acc = 0.0
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (xp[b_i, ic, y * stride + i, xpos * stride + j]
                                        * kernel[oc, ic, i, j])
                    if bias is not None:
                        acc += bias[oc]
                    out[b_i, oc, y, xpos] = acc
    return out


def maxpool2d_ref(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.zeros((n, c, oh, ow))
    for b_i in range(n):
        for ch in range(c):
            for y in range(oh):
                for xpos in range(ow):
                    patch = x[b_i, ch, y * stride:y * stride + window,
                              xpos * stride:xpos * stride + window]
                    out[b_i, ch, y, xpos] = patch.max()
    return out


def central_difference(f, x, step=1e-4):
    """Gradient of scalar f at array x by central differences, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def bilinear_1d_ref(values, target_len):
    """Corner-aligned 1-d linear interpolation by direct formula."""
    values = np.asarray(values, dtype=np.float64)
    src = len(values)
    if target_len == 1:
        return values[:1].copy()
    out = np.zeros(target_len)
    for i in range(target_len):
        pos = i * (src - 1) / (target_len - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, src - 1)
        frac = pos - lo
        out[i] = values[lo] * (1 - frac) + values[hi] * frac
    return out


def mlp_path_gradient(weights, activities, class_index, layer):
    """d f_c / d h^layer for a bias-capable ReLU MLP, by explicit enumeration
    of all paths through units that are active (pre-activation > 0).

    `weights[l]` maps layer l activities to layer l+1 pre-activations
    (shape (n_{l+1}, n_l)); `activities[l]` are the pre-activations h^l
    (activities[0] may be the input itself, always counted as active).
    Returns a vector over layer `layer`'s units.
    """
    n_layers = len(weights)  # transitions layer -> layer+1
    size = len(activities[layer])
    grad = np.zeros(size)
    for k in range(size):
        if layer > 0 and activities[layer][k] <= 0:
            continue  # unit is rectified away; no path carries its gradient
        upper_sizes = [len(activities[l]) for l in range(layer + 1, n_layers)]
        for path in itertools.product(*[range(s) for s in upper_sizes]):
            chain = (k,) + path + (class_index,)
            term = 1.0
            alive = True
            for step in range(len(chain) - 1):
                src, dst = chain[step], chain[step + 1]
                lvl = layer + step  # transition lvl -> lvl+1
                term *= weights[lvl][dst, src]
                is_output = (lvl + 1) == n_layers
                if not is_output and activities[lvl + 1][dst] <= 0:
                    alive = False
                    break
            if alive:
                grad[k] += term
    return grad


def wilcoxon_brute(differences):
    """Exact two-sided signed-rank p by brute force over all sign
    assignments; average ranks on ties, zeros dropped by the caller."""
    d = np.asarray(differences, dtype=np.float64)
    absd = np.abs(d)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(len(d))
    i = 0
    while i < len(d):
        j = i
        while j + 1 < len(d) and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    w_plus = ranks[d > 0].sum()
    w_minus = ranks[d < 0].sum()
    w_obs = min(w_plus, w_minus)
    total = ranks.sum()
    count = 0
    n_assign = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        wp = sum(r for r, s in zip(ranks, signs) if s)
        n_assign += 1
        if wp <= w_obs + 1e-12 or wp >= total - w_obs - 1e-12:
            count += 1
    return w_obs, count / n_assign
