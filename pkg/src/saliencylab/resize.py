"""Upscaling of 2-d maps with a corner-aligned sample grid.

Output position i samples source coordinate i * (src - 1) / (dst - 1), so the
four corners land exactly on source samples and constants are preserved.
Modes:
  - "bilinear": separable linear interpolation along both axes.
  - "linear": linear along axis 0, nearest neighbour along axis 1 (the
    degraded comparison variant; ties round up).
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray

MODES = ("bilinear", "linear")


def _axis_grid(src: int, dst: int) -> tuple[Array, Array, Array]:
    """Source sample positions for each target index: (low, high, fraction)."""
    if dst == 1:
        return np.zeros(1, dtype=int), np.zeros(1, dtype=int), np.zeros(1)
    pos = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize_map(values: Array, target: tuple[int, int], mode: str = "bilinear") -> Array:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"resize_map: expected a 2-d map, got {values.ndim} dimensions")
    th, tw = target
    sh, sw = values.shape
    if th < sh or tw < sw:
        raise ValueError(
            f"resize_map: downscaling {values.shape} -> {target} is not supported")
    if mode not in MODES:
        raise ValueError(f"resize_map: unknown mode {mode!r}, expected one of {MODES}")

    ylo, yhi, yf = _axis_grid(sh, th)
    rows = values[ylo, :] * (1.0 - yf)[:, None] + values[yhi, :] * yf[:, None]
    if mode == "bilinear":
        xlo, xhi, xf = _axis_grid(sw, tw)
        return rows[:, xlo] * (1.0 - xf)[None, :] + rows[:, xhi] * xf[None, :]
    # linear: nearest along axis 1
    xlo, _, xf = _axis_grid(sw, tw)
    nearest = xlo + (xf >= 0.5)
    return np.ascontiguousarray(rows[:, nearest])
