"""Heatmap rendering to PNG (stdlib zlib encoder) or PPM P6.

Signed attribution maps use a symmetric diverging blue/white/red scale
centered at zero; non-negative saliency maps use a white-to-red ramp. The
encoder is deterministic, so fixture renders can be compared byte-for-byte.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .attribution import AttributionMap, SaliencyMap
from .resize import resize_map

Array = np.ndarray

_RED = np.array([180.0, 4.0, 38.0])
_BLUE = np.array([59.0, 76.0, 192.0])
_WHITE = np.array([255.0, 255.0, 255.0])


def _ramp(anchor: Array, t: Array) -> Array:
    """Blend white -> anchor by t in [0, 1]; t has shape (h, w)."""
    return _WHITE[None, None, :] + (anchor - _WHITE)[None, None, :] * t[..., None]


def diverging_rgb(values: Array) -> Array:
    """Symmetric red (positive) / white (zero) / blue (negative) colors."""
    values = np.asarray(values, dtype=np.float64)
    vmax = np.abs(values).max()
    if vmax == 0:
        return np.full(values.shape + (3,), 255, dtype=np.uint8)
    t = values / vmax
    rgb = np.where((t >= 0)[..., None], _ramp(_RED, np.maximum(t, 0)),
                   _ramp(_BLUE, np.maximum(-t, 0)))
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def sequential_rgb(values: Array) -> Array:
    """Single-hue white-to-red ramp for non-negative maps."""
    values = np.asarray(values, dtype=np.float64)
    vmax = values.max()
    t = values / vmax if vmax > 0 else np.zeros_like(values)
    return np.clip(np.rint(_ramp(_RED, t)), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# encoders


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload)))


def write_png(path, rgb: Array):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[i].tobytes() for i in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    blob = (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(raw, 9)) + _png_chunk(b"IEND", b""))
    Path(path).write_bytes(blob)


def write_ppm(path, rgb: Array):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def _write_image(path, rgb: Array):
    path = Path(path)
    try:
        if path.suffix.lower() == ".ppm":
            write_ppm(path, rgb)
        else:
            write_png(path, rgb)
    except OSError as err:
        raise OSError(f"cannot write heatmap to {path}: {err}") from err


# ---------------------------------------------------------------------------
# rendering


def _upscale_nearest(rgb: Array, factor: int) -> Array:
    return rgb.repeat(factor, axis=0).repeat(factor, axis=1)


def _overlay_base(overlay: Array, target_hw: tuple[int, int]) -> Array:
    """Grayscale base image in [0, 255], resized to the render grid."""
    overlay = np.asarray(overlay, dtype=np.float64)
    if overlay.ndim == 3:
        overlay = overlay.mean(axis=-1)
    span = overlay.max() - overlay.min()
    gray = (overlay - overlay.min()) / span if span > 0 else np.zeros_like(overlay)
    gray = resize_map(gray, target_hw) if gray.shape != tuple(target_hw) else gray
    return (gray * 255.0)[..., None].repeat(3, axis=-1)


def render_heatmap(map_obj, path, overlay: Array | None = None,
                   upscale: int = 1, alpha: float = 0.6):
    """Write an AttributionMap (diverging scale) or SaliencyMap (single hue)
    to `path`; optionally alpha-blend over the input image."""
    if isinstance(map_obj, AttributionMap):
        values = map_obj.values
        colorize = diverging_rgb
    elif isinstance(map_obj, SaliencyMap):
        values = map_obj.values
        colorize = sequential_rgb
    else:
        values = np.asarray(map_obj, dtype=np.float64)
        colorize = diverging_rgb if values.min() < 0 else sequential_rgb
    if overlay is not None:
        target = overlay.shape[:2]
        if values.shape != tuple(target):
            values = resize_map(values, target)
        rgb = colorize(values).astype(np.float64)
        base = _overlay_base(overlay, target)
        rgb = (1.0 - alpha) * base + alpha * rgb
        rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    else:
        rgb = colorize(values)
    if upscale > 1:
        rgb = _upscale_nearest(rgb, upscale)
    _write_image(path, rgb)
    return Path(path)
