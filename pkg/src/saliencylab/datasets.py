"""Dataset container, IDX file ingestion, and the synthetic patch task.

IDX files follow the classic big-endian encoding: magic 0x00000803 for
3-d uint8 image files and 0x00000801 for 1-d uint8 label files. Images are
normalized to [0, 1] on load (the divisor is configurable).

The synthetic patch task places one bright square on a dim noisy background;
the label is the image region holding the patch (halves for 2 classes,
quadrants for 4), so the ground-truth salient region is known exactly.
"""

from __future__ import annotations

import configparser
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Array = np.ndarray

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: Array          # (N, H, W, channels), float64 in [0, 1]
    labels: Array          # (N,) int
    classes: int
    split: str = "train"
    masks: Array | None = None  # (N, H, W) ground-truth salient region, synth only

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, H, W, channels), got {self.images.shape}")
        n = self.images.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.shape != (n,):
            raise ValueError(f"labels shape {self.labels.shape} does not match N={n}")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise ValueError(
                f"labels must lie in [0, {self.classes}), got "
                f"[{self.labels.min()}, {self.labels.max()}]")

    def __len__(self):
        return self.images.shape[0]

    def subset(self, indices, split: str | None = None) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.images[idx], self.labels[idx], self.classes,
                       split or self.split,
                       None if self.masks is None else self.masks[idx])


# ---------------------------------------------------------------------------
# IDX reading / writing


def _read_u32(blob: bytes, offset: int, path) -> int:
    if offset + 4 > len(blob):
        raise IdxFormatError(f"{path}: truncated header at byte offset {offset}")
    return struct.unpack(">I", blob[offset:offset + 4])[0]


def read_idx_images(path) -> Array:
    """Raw uint8 image stack (N, H, W) from an IDX3 file."""
    blob = Path(path).read_bytes()
    magic = _read_u32(blob, 0, path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{path}: bad image magic 0x{magic:08x} at byte offset 0 "
            f"(expected 0x{IDX_IMAGES_MAGIC:08x})")
    n = _read_u32(blob, 4, path)
    h = _read_u32(blob, 8, path)
    w = _read_u32(blob, 12, path)
    expected = 16 + n * h * w
    if len(blob) != expected:
        raise IdxFormatError(
            f"{path}: payload has {len(blob) - 16} bytes at byte offset 16, "
            f"expected {n * h * w}")
    return np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(n, h, w).copy()


def read_idx_labels(path) -> Array:
    blob = Path(path).read_bytes()
    magic = _read_u32(blob, 0, path)
    if magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{path}: bad label magic 0x{magic:08x} at byte offset 0 "
            f"(expected 0x{IDX_LABELS_MAGIC:08x})")
    n = _read_u32(blob, 4, path)
    if len(blob) != 8 + n:
        raise IdxFormatError(
            f"{path}: payload has {len(blob) - 8} bytes at byte offset 8, expected {n}")
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx_images(path, images_u8: Array):
    arr = np.asarray(images_u8, dtype=np.uint8)
    n, h, w = arr.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + arr.tobytes())


def write_idx_labels(path, labels: Array):
    arr = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, arr.shape[0]) + arr.tobytes())


def ingest_idx(images_path, labels_path, classes: int = 10, split: str = "train",
               pixel_range: float = 255.0) -> Dataset:
    images = read_idx_images(images_path).astype(np.float64) / pixel_range
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image count {images.shape[0]} does not match label count {labels.shape[0]}")
    return Dataset(images[..., None], labels, classes, split)


def load_dataset_manifest(path) -> dict[str, Dataset]:
    """Manifest: INI with one section per split naming `images` and `labels`
    paths (relative to the manifest), plus optional [meta] classes/pixel_range."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    base = Path(path).parent
    classes = parser.getint("meta", "classes", fallback=10)
    pixel_range = parser.getfloat("meta", "pixel_range", fallback=255.0)
    out = {}
    for split in parser.sections():
        if split == "meta":
            continue
        images = base / parser.get(split, "images")
        labels = base / parser.get(split, "labels")
        out[split] = ingest_idx(images, labels, classes, split, pixel_range)
    return out


# ---------------------------------------------------------------------------
# synthetic patch task


def synth_patch_dataset(seed: int, n: int, image_size: int = 16, classes: int = 4,
                        patch_size: int | None = None, split: str = "train") -> Dataset:
    """Bright patch on a noisy dim background; label = region of the patch."""
    if classes not in (2, 4):
        raise ValueError(f"patch dataset supports 2 or 4 classes, got {classes}")
    if patch_size is None:
        patch_size = max(3, image_size // 4 + 1)
    half = image_size // 2
    if patch_size > half:
        raise ValueError(f"patch size {patch_size} exceeds half extent {half}")
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 0.15, size=(n, image_size, image_size, 1))
    labels = rng.integers(0, classes, size=n)
    masks = np.zeros((n, image_size, image_size))
    for i in range(n):
        if classes == 2:
            rows = (0, image_size)
            cols = (0, half) if labels[i] == 0 else (half, image_size)
        else:
            top = labels[i] < 2
            left = labels[i] % 2 == 0
            rows = (0, half) if top else (half, image_size)
            cols = (0, half) if left else (half, image_size)
        r = rng.integers(rows[0], rows[1] - patch_size + 1)
        c = rng.integers(cols[0], cols[1] - patch_size + 1)
        images[i, r:r + patch_size, c:c + patch_size, 0] = rng.uniform(
            0.7, 1.0, size=(patch_size, patch_size))
        masks[i, r:r + patch_size, c:c + patch_size] = 1.0
    return Dataset(images, labels, classes, split, masks)
