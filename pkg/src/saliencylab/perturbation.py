"""Perturb-until-flip evaluation of saliency maps.

Pixels are removed (all channels set to the removal value) in saliency order
- ascending for the "least" direction, descending for "most", ties broken by
row-major index - in batches of a fixed pixel fraction, until the predicted
class changes. The removed-signal fraction is

    e = 1 - ||x_perturbed||_2 / ||x||_2

evaluated at the first image whose argmax flips (inclusive of the flipping
batch); if nothing flips after removing every pixel, e = 1 with flipped
False. Noise references replay the same protocol with saliency maps of other
images from the same method, giving the distribution-matched null that the
delta metrics subtract.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nets
from .stats import wilcoxon_signed_rank

Array = np.ndarray

DIRECTIONS = ("least", "most")
_CHUNK = 25  # perturbation steps evaluated per batched forward


@dataclass(frozen=True)
class PerturbConfig:
    direction: str = "least"       # "least" (-s) or "most" (+s) salient first
    step_fraction: float = 0.01    # fraction of pixels removed per batch
    removal_value: float = 0.0     # fill value on [0, 1]-normalized inputs

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not 0 < self.step_fraction <= 1:
            raise ValueError(f"step_fraction must be in (0, 1], got {self.step_fraction}")


@dataclass(frozen=True)
class PerturbOutcome:
    e: float
    flipped: bool
    steps: int


@dataclass
class NoisePool:
    """Saliency maps of the same method for images other than the one under
    test; `draws` maps are averaged per evaluation."""
    maps: list
    draws: int = 10

    def __post_init__(self):
        if not self.maps:
            raise ValueError("noise pool is empty")
        if not 1 <= self.draws <= len(self.maps):
            raise ValueError(
                f"draw count {self.draws} out of range [1, {len(self.maps)}]")


@dataclass
class EvalRecord:
    image_id: int
    method: str
    e_minus: float
    e_plus: float
    e_delta: float
    exi_minus: float
    exi_plus: float
    de_minus: float
    de_plus: float
    de_delta: float
    flipped_minus: bool
    flipped_plus: bool
    steps_minus: int
    steps_plus: int
    error: str | None = field(default=None, compare=False)


CSV_COLUMNS = ("image_id", "method", "e_minus", "e_plus", "e_delta", "exi_minus",
               "exi_plus", "de_minus", "de_plus", "de_delta", "flipped_minus",
               "flipped_plus", "steps_minus", "steps_plus")

COMPARISON_COLUMNS = ("method_a", "method_b", "metric", "n", "W", "p", "median_diff")


def pixel_order(saliency: Array, direction: str) -> Array:
    """Flat pixel indices in removal order; ties fall back to row-major."""
    flat = np.asarray(saliency, dtype=np.float64).ravel()
    key = flat if direction == "least" else -flat
    return np.argsort(key, kind="stable")


def _removal_counts(n_pixels: int, step_fraction: float) -> list[int]:
    batch = max(1, int(round(step_fraction * n_pixels)))
    counts = list(range(batch, n_pixels, batch))
    counts.append(n_pixels)
    return counts


def perturb_until_flip(checkpoint: nets.Checkpoint, x: Array, saliency: Array,
                       config: PerturbConfig) -> PerturbOutcome:
    x = np.asarray(x, dtype=np.float64)
    saliency = np.asarray(saliency, dtype=np.float64)
    if saliency.shape != x.shape[:2]:
        raise ValueError(
            f"saliency shape {saliency.shape} does not match image extents {x.shape[:2]}")
    norm0 = float(np.linalg.norm(x))
    if norm0 == 0:
        raise ValueError("input has zero norm; removed-signal fraction undefined")
    base_class = int(np.argmax(nets.forward_logits(checkpoint, x)))
    order = pixel_order(saliency, config.direction)
    counts = _removal_counts(saliency.size, config.step_fraction)
    channels = x.shape[2]
    for start in range(0, len(counts), _CHUNK):
        chunk = counts[start:start + _CHUNK]
        batch = np.repeat(x[None], len(chunk), axis=0)
        flat = batch.reshape(len(chunk), saliency.size, channels)
        for row, count in enumerate(chunk):
            flat[row, order[:count], :] = config.removal_value
        preds = np.argmax(nets.forward_logits(checkpoint, batch), axis=1)
        hits = np.nonzero(preds != base_class)[0]
        if hits.size:
            first = int(hits[0])
            e = 1.0 - float(np.linalg.norm(batch[first])) / norm0
            return PerturbOutcome(e, True, start + first + 1)
    return PerturbOutcome(1.0, False, len(counts))


def noise_reference(checkpoint: nets.Checkpoint, x: Array, pool: NoisePool,
                    config: PerturbConfig, seed: int = 0) -> float:
    """Mean removed-signal fraction over `pool.draws` distinct pool maps."""
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool.maps), size=pool.draws, replace=False)
    values = [perturb_until_flip(checkpoint, x, pool.maps[int(i)], config).e
              for i in picks]
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# per-method evaluation


def _draw_pool_indices(rng: np.random.Generator, n: int, own: int, draws: int) -> Array:
    picks = rng.choice(n - 1, size=draws, replace=False)
    return picks + (picks >= own)


def _evaluate_one(checkpoint, x, image_id, own_index, maps, method_name,
                  config, draws, seed) -> EvalRecord:
    least = replace(config, direction="least")
    most = replace(config, direction="most")
    try:
        out_minus = perturb_until_flip(checkpoint, x, maps[own_index], least)
        out_plus = perturb_until_flip(checkpoint, x, maps[own_index], most)
        rng = np.random.default_rng([seed, own_index])
        picks = _draw_pool_indices(rng, len(maps), own_index, draws)
        exi_minus = float(np.mean(
            [perturb_until_flip(checkpoint, x, maps[int(j)], least).e for j in picks]))
        exi_plus = float(np.mean(
            [perturb_until_flip(checkpoint, x, maps[int(j)], most).e for j in picks]))
    except ValueError as err:
        nan = math.nan
        return EvalRecord(image_id, method_name, nan, nan, nan, nan, nan, nan, nan,
                          nan, False, False, 0, 0, error=str(err))
    de_minus = out_minus.e - exi_minus
    de_plus = out_plus.e - exi_plus
    return EvalRecord(
        image_id=image_id, method=method_name,
        e_minus=out_minus.e, e_plus=out_plus.e, e_delta=out_minus.e - out_plus.e,
        exi_minus=exi_minus, exi_plus=exi_plus,
        de_minus=de_minus, de_plus=de_plus, de_delta=de_minus - de_plus,
        flipped_minus=out_minus.flipped, flipped_plus=out_plus.flipped,
        steps_minus=out_minus.steps, steps_plus=out_plus.steps)


def _worker(args):
    return _evaluate_one(*args)


def evaluate_method(checkpoint: nets.Checkpoint, images: Array, method,
                    method_name: str | None = None,
                    config: PerturbConfig = PerturbConfig(), draws: int = 10,
                    seed: int = 0, image_ids=None, maps=None,
                    workers: int = 1) -> list[EvalRecord]:
    """Full metric set per image for one saliency method.

    `method` is a callable (H, W, ch) image -> (H, W) map, or None when
    precomputed `maps` are supplied. Each image's noise pool is every other
    image's map; draws are seeded per image, so results do not depend on
    evaluation order. Per-image failures are recorded (NaN metrics + error),
    not raised.
    """
    n = images.shape[0]
    if maps is None:
        if method is None:
            raise ValueError("provide a saliency callable or precomputed maps")
        maps = [np.asarray(method(images[i]), dtype=np.float64) for i in range(n)]
    if len(maps) != n:
        raise ValueError(f"got {len(maps)} maps for {n} images")
    if not 1 <= draws <= n - 1:
        raise ValueError(f"draw count {draws} needs 1..{n - 1} pool maps (n={n} images)")
    name = method_name or getattr(method, "__name__", "method")
    if image_ids is None:
        image_ids = list(range(n))
    tasks = [(checkpoint, images[i], image_ids[i], i, maps, name, config, draws, seed)
             for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_worker, tasks, chunksize=8))
    return [_evaluate_one(*t) for t in tasks]


# ---------------------------------------------------------------------------
# comparisons and CSV output


def compare_methods(records_a: list[EvalRecord], records_b: list[EvalRecord],
                    metrics=("de_minus", "de_plus", "de_delta")) -> list[dict]:
    """Pairwise signed-rank rows for two record lists paired by image id."""
    by_id = {r.image_id: r for r in records_b}
    rows = []
    for metric in metrics:
        diffs = [getattr(a, metric) - getattr(by_id[a.image_id], metric)
                 for a in records_a if a.image_id in by_id
                 and a.error is None and by_id[a.image_id].error is None]
        diffs = [d for d in diffs if not math.isnan(d)]
        row = {"method_a": records_a[0].method if records_a else "",
               "method_b": records_b[0].method if records_b else "",
               "metric": metric, "n": len(diffs)}
        try:
            result = wilcoxon_signed_rank(diffs)
            row.update(W=result.statistic, p=result.pvalue)
        except ValueError:
            row.update(W=math.nan, p=math.nan)  # degenerate: no usable signal
        row["median_diff"] = float(np.median(diffs)) if diffs else 0.0
        rows.append(row)
    return rows


def _csv_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records_csv(path, records: list[EvalRecord]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_csv_value(getattr(rec, col)) for col in CSV_COLUMNS])
    return Path(path)


def write_comparison_csv(path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow([_csv_value(row[col]) for col in COMPARISON_COLUMNS])
    return Path(path)
