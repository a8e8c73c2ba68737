"""Artifact detection: low-rate activation counting, ranking, heatmaps.

The detection statistic for one generated image is the number of
activated low-rate neurons summed over a set of early layers; images are
ranked by that total.  Heatmaps show, per spatial location of one layer,
the fraction of activated channels whose neuron rate is at or below the
threshold.  All quantitative scores are exact integers at raw layer
resolution; upsampling is for display only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DigestMismatchError, ShapeError
from .freqstat import RateTable, lr_set
from .genmodel import LayerTrace

__all__ = [
    "ArtifactScore",
    "Heatmap",
    "artifact_score",
    "score_batch",
    "rank_images",
    "heatmap",
    "render_overlay",
    "write_scores_csv",
]


@dataclass(frozen=True)
class ArtifactScore:
    """Activated low-rate neuron counts for one image over target layers."""

    layers: tuple[int, ...]
    counts: tuple[int, ...]
    total: int
    latent_index: int = 0

    def __post_init__(self):
        if len(self.layers) != len(self.counts):
            raise ShapeError("one count per target layer is required")
        if self.total != sum(self.counts):
            raise ShapeError("total must equal the sum of per-layer counts")


@dataclass(frozen=True)
class Heatmap:
    """Per-location LR ratio for one layer; values in [0, 1]."""

    layer: int
    threshold: float
    values: np.ndarray  # (H, W) float64

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ShapeError(f"heatmap values must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ShapeError("heatmap values must lie in [0, 1]")


def _check_compat(trace: LayerTrace, rates: RateTable) -> None:
    if trace.model_digest and rates.model_digest and \
            trace.model_digest != rates.model_digest:
        raise DigestMismatchError(
            f"trace digest {trace.model_digest[:12]} does not match rate table "
            f"digest {rates.model_digest[:12]}")
    if len(trace.featuremaps) != len(rates.layer_shapes):
        raise ShapeError("trace and rate table have different layer counts")
    for i, (fm, shape) in enumerate(zip(trace.featuremaps, rates.layer_shapes)):
        if fm.size and fm.shape != shape:
            raise ShapeError(
                f"layer {i} featuremap shape {fm.shape} does not match "
                f"rate table shape {shape}")


def artifact_score(trace: LayerTrace, rates: RateTable,
                   target_layers: Sequence[int], threshold: float,
                   latent_index: int = 0) -> ArtifactScore:
    """Count activated low-rate neurons per target layer for one trace."""
    _check_compat(trace, rates)
    layers = tuple(int(i) for i in target_layers)
    counts = []
    for i in layers:
        if not 0 <= i < len(trace.featuremaps):
            raise ShapeError(f"target layer {i} out of range")
        activated = trace.featuremaps[i].reshape(-1) > 0
        low_rate = lr_set(rates, i, threshold).mask
        counts.append(int(np.count_nonzero(activated & low_rate)))
    return ArtifactScore(layers=layers, counts=tuple(counts),
                         total=sum(counts), latent_index=latent_index)


def score_batch(featuremaps: Sequence[np.ndarray], rates: RateTable,
                target_layers: Sequence[int], threshold: float,
                first_index: int = 0) -> list[ArtifactScore]:
    """Score a batch from stacked (N, C, H, W) per-layer featuremaps."""
    layers = tuple(int(i) for i in target_layers)
    n = featuremaps[0].shape[0] if featuremaps else 0
    per_layer = []
    for i in layers:
        if not 0 <= i < len(featuremaps):
            raise ShapeError(f"target layer {i} out of range")
        mask = lr_set(rates, i, threshold).mask.reshape(rates.layer_shapes[i])
        act = featuremaps[i] > 0
        per_layer.append((act & mask[None]).reshape(n, -1).sum(axis=1))
    scores = []
    for j in range(n):
        counts = tuple(int(pl[j]) for pl in per_layer)
        scores.append(ArtifactScore(layers=layers, counts=counts,
                                    total=sum(counts),
                                    latent_index=first_index + j))
    return scores


def rank_images(scores: Sequence[ArtifactScore], top_k: int,
                bottom_k: int) -> tuple[list[int], list[int]]:
    """Indices of the top_k highest and bottom_k lowest totals.

    Returned indices are positions in ``scores``.  Ties break by
    ascending latent index, so the ranking is a pure function of the
    (total, latent_index) pairs.
    """
    if not scores:
        raise ShapeError("cannot rank an empty score list")
    if top_k > len(scores) or bottom_k > len(scores):
        raise ShapeError("k exceeds the number of scored images")
    order_desc = sorted(range(len(scores)),
                        key=lambda j: (-scores[j].total, scores[j].latent_index))
    order_asc = sorted(range(len(scores)),
                       key=lambda j: (scores[j].total, scores[j].latent_index))
    return order_desc[:top_k], order_asc[:bottom_k]


def heatmap(trace: LayerTrace, rates: RateTable, layer: int,
            threshold: float) -> Heatmap:
    """Fraction of activated channels that are low-rate, per spatial location.

    Locations with no activated channel are defined as 0 so the map is
    renderable everywhere.
    """
    _check_compat(trace, rates)
    if not 0 <= layer < len(trace.featuremaps):
        raise ShapeError(f"layer index {layer} out of range")
    fm = trace.featuremaps[layer]
    activated = fm > 0
    low_rate = lr_set(rates, layer, threshold).mask.reshape(fm.shape)
    num = (activated & low_rate).sum(axis=0).astype(np.float64)
    den = activated.sum(axis=0).astype(np.float64)
    values = num / np.maximum(den, 1.0)
    return Heatmap(layer=layer, threshold=threshold, values=values)


def _bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center alignment."""
    h, w = values.shape
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    v00 = values[np.ix_(y0, x0)]
    v01 = values[np.ix_(y0, x1)]
    v10 = values[np.ix_(y1, x0)]
    v11 = values[np.ix_(y1, x1)]
    top = v00 * (1 - fx) + v01 * fx
    bot = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def render_overlay(image: np.ndarray, hm: Heatmap) -> np.ndarray:
    """Blend a red heatmap overlay onto the grayscale image.

    The image is converted to Rec.601 luminance, the map is bilinearly
    upsampled to image resolution, and each pixel becomes
    (1 - a) * gray + a * red with a = 0.5 * value, so a zero map leaves
    the grayscale image untouched and a value of 1 gives the maximum red
    overlay.  Returns (H, W, 3) uint8.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected a (3, H, W) image, got shape {img.shape}")
    _, h, w = img.shape
    lum = 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    gray = np.clip((lum + 1.0) / 2.0, 0.0, 1.0)
    v = _bilinear_resize(hm.values, h, w)
    a = 0.5 * v
    out = np.empty((h, w, 3), dtype=np.float64)
    out[:, :, 0] = (1 - a) * gray + a * 1.0
    out[:, :, 1] = (1 - a) * gray
    out[:, :, 2] = (1 - a) * gray
    return np.round(out * 255.0).astype(np.uint8)


def write_scores_csv(path, scores: Sequence[ArtifactScore]) -> None:
    """Write scores as `index,layer_<i>...,total`, ordered by latent index."""
    if not scores:
        raise ShapeError("no scores to write")
    layers = scores[0].layers
    for s in scores:
        if s.layers != layers:
            raise ShapeError("all scores must share the same target layers")
    rows = sorted(scores, key=lambda s: s.latent_index)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index"] + [f"layer_{i}" for i in layers] + ["total"])
        for s in rows:
            writer.writerow([s.latent_index] + list(s.counts) + [s.total])
