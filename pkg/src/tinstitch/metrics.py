"""Forward-only evaluation: feature distances and cross-patch consistency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkGraph, WeightStore, _apply_layer
from .tensor import ShapeError, Tensor, resize_bilinear
from .tiler import Rect


@dataclass
class FeatureExtractor:
    """Encoder prefix of a graph, truncated at (and including) a probe layer."""

    graph: NetworkGraph
    weights: WeightStore
    probe: str

    def __post_init__(self):
        self._stop = self.graph.layer_named(self.probe)

    def features(self, x: Tensor) -> Tensor:
        cur = x
        del x
        for layer_id, layer in enumerate(self.graph.layers[: self._stop + 1]):
            cur = _apply_layer(layer, layer_id, self.weights, cur, None, 1.0)
        return cur


def stroke_perceptual_loss(patch: Tensor, target: Tensor, fx: FeatureExtractor) -> float:
    """Mean squared distance between probe features of patch and target.

    Normalized by feature element count so the value is comparable across
    patch sizes.
    """
    if patch.dims != target.dims:
        raise ShapeError(f"operand dims differ: {patch.dims} vs {target.dims}")
    fa = fx.features(patch).data.astype(np.float64)
    fb = fx.features(target).data.astype(np.float64)
    return float(((fa - fb) ** 2).mean())


def total_loss(l_original: float, l_sp: float, weight: float) -> float:
    """Scalar combination: original loss plus weighted stroke term."""
    return l_original + weight * l_sp


def crop_and_upsample_target(thumb_stylized: Tensor, window: Rect,
                             scale_ratio: float, out_h: int, out_w: int) -> Tensor:
    """Cut the thumbnail region matching a content-space window and upsample.

    Window coordinates are divided by ``scale_ratio`` (content pixels per
    thumbnail pixel) and snapped to the nearest integer thumbnail pixel.
    """
    x0 = int(round(window.x / scale_ratio))
    y0 = int(round(window.y / scale_ratio))
    x1 = int(round(window.x1 / scale_ratio))
    y1 = int(round(window.y1 / scale_ratio))
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(thumb_stylized.w, x1), min(thumb_stylized.h, y1)
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise ShapeError(
            f"window {window} maps to a degenerate thumbnail crop "
            f"({x0},{y0})-({x1},{y1})"
        )
    crop = Tensor(thumb_stylized.data[:, :, y0:y1, x0:x1].copy())
    if crop.h == out_h and crop.w == out_w:
        return crop
    return resize_bilinear(crop, out_h, out_w)


def _normalized_gram(feat: Tensor) -> np.ndarray:
    """Channel-by-channel Gram matrix, scaled to unit Frobenius norm."""
    f = feat.data.reshape(feat.n * feat.c, -1).astype(np.float64)
    g = (f @ f.T) / f.shape[1]
    norm = np.linalg.norm(g)
    return g / max(norm, 1e-12)


def gram_consistency(patches: list, fx: FeatureExtractor) -> float:
    """Mean pairwise Frobenius distance between normalized feature Grams.

    Near zero when patches carry the same rendering; grows when each patch
    was normalized (and therefore rendered) independently.
    """
    if len(patches) < 2:
        raise ValueError("consistency needs at least two patches")
    grams = [_normalized_gram(fx.features(p)) for p in patches]
    total, pairs = 0.0, 0
    for i in range(len(grams)):
        for j in range(i + 1, len(grams)):
            total += float(np.linalg.norm(grams[i] - grams[j]))
            pairs += 1
    return total / pairs
