"""Per-channel and whitening normalization with detachable statistics.

The key mechanism: statistics captured once from a small thumbnail pass can
be re-applied to any number of patches, so every patch is normalized by the
same per-channel (or per-covariance) map.  Normalizing each patch by its own
statistics is what makes naive patch-wise stylization inconsistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DT, ConfigError, ShapeError, Tensor

EPS_DEFAULT = 1e-5


class StatsError(RuntimeError):
    """A statistics bank entry required in apply mode is missing."""


@dataclass
class ChannelStats:
    """Spatial mean and epsilon-stabilized stddev per (batch, channel)."""

    mean: np.ndarray  # (N, C) float32
    std: np.ndarray   # (N, C) float32

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=DT)
        self.std = np.asarray(self.std, dtype=DT)
        if self.mean.ndim != 2 or self.mean.shape != self.std.shape:
            raise ShapeError("channel stats must be matching (N, C) arrays")


@dataclass
class AffineParams:
    """Per-channel scale and shift applied after standardization."""

    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=DT).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=DT).reshape(-1)
        if self.gamma.shape != self.beta.shape:
            raise ShapeError("gamma and beta must have equal length")

    @staticmethod
    def identity(channels: int) -> "AffineParams":
        return AffineParams(np.ones(channels, dtype=DT), np.zeros(channels, dtype=DT))


@dataclass
class WhiteningStats:
    """Channel mean plus inverse square root of the channel covariance."""

    mean: np.ndarray          # (N, C) float32
    inv_sqrt_cov: np.ndarray  # (N, C, C) float32, symmetric

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=DT)
        self.inv_sqrt_cov = np.asarray(self.inv_sqrt_cov, dtype=DT)
        if self.inv_sqrt_cov.ndim != 3 or self.inv_sqrt_cov.shape[1] != self.inv_sqrt_cov.shape[2]:
            raise ShapeError("inv_sqrt_cov must be (N, C, C)")
        if self.mean.shape != self.inv_sqrt_cov.shape[:2]:
            raise ShapeError("whitening mean/cov batch or channel mismatch")


@dataclass
class AdainStats:
    """Content-side and style-side channel statistics for a transfer layer."""

    content: ChannelStats
    style: ChannelStats


@dataclass
class StatsBank:
    """Statistics captured per normalization layer, keyed by layer index.

    Written during the single-threaded thumbnail (capture) pass; read-only
    and shareable across patch workers in apply mode.
    """

    mode: str = "capture"  # "capture" | "apply"
    entries: dict = field(default_factory=dict)
    # style-side channel statistics for adain layers, filled by the style pass
    style: dict = field(default_factory=dict)

    def store(self, layer_id: int, stats) -> None:
        self.entries[layer_id] = stats

    def fetch(self, layer_id: int):
        try:
            return self.entries[layer_id]
        except KeyError:
            raise StatsError(
                f"no captured statistics for norm layer {layer_id}; "
                "run the thumbnail capture pass first"
            ) from None

    def has(self, layer_id: int) -> bool:
        return layer_id in self.entries


def channel_stats(x: Tensor, eps: float = EPS_DEFAULT) -> ChannelStats:
    """Population mean/stddev over spatial positions, per (batch, channel)."""
    if x.h * x.w < 1:
        raise ShapeError("channel statistics need at least one spatial sample")
    a = x.data.astype(np.float64)
    mean = a.mean(axis=(2, 3))
    var = ((a - mean[:, :, None, None]) ** 2).mean(axis=(2, 3))
    std = np.sqrt(var + eps)
    return ChannelStats(mean.astype(DT), std.astype(DT))


def _broadcast_nc(arr: np.ndarray, n: int) -> np.ndarray:
    """Allow stats captured at batch 1 to serve a larger patch batch."""
    if arr.shape[0] == n:
        return arr
    if arr.shape[0] == 1:
        return np.broadcast_to(arr, (n,) + arr.shape[1:])
    raise ShapeError(f"stats batch {arr.shape[0]} incompatible with input batch {n}")


def _affine_standardize(x: Tensor, mean: np.ndarray, std: np.ndarray,
                        affine: AffineParams | None) -> Tensor:
    """y = gamma * (x - mean) / std + beta, identical math for IN and TIN."""
    mean = _broadcast_nc(mean, x.n)
    std = _broadcast_nc(std, x.n)
    if mean.shape[1] != x.c:
        raise ShapeError(f"stats have {mean.shape[1]} channels, input has {x.c}")
    if affine is None:
        affine = AffineParams.identity(x.c)
    if affine.gamma.shape[0] != x.c:
        raise ShapeError(f"affine params length {affine.gamma.shape[0]} != channels {x.c}")
    scale = (affine.gamma[None, :] / std)[:, :, None, None]
    out = (x.data - mean[:, :, None, None]) * scale + affine.beta[None, :, None, None]
    return Tensor(out)


def instance_norm(x: Tensor, affine: AffineParams | None = None,
                  eps: float = EPS_DEFAULT) -> Tensor:
    """Standardize each (batch, channel) plane by its own statistics."""
    st = channel_stats(x, eps)
    return _affine_standardize(x, st.mean, st.std, affine)


def thumbnail_instance_norm(x: Tensor, stats: ChannelStats,
                            affine: AffineParams | None = None) -> Tensor:
    """Standardize by externally captured statistics instead of x's own.

    With stats taken from a thumbnail of the whole image, every patch
    receives the identical per-channel affine map.
    """
    return _affine_standardize(x, stats.mean, stats.std, affine)


def whitening_stats(x: Tensor, eps: float = EPS_DEFAULT) -> WhiteningStats:
    """Covariance statistics over spatial positions, per batch element.

    The inverse square root comes from a symmetric eigendecomposition with
    eigenvalues clamped to at least ``eps``, so rank-deficient covariance
    (constant channels) still yields finite output.
    """
    if x.h * x.w < 2:
        raise ShapeError("covariance needs at least two spatial samples")
    n, c = x.n, x.c
    mean = np.empty((n, c), dtype=np.float64)
    isc = np.empty((n, c, c), dtype=np.float64)
    flat = x.data.reshape(n, c, -1).astype(np.float64)
    for i in range(n):
        mu = flat[i].mean(axis=1)
        centered = flat[i] - mu[:, None]
        cov = (centered @ centered.T) / centered.shape[1]
        evals, evecs = np.linalg.eigh(cov)
        evals = np.maximum(evals, eps)
        m = (evecs * (1.0 / np.sqrt(evals))[None, :]) @ evecs.T
        mean[i] = mu
        isc[i] = (m + m.T) / 2.0
    return WhiteningStats(mean.astype(DT), isc.astype(DT))


def thumbnail_instance_whiten(x: Tensor, stats: WhiteningStats) -> Tensor:
    """y = inv_sqrt_cov @ (x - mean) applied at every spatial position."""
    mean = _broadcast_nc(stats.mean, x.n)
    isc = _broadcast_nc(stats.inv_sqrt_cov, x.n)
    if mean.shape[1] != x.c:
        raise ShapeError(f"whitening stats have {mean.shape[1]} channels, input has {x.c}")
    flat = x.data.reshape(x.n, x.c, -1).astype(np.float64)
    out = np.empty_like(flat)
    for i in range(x.n):
        out[i] = isc[i].astype(np.float64) @ (flat[i] - mean[i].astype(np.float64)[:, None])
    return Tensor(out.reshape(x.dims).astype(DT))


def instance_whiten(x: Tensor, eps: float = EPS_DEFAULT) -> Tensor:
    """Whiten by x's own covariance (the patch-inconsistent variant)."""
    return thumbnail_instance_whiten(x, whitening_stats(x, eps))


def adain_transfer(content_stats: ChannelStats, style_stats: ChannelStats,
                   x: Tensor) -> Tensor:
    """Re-standardize x from content statistics onto style statistics.

    y = style_std * (x - content_mean) / content_std + style_mean.  Patches
    sharing one set of content statistics share the same per-channel map.
    """
    if content_stats.mean.shape[1] != style_stats.mean.shape[1]:
        raise ConfigError(
            f"content stats have {content_stats.mean.shape[1]} channels, "
            f"style stats have {style_stats.mean.shape[1]}"
        )
    cm = _broadcast_nc(content_stats.mean, x.n)
    cs = _broadcast_nc(content_stats.std, x.n)
    sm = _broadcast_nc(style_stats.mean, x.n)
    ss = _broadcast_nc(style_stats.std, x.n)
    if cm.shape[1] != x.c:
        raise ConfigError(f"stats have {cm.shape[1]} channels, input has {x.c}")
    scale = (ss / cs)[:, :, None, None]
    out = (x.data - cm[:, :, None, None]) * scale + sm[:, :, None, None]
    return Tensor(out)


def blend_style(content_feat: Tensor, stylized_feat: Tensor, alpha: float) -> Tensor:
    """alpha * stylized + (1 - alpha) * content."""
    if content_feat.dims != stylized_feat.dims:
        raise ShapeError(
            f"blend operands differ: {content_feat.dims} vs {stylized_feat.dims}"
        )
    a = DT(alpha)
    return Tensor(a * stylized_feat.data + (DT(1) - a) * content_feat.data)
