"""Three-stage stylization: thumbnail capture, batched patch passes, assembly.

The full-resolution image exists only as uint8 pixel buffers.  Float tensors
are created per thumbnail or per patch batch and released as soon as their
ownership region is written out, so the transient working set depends on the
window size and batch count, not on the content resolution.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics as metrics_mod
from .imageio import PngRowWriter, load_image, to_pixels
from .network import (
    NetworkGraph,
    PATCH_SAFE_VARIANTS,
    WeightStore,
    capture_style_stats,
    forward,
    validate_weights,
)
from .normstats import StatsBank
from .tensor import DT, ConfigError, Tensor, _bilinear_axis
from .tiler import plan_tiles


@dataclass
class PipelineConfig:
    thumb_short_side: int = 1024
    k: int = 1064
    s: int = 1000
    batch_size: int = 1
    alpha: float = 1.0
    workers: int = 1
    style_size: int = 1024
    allow_plain_norm: bool = False
    compute_metrics: bool = False

    def validate(self) -> None:
        if self.k <= self.s:
            raise ConfigError(f"window {self.k} must exceed stride {self.s}")
        if self.s < 1 or self.thumb_short_side < 1 or self.style_size < 1:
            raise ConfigError("sizes must be positive")
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError("alpha must lie in [0, 1]")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError("batch_size and workers must be >= 1")


@dataclass
class MemoryReport:
    """Analytic working-set estimate in bytes, per pipeline stage.

    ``total`` covers the transient float working set (plus weights and the
    statistics bank) and is independent of content resolution; the pixel
    buffers that scale with resolution are reported separately because the
    writer streams them in row bands.
    """

    thumbnail_pass: int
    patch_pass: int
    assembly: int
    weights: int
    stats_bank: int
    output_buffer: int

    @property
    def total(self) -> int:
        return (self.thumbnail_pass + self.patch_pass + self.assembly
                + self.weights + self.stats_bank)

    def rows(self) -> list:
        return [
            ("thumbnail_pass", self.thumbnail_pass),
            ("patch_pass", self.patch_pass),
            ("assembly", self.assembly),
            ("weights", self.weights),
            ("stats_bank", self.stats_bank),
            ("total", self.total),
            ("output_buffer", self.output_buffer),
        ]


@dataclass
class PipelineResult:
    bank: StatsBank
    plan: object
    report: MemoryReport
    output: np.ndarray | None = None
    thumb_stylized: Tensor | None = None
    metric_values: dict | None = None


def thumb_dims(height: int, width: int, short_side: int) -> tuple[int, int]:
    """Aspect-preserving dims with the shorter side scaled to ``short_side``."""
    if height <= width:
        return short_side, max(1, round(width * short_side / height))
    return max(1, round(height * short_side / width)), short_side


def resize_pixels(pixels: np.ndarray, out_h: int, out_w: int) -> Tensor:
    """Bilinear-resize a uint8 image straight into a float tensor.

    Gathers only the source rows each output row needs, so the full image is
    never materialized as a float tensor.  Matches resize_bilinear(to_tensor)
    bit for bit.
    """
    h, w = pixels.shape[:2]
    y0, y1, fy = _bilinear_axis(h, out_h)
    x0, x1, fx = _bilinear_axis(w, out_w)
    out = np.empty((1, 3, out_h, out_w), dtype=DT)
    chw = None
    for i in range(out_h):
        top = pixels[y0[i]].transpose(1, 0).astype(DT) / DT(255)
        bot = pixels[y1[i]].transpose(1, 0).astype(DT) / DT(255)
        row = top + fy[i] * (bot - top)
        left = row[:, x0]
        right = row[:, x1]
        out[0, :, i, :] = left + fx * (right - left)
    del chw
    return Tensor(out)


class StyleConsistencyHazard(ConfigError):
    """Graph would normalize each patch by its own statistics."""


def check_patch_safe(graph: NetworkGraph, allow_plain_norm: bool = False) -> None:
    """Reject graphs whose norm layers would restandardize every patch
    individually, the classic patch-wise inconsistency failure."""
    if allow_plain_norm:
        return
    for i, layer in enumerate(graph.layers):
        if layer.kind == "norm" and layer.variant not in PATCH_SAFE_VARIANTS:
            raise StyleConsistencyHazard(
                f"layer {i} uses plain '{layer.variant}' normalization: each patch "
                "would be normalized by its own statistics, producing inconsistent "
                "styles across patches. Use a thumbnail-conditioned variant "
                "(tin/tiw/adain) or explicitly allow plain norms."
            )


def _graph_has_adain(graph: NetworkGraph) -> bool:
    return any(l.kind == "norm" and l.variant == "adain" for l in graph.layers)


def capture_bank(graph: NetworkGraph, weights: WeightStore | None,
                 content_pixels: np.ndarray, style_pixels: np.ndarray | None,
                 cfg: PipelineConfig) -> tuple[StatsBank, Tensor]:
    """Stage one: style pass (if needed) plus thumbnail capture pass.

    Returns the frozen bank and the stylized thumbnail.
    """
    bank = StatsBank(mode="capture")
    if _graph_has_adain(graph):
        if style_pixels is None:
            raise ConfigError("graph contains an adain layer; a style image is required")
        capture_style_stats(
            graph, weights,
            resize_pixels(style_pixels, cfg.style_size, cfg.style_size), bank)
    th, tw = thumb_dims(content_pixels.shape[0], content_pixels.shape[1],
                        cfg.thumb_short_side)
    thumb_stylized = forward(graph, weights,
                             resize_pixels(content_pixels, th, tw), bank, cfg.alpha)
    bank.mode = "apply"
    return bank, thumb_stylized


def _patch_batch_tensor(content: np.ndarray, windows: list, k: int) -> Tensor:
    """Stack windows into one (B, 3, k, k) tensor; windows clamped at the
    image border are edge-replicated up to k so every batch has equal dims."""
    batch = np.empty((len(windows), 3, k, k), dtype=DT)
    for b, win in enumerate(windows):
        chw = content[win.y:win.y1, win.x:win.x1].transpose(2, 0, 1).astype(DT) / DT(255)
        if win.h < k or win.w < k:
            chw = np.pad(chw, ((0, 0), (0, k - win.h), (0, k - win.w)), mode="edge")
        batch[b] = chw
    return Tensor(batch)


def run_pipeline(content_pixels: np.ndarray, style_pixels: np.ndarray | None,
                 graph: NetworkGraph, weights: WeightStore | None,
                 cfg: PipelineConfig, row_sink: PngRowWriter | None = None,
                 collect: bool = True) -> PipelineResult:
    """Run the full dividing / stylization / assembling pipeline.

    Patch results stream into ``row_sink`` (and/or an in-memory array when
    ``collect``) one tile-row band at a time, in band order regardless of
    worker completion order, so output bytes are deterministic.
    """
    cfg.validate()
    check_patch_safe(graph, cfg.allow_plain_norm)
    if weights is not None:
        validate_weights(graph, weights)
    height, width = content_pixels.shape[:2]

    bank, thumb_stylized = capture_bank(graph, weights, content_pixels, style_pixels, cfg)
    keep_thumb = cfg.compute_metrics
    if not keep_thumb:
        thumb_stylized = None

    plan = plan_tiles(width, height, cfg.k, cfg.s)
    n_cols = len({w.x for w in plan.windows})

    collected = np.empty((height, width, 3), dtype=np.uint8) if collect else None
    metric_patches = {} if cfg.compute_metrics else None
    sp_losses = {} if cfg.compute_metrics else None
    fx = None
    if cfg.compute_metrics:
        fx = _default_extractor(graph, weights)
        ratio = height / thumb_stylized.h

    def run_batch(tile_ids: list) -> list:
        wins = [plan.windows[t] for t in tile_ids]
        y = forward(graph, weights,
                    _patch_batch_tensor(content_pixels, wins, cfg.k), bank, cfg.alpha)
        outs = []
        for b, (t, win) in enumerate(zip(tile_ids, wins)):
            own = plan.ownership[t]
            full = y.data[b:b + 1, :, :win.h, :win.w]
            if cfg.compute_metrics:
                patch_out = Tensor(full.copy())
                metric_patches[t] = patch_out
                target = metrics_mod.crop_and_upsample_target(
                    thumb_stylized, win, ratio, win.h, win.w)
                sp_losses[t] = metrics_mod.stroke_perceptual_loss(patch_out, target, fx)
            crop = full[:, :, own.y - win.y:own.y1 - win.y, own.x - win.x:own.x1 - win.x]
            outs.append((t, to_pixels(Tensor(crop.copy()))))
        return outs

    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for row_start in range(0, plan.count, n_cols):
            row_ids = list(range(row_start, min(row_start + n_cols, plan.count)))
            band_y0 = plan.ownership[row_ids[0]].y
            band_y1 = plan.ownership[row_ids[0]].y1
            band = np.empty((band_y1 - band_y0, width, 3), dtype=np.uint8)
            chunks = [row_ids[i:i + cfg.batch_size]
                      for i in range(0, len(row_ids), cfg.batch_size)]
            results = pool.map(run_batch, chunks) if pool else map(run_batch, chunks)
            for chunk_out in results:
                for t, pix in chunk_out:
                    own = plan.ownership[t]
                    band[:, own.x:own.x1, :] = pix
            if row_sink is not None:
                row_sink.write_rows(band)
            if collected is not None:
                collected[band_y0:band_y1] = band
    finally:
        if pool is not None:
            pool.shutdown()

    metric_values = None
    if cfg.compute_metrics:
        ordered = [sp_losses[t] for t in sorted(sp_losses)]
        metric_values = {"l_sp": float(np.mean(ordered))}
        if len(metric_patches) >= 2:
            metric_values["gram_consistency"] = metrics_mod.gram_consistency(
                [metric_patches[t] for t in sorted(metric_patches)], fx)
        else:
            metric_values["gram_consistency"] = 0.0

    report = estimate_memory(graph, cfg, (width, height),
                             weights.nbytes if weights is not None else 0,
                             _bank_nbytes(bank))
    return PipelineResult(bank=bank, plan=plan, report=report, output=collected,
                          thumb_stylized=thumb_stylized, metric_values=metric_values)


def stylize(content_path, style_path, graph: NetworkGraph,
            weights: WeightStore | None, cfg: PipelineConfig,
            out_path) -> PipelineResult:
    """File-level entry point: read PNGs, stylize, stream the result PNG."""
    content = load_image(content_path)
    style = load_image(style_path) if style_path is not None else None
    with PngRowWriter(out_path, content.shape[1], content.shape[0]) as sink:
        return run_pipeline(content, style, graph, weights, cfg,
                            row_sink=sink, collect=False)


def _default_extractor(graph, weights):
    """Probe at the last named relu ahead of the first norm layer, falling
    back to the first relu of the graph."""
    norm_ids = graph.norm_layer_ids()
    cutoff = norm_ids[0] if norm_ids else len(graph.layers)
    probe = None
    for layer in graph.layers[:cutoff]:
        if layer.kind == "relu" and layer.name:
            probe = layer.name
    if probe is None:
        raise ConfigError("metrics need a named relu layer ahead of the norm layer")
    return metrics_mod.FeatureExtractor(graph, weights, probe)


def _bank_nbytes(bank: StatsBank) -> int:
    total = 0
    for entry in list(bank.entries.values()) + list(bank.style.values()):
        for attr in ("mean", "std", "inv_sqrt_cov"):
            arr = getattr(entry, attr, None)
            if arr is not None:
                total += arr.nbytes
        if hasattr(entry, "content"):
            total += entry.content.mean.nbytes + entry.content.std.nbytes
            total += entry.style.mean.nbytes + entry.style.std.nbytes
    return total


def _shape_walk_peak(graph: NetworkGraph, h: int, w: int, batch: int) -> int:
    """Peak of (input + output) activation bytes over layer steps, the
    two-live-tensors liveness the executor actually has."""
    c, ch_w = 3, (h, w)
    live_in = batch * c * h * w * 4
    peak = live_in
    for layer in graph.layers:
        ch, (hh, ww) = c, ch_w
        if layer.kind == "conv":
            ch = layer.out_channels
            hh = (hh - layer.kernel) // layer.stride + 1
            ww = (ww - layer.kernel) // layer.stride + 1
        elif layer.kind == "maxpool2":
            hh, ww = (hh + 1) // 2, (ww + 1) // 2
        elif layer.kind == "upsample_nearest":
            hh, ww = hh * layer.factor, ww * layer.factor
        elif layer.kind in ("pad_reflect", "pad_zero"):
            hh, ww = hh + 2 * layer.pad, ww + 2 * layer.pad
        live_out = batch * ch * hh * ww * 4
        peak = max(peak, live_in + live_out)
        c, ch_w, live_in = ch, (hh, ww), live_out
    return peak


def estimate_memory(graph: NetworkGraph, cfg: PipelineConfig,
                    content_dims: tuple[int, int], weights_nbytes: int = 0,
                    bank_nbytes: int = 0) -> MemoryReport:
    """Analytic footprint from layer shape arithmetic.

    The patch term depends only on (graph, k, batch, workers); only the
    streamed output buffer grows with content resolution.
    """
    width, height = content_dims
    th, tw = thumb_dims(height, width, cfg.thumb_short_side)
    thumb_peak = _shape_walk_peak(graph, th, tw, 1)
    if _graph_has_adain(graph):
        thumb_peak = max(thumb_peak, _shape_walk_peak(graph, cfg.style_size, cfg.style_size, 1))
    patch_peak = cfg.batch_size * cfg.workers * _shape_walk_peak(graph, cfg.k, cfg.k, 1)
    assembly = cfg.batch_size * cfg.workers * cfg.k * cfg.k * 3 * 4
    band = min(cfg.k, height) * width * 3
    output = height * width * 3 + band
    return MemoryReport(thumbnail_pass=thumb_peak, patch_pass=patch_peak,
                        assembly=assembly, weights=weights_nbytes,
                        stats_bank=bank_nbytes, output_buffer=output)


def stats_sweep(pixels: np.ndarray, graph: NetworkGraph, weights: WeightStore | None,
                scales: list, probes: tuple = None) -> list:
    """Feature statistics at probe layers across thumbnail scales.

    For each scale the image's shorter side is resized to that many pixels
    and the encoder prefix is run; rows report the channel-averaged absolute
    mean and average stddev of the features at each probe layer.
    """
    from .nets import PROBE_LAYERS
    from .network import _apply_layer
    from .normstats import channel_stats

    if probes is None:
        probes = PROBE_LAYERS
    probe_ids = {}
    for name in probes:
        probe_ids[graph.layer_named(name)] = name
    last_probe = max(probe_ids)
    short = min(pixels.shape[0], pixels.shape[1])
    rows = []
    for scale in scales:
        actual = scale
        if scale > short:
            warnings.warn(
                f"sweep scale {scale} exceeds image shorter side {short}; clamping")
            actual = short
        th, tw = thumb_dims(pixels.shape[0], pixels.shape[1], actual)
        cur = resize_pixels(pixels, th, tw)
        for layer_id, layer in enumerate(graph.layers[: last_probe + 1]):
            cur = _apply_layer(layer, layer_id, weights, cur, None, 1.0)
            if layer_id in probe_ids:
                st = channel_stats(cur)
                rows.append({
                    "scale": scale,
                    "layer": probe_ids[layer_id],
                    "mean_abs_mu": float(np.abs(st.mean).mean()),
                    "mean_sigma": float(st.std.mean()),
                })
    return rows
