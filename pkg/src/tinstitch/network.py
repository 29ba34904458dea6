"""Declarative layer graphs, the binary weight container, and the executor.

Graphs are flat ordered layer lists (JSON on disk).  The executor runs a
graph in capture mode (normalization layers compute statistics from their
own input and record them in a bank) or apply mode (layers read previously
captured statistics), which is what lets a thumbnail pass condition all
subsequent patch passes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import normstats
from .normstats import AdainStats, AffineParams, ChannelStats, StatsBank, WhiteningStats
from .tensor import (
    DT,
    ConfigError,
    ConvWeights,
    PadSpec,
    Tensor,
    conv2d,
    maxpool2,
    pad,
    relu,
    resize_nearest,
)

MAGIC = b"URSTW1"

LAYER_KINDS = ("conv", "relu", "maxpool2", "upsample_nearest", "pad_reflect", "pad_zero", "norm")
NORM_VARIANTS = ("in", "tin", "iw", "tiw", "adain")

# Norm variants safe for patch-wise execution: their statistics come from the
# thumbnail capture pass, so all patches share one normalization map.
PATCH_SAFE_VARIANTS = ("tin", "tiw", "adain")


class WeightFormatError(ValueError):
    """Weight container is malformed or inconsistent with its graph."""


@dataclass
class LayerSpec:
    kind: str
    name: str | None = None
    in_channels: int | None = None
    out_channels: int | None = None
    kernel: int | None = None
    stride: int = 1
    pad: int = 0
    factor: int = 2
    variant: str | None = None
    affine: bool = False
    weight: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            if not all(v is not None for v in (self.in_channels, self.out_channels, self.kernel)):
                raise ConfigError("conv layer needs in_channels, out_channels, kernel")
            if self.weight is None:
                raise ConfigError("conv layer needs a weight name")
        if self.kind == "norm":
            if self.variant not in NORM_VARIANTS:
                raise ConfigError(f"unknown norm variant {self.variant!r}")
            if self.variant in ("iw", "tiw") and self.affine:
                raise ConfigError("whitening layers do not take affine parameters")
            if self.affine and self.weight is None:
                raise ConfigError("affine norm layer needs a weight name")
        if self.kind in ("pad_reflect", "pad_zero") and self.pad < 0:
            raise ConfigError("pad amount must be non-negative")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.name:
            d["name"] = self.name
        if self.kind == "conv":
            d.update(in_channels=self.in_channels, out_channels=self.out_channels,
                     kernel=self.kernel, stride=self.stride, weight=self.weight)
        elif self.kind == "norm":
            d.update(variant=self.variant, affine=self.affine)
            if self.weight:
                d["weight"] = self.weight
        elif self.kind in ("pad_reflect", "pad_zero"):
            d["pad"] = self.pad
        elif self.kind == "upsample_nearest":
            d["factor"] = self.factor
        return d

    @staticmethod
    def from_json(d: dict) -> "LayerSpec":
        allowed = {"kind", "name", "in_channels", "out_channels", "kernel",
                   "stride", "pad", "factor", "variant", "affine", "weight"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown layer fields: {sorted(unknown)}")
        return LayerSpec(**d)


@dataclass
class NetworkGraph:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self._validate_chain()

    def _validate_chain(self):
        ch = None
        adain_count = 0
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                if ch is not None and ch != layer.in_channels:
                    raise ConfigError(
                        f"layer {i}: conv expects {layer.in_channels} channels "
                        f"but receives {ch}"
                    )
                ch = layer.out_channels
            elif layer.kind == "norm" and layer.variant == "adain":
                adain_count += 1
        if adain_count > 1:
            raise ConfigError("at most one adain layer is supported per graph")

    @property
    def receptive_field_radius(self) -> int:
        return receptive_field(self)

    def channels_at(self, index: int) -> int | None:
        """Channel count entering layer ``index`` (None if undetermined)."""
        ch = None
        for layer in self.layers[:index]:
            if layer.kind == "conv":
                ch = layer.out_channels
        return ch

    def norm_layer_ids(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "norm"]

    def layer_named(self, name: str) -> int:
        for i, l in enumerate(self.layers):
            if l.name == name:
                return i
        raise ConfigError(f"no layer named {name!r} in graph")

    def to_json(self) -> dict:
        return {"layers": [l.to_json() for l in self.layers]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @staticmethod
    def from_json(doc: dict) -> "NetworkGraph":
        if "layers" not in doc:
            raise ConfigError("graph document has no 'layers' array")
        return NetworkGraph([LayerSpec.from_json(d) for d in doc["layers"]])

    @staticmethod
    def load(path) -> "NetworkGraph":
        with open(path) as fh:
            return NetworkGraph.from_json(json.load(fh))


class WeightStore:
    """Named float32 arrays backing a graph's conv and affine layers."""

    def __init__(self, tensors: dict | None = None):
        self.tensors: dict[str, np.ndarray] = {}
        for name, arr in (tensors or {}).items():
            self.add(name, arr)

    def add(self, name: str, arr: np.ndarray) -> None:
        if name in self.tensors:
            raise WeightFormatError(f"duplicate weight name {name!r}")
        self.tensors[name] = np.ascontiguousarray(arr, dtype=DT)

    def get(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightFormatError(f"weight {name!r} not found in store") from None

    def conv(self, base: str) -> ConvWeights:
        return ConvWeights(self.get(f"{base}/kernel"), self.get(f"{base}/bias"))

    def affine(self, base: str) -> AffineParams:
        return AffineParams(self.get(f"{base}/gamma"), self.get(f"{base}/beta"))

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.tensors.values())

    def save(self, path) -> None:
        save_weights(self, path)


def save_weights(store: WeightStore, path) -> None:
    """Serialize to the engine container (little-endian, f32 only)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(store.tensors)))
        for name, arr in store.tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BB", 0, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if len(view) < len(MAGIC) + 4 or bytes(view[: len(MAGIC)]) != MAGIC:
        raise WeightFormatError(f"bad magic: not a {MAGIC.decode()} container")
    off = len(MAGIC)

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise WeightFormatError("truncated weight container")
        chunk = view[off:off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    store = WeightStore()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        dtype, ndim = struct.unpack("<BB", take(2))
        if dtype != 0:
            raise WeightFormatError(f"tensor {name!r}: unsupported dtype code {dtype}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_vals = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = take(4 * n_vals)
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        store.add(name, arr)
    if off != len(view):
        raise WeightFormatError("trailing bytes after final tensor")
    return store


def validate_weights(graph: NetworkGraph, store: WeightStore) -> None:
    """Check every referenced weight exists with shapes matching the graph."""
    for i, layer in enumerate(graph.layers):
        if layer.kind == "conv":
            w = store.conv(layer.weight)
            expect = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            if w.kernel.shape != expect:
                raise WeightFormatError(
                    f"layer {i}: kernel {layer.weight!r} has shape {w.kernel.shape}, "
                    f"graph expects {expect}"
                )
        elif layer.kind == "norm" and layer.affine:
            params = store.affine(layer.weight)
            ch = graph.channels_at(i)
            if ch is not None and params.gamma.shape[0] != ch:
                raise WeightFormatError(
                    f"layer {i}: affine params {layer.weight!r} have "
                    f"{params.gamma.shape[0]} channels, graph expects {ch}"
                )


def _norm_affine(layer: LayerSpec, weights: WeightStore | None, channels: int) -> AffineParams | None:
    if not layer.affine:
        return None
    if weights is None:
        raise ConfigError("affine norm layer requires a weight store")
    return weights.affine(layer.weight)


def _apply_layer(layer: LayerSpec, layer_id: int, weights: WeightStore | None,
                 x: Tensor, bank: StatsBank | None, alpha: float) -> Tensor:
    if layer.kind == "conv":
        return conv2d(x, weights.conv(layer.weight), layer.stride)
    if layer.kind == "relu":
        return relu(x)
    if layer.kind == "maxpool2":
        return maxpool2(x)
    if layer.kind == "upsample_nearest":
        return resize_nearest(x, layer.factor)
    if layer.kind == "pad_reflect":
        return pad(x, PadSpec.uniform(layer.pad, "reflect"))
    if layer.kind == "pad_zero":
        return pad(x, PadSpec.uniform(layer.pad, "zero"))
    # norm
    variant = layer.variant
    if variant == "in":
        return normstats.instance_norm(x, _norm_affine(layer, weights, x.c))
    if variant == "iw":
        return normstats.instance_whiten(x)
    if bank is None:
        raise ConfigError(f"layer {layer_id}: {variant} norm requires a StatsBank")
    if variant == "tin":
        if bank.mode == "capture":
            st = normstats.channel_stats(x)
            bank.store(layer_id, st)
        else:
            st = bank.fetch(layer_id)
            if not isinstance(st, ChannelStats):
                raise ConfigError(f"layer {layer_id}: bank entry is not channel stats")
        return normstats.thumbnail_instance_norm(x, st, _norm_affine(layer, weights, x.c))
    if variant == "tiw":
        if bank.mode == "capture":
            st = normstats.whitening_stats(x)
            bank.store(layer_id, st)
        else:
            st = bank.fetch(layer_id)
            if not isinstance(st, WhiteningStats):
                raise ConfigError(f"layer {layer_id}: bank entry is not whitening stats")
        return normstats.thumbnail_instance_whiten(x, st)
    # adain
    if bank.mode == "capture":
        style = bank.style.get(layer_id)
        if style is None:
            raise normstats.StatsError(
                f"layer {layer_id}: style statistics missing; run the style pass first"
            )
        entry = AdainStats(normstats.channel_stats(x), style)
        bank.store(layer_id, entry)
    else:
        entry = bank.fetch(layer_id)
        if not isinstance(entry, AdainStats):
            raise ConfigError(f"layer {layer_id}: bank entry is not adain stats")
    transferred = normstats.adain_transfer(entry.content, entry.style, x)
    return normstats.blend_style(x, transferred, alpha)


def forward(graph: NetworkGraph, weights: WeightStore | None, x: Tensor,
            bank: StatsBank | None = None, alpha: float = 1.0) -> Tensor:
    """Run the graph layer by layer.

    In capture mode the bank is filled by tin/tiw/adain layers; in apply
    mode they read it.  Plain in/iw layers always use their own input's
    statistics.  Intermediate activations are released as execution moves
    forward, so at most two big tensors are live per step.
    """
    cur = x
    del x
    for layer_id, layer in enumerate(graph.layers):
        cur = _apply_layer(layer, layer_id, weights, cur, bank, alpha)
    return cur


def capture_style_stats(graph: NetworkGraph, weights: WeightStore | None,
                        style: Tensor, bank: StatsBank) -> None:
    """Feed the style image through the encoder prefix and record, at the
    adain layer, the channel statistics its features carry there."""
    cur = style
    del style
    for layer_id, layer in enumerate(graph.layers):
        if layer.kind == "norm":
            if layer.variant == "adain":
                bank.style[layer_id] = normstats.channel_stats(cur)
                return
            raise ConfigError(
                f"layer {layer_id}: {layer.variant} norm ahead of the adain layer "
                "is not supported in the style pass"
            )
        cur = _apply_layer(layer, layer_id, weights, cur, None, 1.0)
    raise ConfigError("graph has no adain layer; style pass is meaningless")


def save_stats_bank(bank: StatsBank, path) -> None:
    """Persist captured statistics in the weight container format.

    Entry names are ``stats/<layer-id>/<part>`` so a capture pass can be
    reused across runs alongside (or instead of) a fresh thumbnail pass.
    """
    store = WeightStore()
    for layer_id, entry in sorted(bank.entries.items()):
        base = f"stats/{layer_id}"
        if isinstance(entry, ChannelStats):
            store.add(f"{base}/mean", entry.mean)
            store.add(f"{base}/std", entry.std)
        elif isinstance(entry, WhiteningStats):
            store.add(f"{base}/mean", entry.mean)
            store.add(f"{base}/invsqrtcov", entry.inv_sqrt_cov)
        elif isinstance(entry, AdainStats):
            store.add(f"{base}/mean", entry.content.mean)
            store.add(f"{base}/std", entry.content.std)
            store.add(f"{base}/style_mean", entry.style.mean)
            store.add(f"{base}/style_std", entry.style.std)
        else:
            raise ConfigError(f"cannot serialize bank entry of type {type(entry).__name__}")
    save_weights(store, path)


def load_stats_bank(path) -> StatsBank:
    """Rebuild an apply-mode bank from a container written by save_stats_bank."""
    store = load_weights(path)
    grouped: dict[int, dict[str, np.ndarray]] = {}
    for name, arr in store.tensors.items():
        prefix, layer_id, part = name.split("/", 2)
        if prefix != "stats":
            raise WeightFormatError(f"unexpected entry {name!r} in stats container")
        grouped.setdefault(int(layer_id), {})[part] = arr
    bank = StatsBank(mode="apply")
    for layer_id, parts in grouped.items():
        if "invsqrtcov" in parts:
            bank.store(layer_id, WhiteningStats(parts["mean"], parts["invsqrtcov"]))
        elif "style_mean" in parts:
            bank.store(layer_id, AdainStats(
                ChannelStats(parts["mean"], parts["std"]),
                ChannelStats(parts["style_mean"], parts["style_std"])))
        else:
            bank.store(layer_id, ChannelStats(parts["mean"], parts["std"]))
    return bank


def receptive_field(graph: NetworkGraph) -> int:
    """Chebyshev radius of input influence on any output pixel.

    Propagates, for a probe input position, the integer interval of output
    positions that can observe it.  Floor effects at pooling/upsampling make
    the radius depend on the probe's phase, so the maximum is taken over one
    full period of the cumulative scale factors.
    """
    period = 1
    for layer in graph.layers:
        if layer.kind == "conv":
            period *= max(1, layer.stride)
        elif layer.kind == "maxpool2":
            period *= 2
        elif layer.kind == "upsample_nearest":
            period *= max(1, layer.factor)
    period = min(period, 4096)

    radius = Fraction(0)
    base = 1_000_000  # deep interior; border clamping never engages
    for p in range(base, base + period):
        lo = hi = p
        # affine map from a layer-output index q to its input-space center:
        # center(q) = scale * q + offset
        scale = Fraction(1)
        offset = Fraction(0)
        for layer in graph.layers:
            if layer.kind == "conv":
                k, s = layer.kernel, layer.stride
                lo, hi = -((k - 1 - lo) // s), hi // s
                offset += scale * Fraction(k - 1, 2)
                scale *= s
            elif layer.kind == "maxpool2":
                lo, hi = -((1 - lo) // 2), hi // 2
                offset += scale * Fraction(1, 2)
                scale *= 2
            elif layer.kind == "upsample_nearest":
                f = layer.factor
                lo, hi = lo * f, hi * f + f - 1
                offset -= scale * Fraction(f - 1, 2 * f)
                scale /= f
            elif layer.kind in ("pad_reflect", "pad_zero"):
                lo, hi = lo + layer.pad, hi + layer.pad
                offset -= scale * layer.pad
            # relu and norm layers are pointwise once statistics are fixed
        radius = max(radius, p - (scale * lo + offset), (scale * hi + offset) - p)
    return int(radius.__ceil__())
