"""Dense float32 tensor type and the convolutional kernels built on it.

All arrays are batch-channel-height-width, float32, C-contiguous.
Convolution accumulates in float64 and casts back, so results are
reproducible to tight tolerances regardless of spatial extent.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .memtrack import active_tracker

DT = np.float32

# im2col buffers are built in row bands no larger than this (bytes of f64)
_CONV_BAND_BUDGET = 64 * 1024 * 1024


class ShapeError(ValueError):
    """Operand shapes make the requested operation undefined."""


class ConfigError(ValueError):
    """Operation parameters are inconsistent with the operands."""


class Tensor:
    """A rank-4 float32 array (N, C, H, W) with allocation tracking."""

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=DT)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be 4-d (N,C,H,W), got ndim={arr.ndim}")
        self.data = arr
        tracker = active_tracker()
        if tracker is not None:
            tracker.add(arr.nbytes)
            weakref.finalize(self, tracker.release, arr.nbytes)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def nbytes(self) -> int:
        return self.data.nbytes

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor{self.dims}"

    @staticmethod
    def zeros(n: int, c: int, h: int, w: int) -> "Tensor":
        return Tensor(np.zeros((n, c, h, w), dtype=DT))


@dataclass(frozen=True)
class PadSpec:
    """Spatial padding: zero fill or edge-excluding mirror reflection."""

    mode: str = "zero"  # "zero" | "reflect"
    left: int = 0
    right: int = 0
    top: int = 0
    bottom: int = 0

    def __post_init__(self):
        if self.mode not in ("zero", "reflect"):
            raise ConfigError(f"unknown pad mode {self.mode!r}")
        if min(self.left, self.right, self.top, self.bottom) < 0:
            raise ConfigError("pad amounts must be non-negative")

    @staticmethod
    def none() -> "PadSpec":
        return PadSpec()

    @staticmethod
    def uniform(amount: int, mode: str = "zero") -> "PadSpec":
        return PadSpec(mode, amount, amount, amount, amount)

    @property
    def is_zero_extent(self) -> bool:
        return self.left == self.right == self.top == self.bottom == 0


@dataclass
class ConvWeights:
    """Convolution kernel (out, in, kH, kW) plus per-output-channel bias."""

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.kernel = np.ascontiguousarray(self.kernel, dtype=DT)
        self.bias = np.ascontiguousarray(self.bias, dtype=DT)
        if self.kernel.ndim != 4:
            raise ConfigError("conv kernel must be 4-d (out,in,kH,kW)")
        if self.kernel.shape[0] < 1 or self.kernel.shape[2] < 1 or self.kernel.shape[3] < 1:
            raise ConfigError("conv kernel dims must be >= 1")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ConfigError("bias length must equal out_channels")

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def kh(self) -> int:
        return self.kernel.shape[2]

    @property
    def kw(self) -> int:
        return self.kernel.shape[3]


def pad(x: Tensor, spec: PadSpec) -> Tensor:
    """Pad spatial dims per ``spec``; reflect excludes the edge pixel."""
    if spec.is_zero_extent:
        return Tensor(x.data.copy())
    widths = ((0, 0), (0, 0), (spec.top, spec.bottom), (spec.left, spec.right))
    if spec.mode == "reflect":
        # numpy "reflect" mirrors without repeating the edge, which is the
        # convention here, but it requires pad < dim on each side
        if spec.top >= x.h or spec.bottom >= x.h or spec.left >= x.w or spec.right >= x.w:
            raise ShapeError(
                f"reflect pad {spec} too large for spatial dims {x.h}x{x.w}"
            )
        out = np.pad(x.data, widths, mode="reflect")
    else:
        out = np.pad(x.data, widths, mode="constant")
    return Tensor(out)


def _pad_edge_to_even(a: np.ndarray) -> np.ndarray:
    n, c, h, w = a.shape
    ph, pw = h % 2, w % 2
    if ph == 0 and pw == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, DT(0)))


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2.  Odd dims are edge-replicated first."""
    a = _pad_edge_to_even(x.data)
    n, c, h, w = a.shape
    v = a.reshape(n, c, h // 2, 2, w // 2, 2)
    return Tensor(v.max(axis=(3, 5)))


def resize_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel ``factor`` times along both spatial axes."""
    if factor < 1:
        raise ConfigError("upsample factor must be >= 1")
    if factor == 1:
        return Tensor(x.data.copy())
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    return Tensor(out)


def _bilinear_axis(in_size: int, out_size: int):
    """Half-pixel-center sample positions: src = (dst + 0.5)*scale - 0.5."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = (src - lo).astype(DT)
    return lo, hi, frac


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise ConfigError("resize targets must be >= 1")
    y0, y1, fy = _bilinear_axis(x.h, out_h)
    x0, x1, fx = _bilinear_axis(x.w, out_w)
    a = x.data
    top = a[:, :, y0, :]
    bot = a[:, :, y1, :]
    rows = top + fy[None, None, :, None] * (bot - top)
    left = rows[:, :, :, x0]
    right = rows[:, :, :, x1]
    out = left + fx[None, None, None, :] * (right - left)
    return Tensor(out)


def conv2d(x: Tensor, w: ConvWeights, stride: int = 1, padding: PadSpec | None = None) -> Tensor:
    """Cross-correlation of ``x`` with ``w`` (the usual conv-layer forward).

    Equivalent to the direct quadruple loop over (out-channel, in-channel,
    kernel row, kernel col); partial sums are accumulated in float64.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if x.c != w.in_channels:
        raise ConfigError(
            f"input has {x.c} channels but kernel expects {w.in_channels}"
        )
    xp = pad(x, padding).data if padding is not None and not padding.is_zero_extent else x.data
    n, c, hp, wp = xp.shape
    kh, kw = w.kh, w.kw
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    if hp < kh or wp < kw or oh < 1 or ow < 1:
        raise ShapeError(
            f"padded input {hp}x{wp} smaller than kernel {kh}x{kw}"
        )

    wmat = w.kernel.reshape(w.out_channels, c * kh * kw).astype(np.float64)
    bias = w.bias.astype(np.float64)[:, None]
    out = np.empty((n, w.out_channels, oh, ow), dtype=DT)

    row_bytes = c * kh * kw * ow * 8
    band = max(1, _CONV_BAND_BUDGET // max(row_bytes, 1))
    sc, sh, sw = xp.strides[1:]
    for i in range(n):
        img = xp[i]
        for r0 in range(0, oh, band):
            r1 = min(r0 + band, oh)
            view = as_strided(
                img[:, r0 * stride:, :],
                shape=(c, kh, kw, r1 - r0, ow),
                strides=(sc, sh, sw, sh * stride, sw * stride),
            )
            cols = view.astype(np.float64).reshape(c * kh * kw, (r1 - r0) * ow)
            y = wmat @ cols + bias
            out[i, :, r0:r1, :] = y.reshape(w.out_channels, r1 - r0, ow).astype(DT)
    return Tensor(out)
