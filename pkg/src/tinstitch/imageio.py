"""8-bit RGB PNG input/output.

Loading maps pixel value v to float v/255; storing maps float f back to
round(clamp(f, 0, 1) * 255).  Writing goes through a row-streaming encoder
so a full-resolution output image never has to be resident as a whole.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np
from PIL import Image

from .tensor import DT, ShapeError, Tensor

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def load_image(path) -> np.ndarray:
    """Read a PNG (or any PIL-readable image) as uint8 RGB, shape (H, W, 3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def to_tensor(pixels: np.ndarray) -> Tensor:
    """uint8 (H, W, 3) -> float tensor (1, 3, H, W) scaled to [0, 1]."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) uint8 image, got {pixels.shape}")
    chw = np.transpose(pixels, (2, 0, 1)).astype(DT) / DT(255)
    return Tensor(chw[None])


def to_pixels(x: Tensor) -> np.ndarray:
    """Float tensor (1, 3, H, W) -> uint8 (H, W, 3), clamped and rounded."""
    if x.n != 1 or x.c != 3:
        raise ShapeError(f"expected a (1, 3, H, W) tensor, got {x.dims}")
    a = np.clip(x.data[0], 0.0, 1.0) * 255.0
    return np.transpose(np.rint(a).astype(np.uint8), (1, 2, 0))


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


class PngRowWriter:
    """Streams an 8-bit RGB PNG to disk one row band at a time.

    Rows use filter type 0 and a fixed zlib level, so the byte stream is a
    pure function of the pixel content.
    """

    def __init__(self, path, width: int, height: int):
        self.width = width
        self.height = height
        self._rows_written = 0
        self._fh = open(path, "wb")
        self._fh.write(_PNG_SIG)
        ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
        self._fh.write(_chunk(b"IHDR", ihdr))
        self._z = zlib.compressobj(level=6)

    def write_rows(self, rows: np.ndarray) -> None:
        """Append uint8 rows shaped (n, width, 3), top to bottom."""
        if rows.ndim != 3 or rows.shape[1] != self.width or rows.shape[2] != 3:
            raise ShapeError(f"band shape {rows.shape} does not match width {self.width}")
        if self._rows_written + rows.shape[0] > self.height:
            raise ShapeError("more rows than declared image height")
        filtered = np.empty((rows.shape[0], 1 + self.width * 3), dtype=np.uint8)
        filtered[:, 0] = 0
        filtered[:, 1:] = rows.reshape(rows.shape[0], -1)
        data = self._z.compress(filtered.tobytes())
        if data:
            self._fh.write(_chunk(b"IDAT", data))
        self._rows_written += rows.shape[0]

    def close(self) -> None:
        if self._fh is None:
            return
        if self._rows_written != self.height:
            self._fh.close()
            self._fh = None
            raise ShapeError(
                f"wrote {self._rows_written} rows, expected {self.height}"
            )
        tail = self._z.flush()
        if tail:
            self._fh.write(_chunk(b"IDAT", tail))
        self._fh.write(_chunk(b"IEND", b""))
        self._fh.close()
        self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is not None and self._fh is not None:
            self._fh.close()
            self._fh = None
            return
        self.close()


def save_image(path, pixels: np.ndarray) -> None:
    """Write uint8 (H, W, 3) pixels as PNG via the row streamer."""
    with PngRowWriter(path, pixels.shape[1], pixels.shape[0]) as w:
        w.write_rows(pixels)
