"""Deterministic procedural test images.

Real photographs cannot ship with the repo, so the test suite and the demo
command synthesize natural-looking content: band-limited multi-octave noise
for statistics work and smooth shaded blob fields for consistency checks.
All generators are pure functions of their seed.
"""

from __future__ import annotations

import numpy as np


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _upscale_bilinear(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Plain float64 bilinear resize used only for synthesis."""
    sy = (np.arange(h) + 0.5) * (a.shape[0] / h) - 0.5
    sx = (np.arange(w) + 0.5) * (a.shape[1] / w) - 0.5
    sy = np.clip(sy, 0, a.shape[0] - 1)
    sx = np.clip(sx, 0, a.shape[1] - 1)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, a.shape[0] - 1)
    x1 = np.minimum(x0 + 1, a.shape[1] - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def multi_octave(height: int, width: int, seed: int = 0, octaves: int = 6,
                 persistence: float = 0.55) -> np.ndarray:
    """Natural-ish uint8 RGB image: stacked value noise octaves plus a sky
    gradient, with per-channel tinting."""
    rng = _rng(seed)
    field = np.zeros((height, width), dtype=np.float64)
    amp, total = 1.0, 0.0
    for o in range(octaves):
        gh = max(2, 2 ** (o + 2))
        gw = max(2, int(gh * width / height))
        grid = rng.standard_normal((gh, gw))
        field += amp * _upscale_bilinear(grid, height, width)
        total += amp
        amp *= persistence
    field /= total
    ramp = np.linspace(-0.8, 0.8, height)[:, None]
    field = field + ramp
    tints = rng.uniform(0.6, 1.0, size=3)
    offsets = rng.uniform(-0.1, 0.1, size=3)
    chans = [field * t + off for t, off in zip(tints, offsets)]
    img = np.stack(chans, axis=-1)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return np.rint(img * 255).astype(np.uint8)


def smooth_blobs(height: int, width: int, seed: int = 0, blobs: int = 8) -> np.ndarray:
    """Smooth shaded field: large Gaussian blobs over a two-axis gradient.

    Almost no fine texture, but strong regional variation in brightness and
    local gradient direction; the worst case for per-patch normalization.
    """
    rng = _rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width
    field = 0.35 * xx + 0.5 * yy
    for _ in range(blobs):
        cy, cx = rng.uniform(0, 1, size=2)
        sigma = rng.uniform(0.12, 0.35)
        amp = rng.uniform(-0.8, 0.8)
        field += amp * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2)))
    tints = rng.uniform(0.7, 1.0, size=3)
    img = np.stack([field * t for t in tints], axis=-1)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return np.rint(img * 255).astype(np.uint8)


def banded_shading(height: int, width: int, seed: int = 0, wave_amp: float = 0.0053,
                   wave_lam: float = 170.0, dots: int = 2, cell: int = 64) -> np.ndarray:
    """Gentle curved shading plus a couple of small dark features.

    The shading amplitude sits just above the 8-bit quantization step, so
    the stored image carries banding contours whose orientation and spacing
    vary across the frame: content that is faint at global scale but
    dominates each local patch's statistics.  The dark dots supply the
    image's contrast and are confined to isolated ``cell``-aligned spots.
    """
    rng = _rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    a1 = rng.uniform(0, np.pi)
    a2 = a1 + rng.uniform(0.7, 1.2)
    field = np.full((height, width), 0.5)
    field += wave_amp * np.sin(
        2 * np.pi * (np.cos(a1) * xx + np.sin(a1) * yy) / wave_lam + rng.uniform(0, 7))
    field += wave_amp * np.sin(
        2 * np.pi * (np.cos(a2) * xx + np.sin(a2) * yy) / (wave_lam * 1.27) + rng.uniform(0, 7))
    ny, nx = max(1, height // cell - 2), max(1, width // cell - 2)
    cells = rng.choice(ny * nx, size=min(dots, ny * nx), replace=False)
    off = int(0.75 * cell)
    for c in cells:
        cy = (1 + int(c) // nx) * cell + off
        cx = (1 + int(c) % nx) * cell + off
        field -= 0.45 * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2)) / (2 * 9.0 ** 2))
    field = np.clip(field, 0, 1)
    img = np.stack([field, field * 0.97, field * 0.93], axis=-1)
    return np.rint(img * 255).astype(np.uint8)


def checker_ramp(height: int, width: int, seed: int = 0, cell: int = 17) -> np.ndarray:
    """Repeating texture modulated by a smooth brightness ramp."""
    rng = _rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    tex = ((yy // cell + xx // cell) % 2).astype(np.float64)
    tex += 0.15 * rng.standard_normal((height, width))
    ramp = 0.6 * (xx / width) + 0.25 * (yy / height)
    field = 0.35 * tex + ramp
    img = np.stack([field, 0.85 * field, 0.7 * field], axis=-1)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-9)
    return np.rint(img * 255).astype(np.uint8)
