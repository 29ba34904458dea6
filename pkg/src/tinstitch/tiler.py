"""Sliding-window tile planning, patch extraction, and overlap-discard
reassembly.

A K-pixel window slides with stride S < K, so neighboring windows overlap by
K - S pixels.  Each window *owns* an exclusive output rectangle: ownership
boundaries sit at the midpoint of the overlap between neighbors (margin
(K - S)/2 on interior sides, extended to the image edge at borders), making
the ownership rectangles an exact partition of the image.  The discarded
margin is the halo that absorbs convolutional edge effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor import ConfigError, ShapeError, Tensor


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: origin (x, y), size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains(self, other: "Rect") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def intersects(self, other: "Rect") -> bool:
        return not (other.x >= self.x1 or other.x1 <= self.x
                    or other.y >= self.y1 or other.y1 <= self.y)

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]


def _axis_positions(dim: int, k: int, s: int) -> list[int]:
    """Window origins along one axis: 0, S, 2S, ...; the final window is
    shifted back so it ends exactly at the boundary."""
    if dim <= k:
        return [0]
    positions = list(range(0, dim - k, s))
    positions.append(dim - k)
    return positions


def _axis_boundaries(positions: list[int], dim: int, k: int) -> list[int]:
    """Ownership cut points: midpoint of each actual overlap, plus 0 and dim."""
    cuts = [0]
    for a, b in zip(positions, positions[1:]):
        overlap_mid = (b + min(a + k, dim)) // 2
        cuts.append(overlap_mid)
    cuts.append(dim)
    return cuts


@dataclass
class TilePlan:
    k: int
    s: int
    width: int
    height: int
    windows: list
    ownership: list

    @property
    def count(self) -> int:
        return len(self.windows)

    def to_json(self) -> dict:
        return {
            "k": self.k, "s": self.s, "width": self.width, "height": self.height,
            "windows": [r.as_list() for r in self.windows],
            "ownership": [r.as_list() for r in self.ownership],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")


def plan_tiles(width: int, height: int, k: int, s: int) -> TilePlan:
    """Lay out windows and their ownership partition for a width x height image.

    Requires k > s >= 1 (otherwise there is no overlap to discard).  Images
    smaller than the window along an axis get a single clamped window there.
    """
    if s < 1:
        raise ConfigError("stride must be >= 1")
    if k <= s:
        raise ConfigError(f"window {k} must exceed stride {s} to leave an overlap")
    if width < 1 or height < 1:
        raise ShapeError("image dims must be >= 1")

    xs = _axis_positions(width, k, s)
    ys = _axis_positions(height, k, s)
    xcuts = _axis_boundaries(xs, width, k)
    ycuts = _axis_boundaries(ys, height, k)

    windows, ownership = [], []
    for yi, y0 in enumerate(ys):
        for xi, x0 in enumerate(xs):
            win = Rect(x0, y0, min(k, width - x0), min(k, height - y0))
            own = Rect(xcuts[xi], ycuts[yi],
                       xcuts[xi + 1] - xcuts[xi], ycuts[yi + 1] - ycuts[yi])
            windows.append(win)
            ownership.append(own)
    return TilePlan(k, s, width, height, windows, ownership)


def extract_patch(image: Tensor, window: Rect) -> Tensor:
    """Copy of the window's sub-rectangle of the image tensor."""
    if window.x < 0 or window.y < 0 or window.x1 > image.w or window.y1 > image.h:
        raise ShapeError(f"window {window} outside image {image.w}x{image.h}")
    return Tensor(image.data[:, :, window.y:window.y1, window.x:window.x1].copy())


def assemble(patches: list, plan: TilePlan) -> Tensor:
    """Stitch stylized patches back together, keeping only ownership regions.

    Every output pixel is copied from exactly one patch; there is no
    blending, so any seam inconsistency stays visible to the tests.
    """
    if len(patches) != plan.count:
        raise ShapeError(f"got {len(patches)} patches, plan has {plan.count}")
    first = patches[0]
    out = np.empty((first.n, first.c, plan.height, plan.width), dtype=first.data.dtype)
    for patch, win, own in zip(patches, plan.windows, plan.ownership):
        if patch.h != win.h or patch.w != win.w:
            raise ShapeError(
                f"patch {patch.dims} does not match its window {win.w}x{win.h}"
            )
        sub = patch.data[:, :, own.y - win.y:own.y1 - win.y, own.x - win.x:own.x1 - win.x]
        out[:, :, own.y:own.y1, own.x:own.x1] = sub
    return Tensor(out)
