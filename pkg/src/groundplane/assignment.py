"""Anchor-free, one-to-many label assignment.

Every feature-map cell is an anchor at its cell center. An anchor supervises a
ground-truth triangle when it lies inside the triangle or within a tolerance
``eta`` (input-image pixels) outside it. Because offsets are summed onto the
anchor, an anchor outside the triangle can still regress it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Point2, Triangle25, distances_to_triangle


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class AnchorGrid:
    width: int
    height: int
    stride: float
    origin_offset: float | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidConfig(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not self.stride > 0:
            raise InvalidConfig(f"stride must be positive, got {self.stride}")
        if self.origin_offset is None:
            object.__setattr__(self, "origin_offset", 0.5 * self.stride)

    def __len__(self) -> int:
        return self.width * self.height

    @property
    def anchors(self) -> np.ndarray:
        """``(width * height, 2)`` anchor positions in row-major cell order."""
        xs = np.arange(self.width) * self.stride + self.origin_offset
        ys = np.arange(self.height) * self.stride + self.origin_offset
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def anchor(self, index: int) -> Point2:
        if not 0 <= index < len(self):
            raise IndexError(f"anchor index {index} outside grid of {len(self)}")
        j, i = divmod(int(index), self.width)
        return Point2(i * self.stride + self.origin_offset, j * self.stride + self.origin_offset)

    def nearest_index(self, p) -> int:
        i = min(max(int(math.floor(p[0] / self.stride)), 0), self.width - 1)
        j = min(max(int(math.floor(p[1] / self.stride)), 0), self.height - 1)
        return j * self.width + i


class Assignment(NamedTuple):
    anchor_index: int
    gt_index: int


def build_anchor_grid(image_w: float, image_h: float, stride: float) -> AnchorGrid:
    """Grid of ``ceil(w / stride) x ceil(h / stride)`` anchors at cell centers."""
    if not (image_w > 0 and image_h > 0 and stride > 0):
        raise InvalidConfig(
            f"image size and stride must be positive: {image_w}x{image_h}, stride {stride}"
        )
    return AnchorGrid(math.ceil(image_w / stride), math.ceil(image_h / stride), float(stride))


def default_eta(grid: AnchorGrid) -> float:
    return 1.5 * grid.stride


def check_eta(eta: float) -> float:
    eta = float(eta)
    if not math.isfinite(eta) or eta < 0:
        raise InvalidConfig(f"tolerance eta must be finite and >= 0, got {eta}")
    return eta


def anchor_distances(grid: AnchorGrid, gts: Sequence[Triangle25]) -> np.ndarray:
    """``(n_gt, n_anchor)`` distances from each anchor to each closed triangle."""
    pts = grid.anchors
    if not gts:
        return np.zeros((0, len(pts)))
    return np.stack([distances_to_triangle(pts, t) for t in gts])


def assign_anchors(
    grid: AnchorGrid, gts: Sequence[Triangle25], eta: float | None = None
) -> list[Assignment]:
    """Assign anchors within ``eta`` of a triangle to it.

    An anchor claimed by several triangles goes to the nearest one, then to the
    lowest ground-truth index. Output is ordered by ``(gt_index, anchor_index)``.
    """
    eta = check_eta(default_eta(grid) if eta is None else eta)
    if not gts:
        return []
    dist = anchor_distances(grid, gts)
    active = dist <= eta
    masked = np.where(active, dist, np.inf)
    owner = np.argmin(masked, axis=0)  # first minimum -> lowest gt index on ties
    claimed = active.any(axis=0)
    out = [
        Assignment(int(a), int(owner[a]))
        for a in np.flatnonzero(claimed)
    ]
    out.sort(key=lambda x: (x.gt_index, x.anchor_index))
    return out


def assign_multilevel(
    grids: Sequence[AnchorGrid], gts: Sequence[Triangle25], etas: Sequence[float] | None = None
) -> list[list[Assignment]]:
    """Independent assignment on several feature levels (one grid per stride)."""
    if etas is None:
        etas = [None] * len(grids)
    return [assign_anchors(g, gts, e) for g, e in zip(grids, etas)]


def encode(tri: Triangle25, anchor) -> np.ndarray:
    """Offsets ``(v1, v2, v3)`` from ``anchor`` to ``(p0, p1, p2)``, shape ``(3, 2)``."""
    return np.asarray(tri, dtype=float) - np.asarray(anchor, dtype=float)


def build_training_targets(
    assignments: Sequence[Assignment], grid: AnchorGrid, gts: Sequence[Triangle25]
) -> np.ndarray:
    """Regression targets for each assignment, shape ``(len(assignments), 3, 2)``.

    Unassigned anchors get no row; they only act as classification negatives.
    """
    if not assignments:
        return np.zeros((0, 3, 2))
    anchors = grid.anchors[[a.anchor_index for a in assignments]]
    tris = np.asarray([gts[a.gt_index] for a in assignments], dtype=float)
    return tris - anchors[:, None, :]
