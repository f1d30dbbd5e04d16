"""Planar geometry for ground-plane footprints.

A footprint is a parallelogram in image space. Detectors regress only a
triangle (center plus two adjacent "front" corners); the other two corners
follow by point reflection through the center.

Points are plain ``(x, y)`` tuples (``Point2``) so they stay cheap to build
in the NMS and clipping hot loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EPS_AREA = 1e-9
DEDUP_TOL = 1e-9


class DegenerateTriangle(ValueError):
    """Raised when a triangle has (near) zero area."""


class InvalidParallelogram(ValueError):
    """Raised when four vertices do not satisfy the reflection invariant."""


class Point2(NamedTuple):
    x: float
    y: float


class Triangle25(NamedTuple):
    """Center ``p0`` and the two front vertices ``p1``, ``p2``.

    ``p1``/``p2`` carry no canonical order.
    """

    p0: Point2
    p1: Point2
    p2: Point2


def _pt(p) -> Point2:
    return Point2(float(p[0]), float(p[1]))


def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def triangle(p0, p1, p2) -> Triangle25:
    return Triangle25(_pt(p0), _pt(p1), _pt(p2))


def triangle_area(tri: Triangle25) -> float:
    (x0, y0), (x1, y1), (x2, y2) = tri
    return abs(_cross(x0, y0, x1, y1, x2, y2)) * 0.5


def is_degenerate(tri: Triangle25, eps_area: float = EPS_AREA) -> bool:
    return triangle_area(tri) < eps_area


@dataclass(frozen=True)
class Parallelogram:
    """Four vertices ``(p1, p2, p3, p4)`` with ``p3 = 2 p0 - p1`` and ``p4 = 2 p0 - p2``.

    The center is stored alongside the vertices; construction checks that the
    two agree within ``atol`` (plus a tiny relative slack for large coordinates).
    """

    vertices: tuple[Point2, Point2, Point2, Point2]
    center: Point2

    def __init__(self, vertices: Sequence, center=None, atol: float = 1e-6):
        verts = tuple(_pt(v) for v in vertices)
        if len(verts) != 4:
            raise InvalidParallelogram(f"expected 4 vertices, got {len(verts)}")
        if center is None:
            center = ((verts[0].x + verts[2].x) * 0.5, (verts[0].y + verts[2].y) * 0.5)
        c = _pt(center)
        coords = [abs(v) for p in verts + (c,) for v in p]
        if not all(math.isfinite(v) for v in coords):
            raise InvalidParallelogram("non-finite coordinate")
        tol = atol + 1e-12 * max(coords)
        p1, p2, p3, p4 = verts
        for a, b in ((p1, p3), (p2, p4)):
            if abs(2 * c.x - a.x - b.x) > tol or abs(2 * c.y - a.y - b.y) > tol:
                raise InvalidParallelogram(
                    "vertices are not point-symmetric about the center"
                )
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "center", c)

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    @property
    def is_degenerate(self) -> bool:
        return self.area < EPS_AREA

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def translate(self, dx: float, dy: float) -> "Parallelogram":
        return Parallelogram(
            [(x + dx, y + dy) for x, y in self.vertices],
            (self.center.x + dx, self.center.y + dy),
        )


@dataclass(frozen=True)
class Rect:
    min: Point2
    max: Point2

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y:
            raise ValueError(f"inverted rect {self.min} .. {self.max}")

    @property
    def area(self) -> float:
        return (self.max.x - self.min.x) * (self.max.y - self.min.y)


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise convex polygon; empty when ``vertices`` is empty."""

    vertices: tuple[Point2, ...] = ()

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)


def reconstruct_parallelogram(tri: Triangle25, eps_area: float = EPS_AREA) -> Parallelogram:
    """Reflect the front vertices through the center to get the full footprint.

    Raises:
        DegenerateTriangle: if the triangle area is below ``eps_area``.
    """
    (x0, y0), p1, p2 = tri
    if not all(math.isfinite(v) for p in tri for v in p):
        raise ValueError("non-finite triangle coordinate")
    if triangle_area(tri) < eps_area:
        raise DegenerateTriangle(f"triangle area below {eps_area}: {tri}")
    p3 = (2.0 * x0 - p1[0], 2.0 * y0 - p1[1])
    p4 = (2.0 * x0 - p2[0], 2.0 * y0 - p2[1])
    return Parallelogram((p1, p2, p3, p4), (x0, y0))


def triangle_from_parallelogram(par: Parallelogram) -> Triangle25:
    return Triangle25(par.center, par.vertices[0], par.vertices[1])


def signed_area(vertices: Sequence) -> float:
    n = len(vertices)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def shoelace_area(poly) -> float:
    """Absolute area of an ordered polygon (either orientation)."""
    verts = poly.vertices if isinstance(poly, (ConvexPolygon, Parallelogram)) else poly
    return abs(signed_area(verts))


def as_convex_polygon(vertices: Iterable) -> ConvexPolygon:
    """Order a convex vertex loop counter-clockwise."""
    verts = [_pt(v) for v in vertices]
    if signed_area(verts) < 0:
        verts.reverse()
    return ConvexPolygon(tuple(verts))


def _dedup(points: list, tol: float) -> list:
    out = []
    for p in points:
        if out and abs(p[0] - out[-1][0]) <= tol and abs(p[1] - out[-1][1]) <= tol:
            continue
        out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= tol and abs(out[0][1] - out[-1][1]) <= tol:
        out.pop()
    return out


def _clip(subject: list, clip: Sequence) -> list:
    # Sutherland-Hodgman against each edge of a CCW convex clip polygon.
    out = subject
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        inp = out
        out = []
        sx, sy = inp[-1]
        s_in = _cross(ax, ay, bx, by, sx, sy) >= 0.0
        for ex, ey in inp:
            e_in = _cross(ax, ay, bx, by, ex, ey) >= 0.0
            if e_in != s_in:
                # segment s->e crosses the clip line
                dsx, dsy = ex - sx, ey - sy
                dcx, dcy = bx - ax, by - ay
                den = dcx * dsy - dcy * dsx
                if den != 0.0:
                    t = (dcx * (ay - sy) - dcy * (ax - sx)) / den
                    out.append((sx + t * dsx, sy + t * dsy))
            if e_in:
                out.append((ex, ey))
            sx, sy, s_in = ex, ey, e_in
    return out


def convex_intersection(a: ConvexPolygon, b: ConvexPolygon, tol: float = DEDUP_TOL) -> ConvexPolygon:
    """Intersection of two convex polygons; empty polygon when disjoint."""
    av = a.vertices if isinstance(a, ConvexPolygon) else as_convex_polygon(a).vertices
    bv = b.vertices if isinstance(b, ConvexPolygon) else as_convex_polygon(b).vertices
    if len(av) < 3 or len(bv) < 3:
        return ConvexPolygon()
    if signed_area(av) < 0:
        av = av[::-1]
    if signed_area(bv) < 0:
        bv = bv[::-1]
    pts = _dedup(_clip(list(av), bv), tol)
    if len(pts) < 3:
        return ConvexPolygon()
    return ConvexPolygon(tuple(Point2(x, y) for x, y in pts))


def _ccw_vertices(par: Parallelogram):
    v = par.vertices
    return v if signed_area(v) >= 0 else v[::-1]


def exact_iou(a: Parallelogram, b: Parallelogram, eps_area: float = EPS_AREA) -> float:
    """Polygon IoU of two footprints via convex clipping."""
    if a == b:
        return 1.0 if a.area >= eps_area else 0.0
    av, bv = _ccw_vertices(a), _ccw_vertices(b)
    area_a = abs(signed_area(av))
    area_b = abs(signed_area(bv))
    inter_pts = _dedup(_clip(list(av), bv), DEDUP_TOL)
    inter = abs(signed_area(inter_pts)) if len(inter_pts) >= 3 else 0.0
    union = area_a + area_b - inter
    if union < eps_area:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def aabb(par: Parallelogram) -> Rect:
    xs = [p[0] for p in par.vertices]
    ys = [p[1] for p in par.vertices]
    return Rect(Point2(min(xs), min(ys)), Point2(max(xs), max(ys)))


def aabb_iou(a: Rect, b: Rect) -> float:
    iw = min(a.max.x, b.max.x) - max(a.min.x, b.min.x)
    ih = min(a.max.y, b.max.y) - max(a.min.y, b.min.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union < EPS_AREA:
        return 0.0
    return inter / union


def point_in_triangle(p, tri: Triangle25) -> bool:
    """Closed-region test: boundary points count as inside."""
    px, py = p
    (x0, y0), (x1, y1), (x2, y2) = tri
    c1 = _cross(x0, y0, x1, y1, px, py)
    c2 = _cross(x1, y1, x2, y2, px, py)
    c3 = _cross(x2, y2, x0, y0, px, py)
    return (c1 >= 0 and c2 >= 0 and c3 >= 0) or (c1 <= 0 and c2 <= 0 and c3 <= 0)


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    t = 0.0 if den == 0.0 else ((px - ax) * dx + (py - ay) * dy) / den
    t = min(max(t, 0.0), 1.0)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def distance_to_triangle(p, tri: Triangle25) -> float:
    """Euclidean distance from ``p`` to the closed triangle (0 inside)."""
    if point_in_triangle(p, tri):
        return 0.0
    px, py = p
    (x0, y0), (x1, y1), (x2, y2) = tri
    return min(
        _point_segment_distance(px, py, x0, y0, x1, y1),
        _point_segment_distance(px, py, x1, y1, x2, y2),
        _point_segment_distance(px, py, x2, y2, x0, y0),
    )


# Vectorized counterparts used by anchor assignment. They evaluate the same
# expressions in the same order as the scalar versions so results agree bitwise.


def points_in_triangle(points: np.ndarray, tri: Triangle25) -> np.ndarray:
    px, py = points[:, 0], points[:, 1]
    (x0, y0), (x1, y1), (x2, y2) = tri
    c1 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    c2 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    c3 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
    return ((c1 >= 0) & (c2 >= 0) & (c3 >= 0)) | ((c1 <= 0) & (c2 <= 0) & (c3 <= 0))


def _segment_distances(px, py, ax, ay, bx, by) -> np.ndarray:
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        t = np.zeros_like(px)
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / den
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def distances_to_triangle(points: np.ndarray, tri: Triangle25) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    px, py = points[:, 0], points[:, 1]
    (x0, y0), (x1, y1), (x2, y2) = tri
    d = np.minimum(
        np.minimum(
            _segment_distances(px, py, x0, y0, x1, y1),
            _segment_distances(px, py, x1, y1, x2, y2),
        ),
        _segment_distances(px, py, x2, y2, x0, y0),
    )
    d[points_in_triangle(points, tri)] = 0.0
    return d


def aabb_array(footprints: Sequence[Parallelogram]) -> np.ndarray:
    """``(n, 4)`` array of ``[xmin, ymin, xmax, ymax]`` rows."""
    if not footprints:
        return np.zeros((0, 4))
    v = np.array([f.vertices for f in footprints], dtype=float)
    return np.concatenate([v.min(axis=1), v.max(axis=1)], axis=1)
