import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundplane.geometry import (
    ConvexPolygon,
    DegenerateTriangle,
    InvalidParallelogram,
    Parallelogram,
    Point2,
    Rect,
    aabb,
    aabb_array,
    aabb_iou,
    as_convex_polygon,
    convex_intersection,
    distance_to_triangle,
    distances_to_triangle,
    exact_iou,
    point_in_triangle,
    points_in_triangle,
    reconstruct_parallelogram,
    shoelace_area,
    signed_area,
    triangle,
    triangle_from_parallelogram,
)

from oracles import inside_convex, mc_area, mc_iou, random_parallelogram, rotated_square

UNIT = Parallelogram([(0, 0), (1, 0), (1, 1), (0, 1)])


def test_reconstruct_unit_square():
    par = reconstruct_parallelogram(triangle((0.5, 0.5), (0, 0), (1, 0)))
    assert par.vertices == ((0, 0), (1, 0), (1, 1), (0, 1))


def test_reconstruct_symmetric_about_origin():
    par = reconstruct_parallelogram(triangle((0, 0), (-1, -1), (1, -1)))
    assert par.vertices == ((-1, -1), (1, -1), (1, 1), (-1, 1))


def test_reconstruct_rejects_collinear():
    with pytest.raises(DegenerateTriangle):
        reconstruct_parallelogram(triangle((0, 0), (1, 1), (2, 2)))


def test_extract_unit_square():
    tri = triangle_from_parallelogram(UNIT)
    assert tri.p0 == (0.5, 0.5)
    assert {tri.p1, tri.p2} == {(0, 0), (1, 0)}


def test_extract_zero_area_is_flagged_downstream():
    flat = Parallelogram([(0, 0), (1, 0), (2, 0), (1, 0)], (1, 0))
    assert flat.is_degenerate
    with pytest.raises(DegenerateTriangle):
        reconstruct_parallelogram(triangle_from_parallelogram(flat))


def test_parallelogram_invariant_checked():
    with pytest.raises(InvalidParallelogram):
        Parallelogram([(0, 0), (1, 0), (1, 1), (0, 2)])
    with pytest.raises(InvalidParallelogram):
        Parallelogram([(0, 0), (1, 0), (1, 1), (0, 1)], center=(0.6, 0.5))


def test_round_trip_many_triangles():
    rng = np.random.default_rng(7)
    worst = 0.0
    for pts in rng.uniform(-500, 500, (10_000, 3, 2)):
        tri = triangle(*pts)
        back = triangle_from_parallelogram(reconstruct_parallelogram(tri))
        got = np.asarray(back)
        if np.abs(got[1] - pts[1]).max() > np.abs(got[1] - pts[2]).max():
            got = got[[0, 2, 1]]
        worst = max(worst, float(np.abs(got - pts).max()))
    assert worst < 1e-9


def test_shoelace_basic():
    assert shoelace_area(UNIT.vertices) == 1.0
    assert shoelace_area([]) == 0.0
    assert shoelace_area(ConvexPolygon()) == 0.0
    assert signed_area([(0, 0), (0, 1), (1, 1), (1, 0)]) == -1.0


def _random_convex(rng, n=9):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    rx, ry = rng.uniform(1, 6, 2)
    return np.column_stack([3 + rx * np.cos(ang), -2 + ry * np.sin(ang)])


def test_shoelace_matches_sampling():
    rng = np.random.default_rng(3)
    for k in range(5):
        pts = _random_convex(rng)
        est = mc_area(pts, n=400_000, seed=k)
        assert shoelace_area(pts) == pytest.approx(est, rel=0.01)


def test_intersection_self_and_disjoint():
    a = as_convex_polygon(UNIT.vertices)
    inter = convex_intersection(a, a)
    assert set(inter.vertices) == set(a.vertices)
    far = as_convex_polygon([(5, 5), (6, 5), (6, 6), (5, 6)])
    assert convex_intersection(a, far).is_empty


def test_intersection_is_inside_both():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = random_parallelogram(rng, 5), random_parallelogram(rng, 5)
        inter = convex_intersection(as_convex_polygon(a), as_convex_polygon(b))
        if inter.is_empty:
            continue
        v = np.asarray(inter.vertices)
        grown_a = a + 1e-7 * (a - a.mean(axis=0))
        grown_b = b + 1e-7 * (b - b.mean(axis=0))
        assert inside_convex(v, grown_a).all() and inside_convex(v, grown_b).all()


def test_iou_identity_and_disjoint():
    assert exact_iou(UNIT, UNIT) == 1.0
    assert exact_iou(UNIT, UNIT.translate(3, 0)) == 0.0


def test_rotated_45_octagon():
    # the overlap is a regular octagon of area 2(sqrt2 - 1); IoU is that over 2 - area
    rot = Parallelogram(rotated_square((0.5, 0.5), 1.0, math.pi / 4))
    inter = convex_intersection(as_convex_polygon(UNIT.vertices), as_convex_polygon(rot.vertices))
    octagon = 2 * (math.sqrt(2) - 1)
    assert len(inter) == 8
    assert inter.area == pytest.approx(octagon, abs=1e-12)
    assert exact_iou(UNIT, rot) == pytest.approx(octagon / (2 - octagon), abs=1e-12)
    assert exact_iou(UNIT, rot) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_iou_against_sampling():
    rng = np.random.default_rng(5)
    for k in range(10):
        a = random_parallelogram(rng, 2)
        b = random_parallelogram(rng, 2)
        got = exact_iou(Parallelogram(a), Parallelogram(b))
        assert got == pytest.approx(mc_iou(a, b, n=200_000, seed=k), abs=0.01)


def test_iou_orientation_independent():
    a = random_parallelogram(np.random.default_rng(0), 2)
    b = a + 1.5
    cw = Parallelogram(a[::-1])
    assert exact_iou(cw, Parallelogram(b)) == pytest.approx(exact_iou(Parallelogram(a), Parallelogram(b)), abs=1e-12)


def test_aabb_examples():
    assert aabb(UNIT) == Rect(Point2(0, 0), Point2(1, 1))
    box = aabb(Parallelogram(rotated_square((0, 0), 1.0, math.pi / 4)))
    h = math.sqrt(2) / 2
    assert np.allclose([*box.min, *box.max], [-h, -h, h, h], atol=1e-12)


def test_aabb_iou_examples():
    r = Rect(Point2(0, 0), Point2(1, 1))
    assert aabb_iou(r, r) == 1.0
    assert aabb_iou(r, Rect(Point2(0.5, 0), Point2(1.5, 1))) == pytest.approx(1 / 3)


def test_aabb_array_matches_scalar():
    rng = np.random.default_rng(2)
    pars = [Parallelogram(random_parallelogram(rng)) for _ in range(20)]
    arr = aabb_array(pars)
    for row, p in zip(arr, pars):
        r = aabb(p)
        assert tuple(row) == (r.min.x, r.min.y, r.max.x, r.max.y)


coord = st.floats(-100, 100, allow_nan=False)
size = st.floats(0.5, 40)


@settings(max_examples=200, deadline=None)
@given(coord, coord, size, size, coord, coord, size, size)
def test_axis_aligned_aabb_iou_is_exact(x0, y0, w0, h0, x1, y1, w1, h1):
    a = Parallelogram([(x0, y0), (x0 + w0, y0), (x0 + w0, y0 + h0), (x0, y0 + h0)])
    b = Parallelogram([(x1, y1), (x1 + w1, y1), (x1 + w1, y1 + h1), (x1, y1 + h1)])
    assert aabb_iou(aabb(a), aabb(b)) == pytest.approx(exact_iou(a, b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=3, max_size=3))
def test_iou_symmetric_and_bounded(pts):
    tri = triangle(*pts)
    try:
        a = reconstruct_parallelogram(tri)
    except DegenerateTriangle:
        return
    b = a.translate(3.0, -1.0)
    ab, ba = exact_iou(a, b), exact_iou(b, a)
    assert 0.0 <= ab <= 1.0
    assert ab == pytest.approx(ba, abs=1e-9)


TRI = triangle((0, 0), (1, 0), (0, 1))


def test_point_in_triangle():
    assert point_in_triangle((1 / 3, 1 / 3), TRI)
    assert not point_in_triangle((50, 50), TRI)
    assert point_in_triangle((1, 0), TRI)
    assert point_in_triangle((0.5, 0.0), TRI)


def test_distance_to_triangle():
    assert distance_to_triangle((0.2, 0.2), TRI) == 0.0
    assert distance_to_triangle((2, 0), TRI) == 1.0
    assert distance_to_triangle((0.5, -1), TRI) == 1.0


def test_vectorised_point_tests_match_scalar():
    rng = np.random.default_rng(9)
    tri = triangle(*rng.uniform(0, 10, (3, 2)))
    pts = rng.uniform(-2, 12, (500, 2))
    inside = points_in_triangle(pts, tri)
    dist = distances_to_triangle(pts, tri)
    for p, i, d in zip(pts, inside, dist):
        assert i == point_in_triangle(p, tri)
        assert d == pytest.approx(distance_to_triangle(p, tri), abs=1e-12)
