import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from bdd import geometry as geo
from bdd.errors import AnchorOffBoundary, InvalidBoundary, InvalidGrid


def test_closest_point_perpendicular_foot(unit_segment):
    pr = geo.closest_point(unit_segment, (0.5, 0.3))
    assert_allclose(pr.point, [0.5, 0.0])
    assert pr.distance == pytest.approx(0.3)


def test_closest_point_endpoint_clamp(unit_segment):
    pr = geo.closest_point(unit_segment, (2.0, 1.0))
    assert_allclose(pr.point, [1.0, 0.0])
    assert pr.distance == pytest.approx(math.sqrt(2))


def test_closest_point_corner(L_boundary):
    pr = geo.closest_point(L_boundary, (-1.0, -1.0))
    assert_allclose(pr.point, [0.0, 0.0])
    assert pr.distance == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("q, region", [((0.3, 0.4), geo.Region.A1),
                                       ((-0.2, 0.5), geo.Region.A0),
                                       ((0.5, 0.0), geo.Region.A1)])
def test_region_of(L_boundary, q, region):
    assert geo.region_of(L_boundary, q) == region


@pytest.mark.parametrize("q, d", [((0.3, 0.4), 0.3), ((-0.2, 0.5), -0.2), ((0.0, 0.0), 0.0)])
def test_signed_distance(L_boundary, q, d):
    assert geo.signed_distance(L_boundary, q) == pytest.approx(d, abs=1e-15)


def test_boundary_point_has_positive_zero(L_boundary):
    d = geo.signed_distance(L_boundary, (0.0, 0.0))
    assert d == 0.0 and math.copysign(1.0, d) == 1.0


@pytest.mark.parametrize("anchor, q, d", [((0, 0), (0.3, 0.4), 0.5),
                                          ((1, 0), (1, 0), 0.0),
                                          ((0, 1), (-0.3, 1.4), -0.5)])
def test_signed_distance_to_point(L_boundary, anchor, q, d):
    assert geo.signed_distance_to_point(L_boundary, anchor, q) == pytest.approx(d)


def test_signed_distance_to_point_rejects_off_boundary_anchor(L_boundary):
    with pytest.raises(AnchorOffBoundary):
        geo.signed_distance_to_point(L_boundary, (0.5, 0.5), (0, 0))


@pytest.mark.parametrize("q, s", [((0.5, 0.2), 1), ((0.2, 0.8), 2), ((0.5, 0.5), 1)])
def test_segment_assign_corner_split(L_boundary, q, s):
    part = geo.SegmentPartition.at_vertices(L_boundary)
    assert geo.segment_assign(part, L_boundary, q) == s


def test_discretize_examples(unit_segment, L_boundary):
    pts, s = geo.discretize(unit_segment, 3)
    assert_allclose(pts, [[0, 0], [0.5, 0], [1, 0]])
    pts, s = geo.discretize(L_boundary, 3)
    assert_allclose(pts, [[1, 0], [0, 0], [0, 1]])
    assert_allclose(s, [0, 1, 2])
    pts, _ = geo.discretize(unit_segment, 40)
    assert_allclose(np.diff(pts[:, 0]), np.full(39, 1 / 39), rtol=1e-12)


def test_discretize_rejects_tiny_grid(unit_segment):
    with pytest.raises(InvalidGrid):
        geo.discretize(unit_segment, 1)


def test_line_integral_examples(unit_segment, L_boundary):
    assert geo.line_integral(unit_segment, lambda x: np.ones(len(x))) == pytest.approx(1.0)
    assert geo.line_integral(unit_segment, lambda x: x[:, 0]) == pytest.approx(0.5)
    assert geo.line_integral(L_boundary, lambda x: 1.0) == pytest.approx(2.0)


@pytest.mark.parametrize("verts, kw", [
    ([[0, 0]], {}),
    ([[0, 0], [0, 0], [1, 1]], {}),
    ([[0, 0], [1, 1], [1, 0], [0, 1]], {}),  # bow tie
    ([[0, 0], [1, 0]], {"closed": True}),
    ([[0, 0], [1, 0]], {"treated_side": "up"}),
])
def test_invalid_boundaries(verts, kw):
    with pytest.raises(InvalidBoundary):
        geo.Boundary(np.array(verts, dtype=float), **kw)


def test_cumulative_arclength(L_boundary):
    assert_allclose(L_boundary.cumulative_arclength, [0, 1, 2])
    assert L_boundary.length == pytest.approx(2.0)


def test_closed_square_inside_is_treated():
    sq = geo.Boundary(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), closed=True)
    # counter-clockwise, so the interior is on the left
    assert geo.region_of(sq, (0.5, 0.5)) == geo.Region.A1
    assert geo.region_of(sq, (1.5, 0.5)) == geo.Region.A0
    assert geo.signed_distance(sq, (0.5, 0.9)) == pytest.approx(0.1)


def test_text_round_trip(tmp_path, L_boundary):
    part = geo.SegmentPartition.at_vertices(L_boundary)
    path = tmp_path / "b.txt"
    geo.write_boundary(path, L_boundary, part)
    b2, p2 = geo.read_boundary(path)
    assert_allclose(b2.vertices, L_boundary.vertices)
    assert b2.treated_side == "right" and not b2.closed
    assert_allclose(p2.breakpoints, part.breakpoints)


# -- properties ------------------------------------------------------------------

LB = geo.Boundary(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), treated_side="right")

coord = st.floats(-3, 3, allow_nan=False)
points = st.tuples(coord, coord)


@settings(max_examples=200, deadline=None)
@given(points)
def test_projection_idempotent(q):
    p = geo.closest_point(LB, q).point
    assert geo.closest_point(LB, p).distance <= LB.tol


@settings(max_examples=200, deadline=None)
@given(points, st.floats(0, 2))
def test_triangle_consistency(q, s):
    anchor = LB.point_at(s)
    d = geo.signed_distance(LB, q)
    dp = geo.signed_distance_to_point(LB, anchor, q)
    assert abs(d) <= abs(dp) + 1e-12
    best = geo.closest_point(LB, q).point
    assert abs(geo.signed_distance_to_point(LB, best, q)) == pytest.approx(abs(d), abs=2 * LB.tol)


@settings(max_examples=200, deadline=None)
@given(points)
def test_sign_matches_region(q):
    assert (geo.signed_distance(LB, q) >= 0) == (geo.region_of(LB, q) == geo.Region.A1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(-5, 5), st.floats(-5, 5),
       st.lists(points, min_size=1, max_size=20))
def test_isometry_equivariance(theta, tx, ty, qs):
    verts = np.array([[1.0, 0.0], [0.0, 0.0], [0.2, 1.0], [-0.5, 1.5]])
    part_s = [0.7, 1.5]
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    move = lambda p: p @ R.T + [tx, ty]  # noqa: E731
    b1 = geo.Boundary(verts, treated_side="right")
    b2 = geo.Boundary(move(verts), treated_side="right")
    q = np.array(qs)
    assert_allclose(np.abs(geo.signed_distances(b1, q)), np.abs(geo.signed_distances(b2, move(q))),
                    rtol=1e-10, atol=1e-10)
    p1 = geo.SegmentPartition.from_interior(b1, part_s)
    p2 = geo.SegmentPartition.from_interior(b2, part_s)
    far = np.abs(geo.signed_distances(b1, q)) > 1e-6
    assert np.array_equal(geo.segment_assign_many(p1, b1, q)[far],
                          geo.segment_assign_many(p2, b2, move(q))[far])
    m1 = geo.line_integral(b1, lambda x: x[:, 0] ** 2 + x[:, 1])
    m2 = geo.line_integral(b2, lambda x: (lambda y: y[:, 0] ** 2 + y[:, 1])((x - [tx, ty]) @ R))
    assert m2 == pytest.approx(m1, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60))
def test_discretize_points_on_boundary(J):
    pts, s = geo.discretize(LB, J)
    assert np.all(np.diff(s) > 0)
    assert np.all(np.abs(geo.signed_distances(LB, pts)) <= LB.tol)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.99), min_size=1, max_size=5, unique=True))
def test_line_integral_additive_over_partition(cuts):
    part = geo.SegmentPartition.from_interior(LB, sorted(cuts))
    m = lambda x: np.exp(x[:, 0]) * np.cos(x[:, 1])  # noqa: E731
    whole = geo.line_integral(LB, m)
    bp = part.breakpoints
    pieces = sum(geo.line_integral(LB, m, start=a, stop=b) for a, b in zip(bp[:-1], bp[1:]))
    assert pieces == pytest.approx(whole, rel=1e-12)
