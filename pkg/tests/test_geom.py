"""Geometry primitives, checked against brute-force oracles where it counts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curbnav.geom import (
    Pose2,
    arc_length,
    cumulative_arc,
    from_egocentric,
    point_at_arc,
    project_onto,
    ray_circle_interval,
    ray_convex_interval,
    resample,
    segments_intersect,
    self_intersects,
    to_egocentric,
    validate_polyline,
    wrap_angle,
)
from oracles import at_arc_oracle as _at_arc_oracle
from oracles import self_intersects_oracle as _self_intersects_oracle
from oracles import walk as _walk


# -- angles and poses ---------------------------------------------------------

def test_wrap_angle_range_and_identity():
    xs = np.linspace(-12.0, 12.0, 2001)
    w = wrap_angle(xs)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    # wrapping is idempotent and 2-pi periodic
    assert np.allclose(wrap_angle(w), w)
    assert np.allclose(np.sin(w), np.sin(xs)) and np.allclose(np.cos(w), np.cos(xs))


def test_wrap_angle_boundary_maps_to_pi():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)


def test_pose_normalizes_theta():
    p = Pose2(1.0, 2.0, 7.0)
    assert -np.pi < p.theta <= np.pi
    assert np.allclose(p.heading(), [np.cos(p.theta), np.sin(p.theta)])


# -- arc length / interpolation ----------------------------------------------

def test_cumulative_arc_simple():
    poly = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    assert np.allclose(cumulative_arc(poly), [0.0, 3.0, 7.0])
    assert arc_length(poly) == pytest.approx(7.0)


def test_point_at_arc_interpolates_and_clamps():
    poly = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert np.allclose(point_at_arc(poly, [0.0, 2.5, 10.0]), [[0, 0], [2.5, 0], [10, 0]])
    assert np.allclose(point_at_arc(poly, [-5.0, 25.0]), [[0, 0], [10, 0]])


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_resample_arc_positions_exact(seed):
    rng = np.random.default_rng(seed)
    poly = _walk(rng, rng.integers(2, 30))
    d = float(rng.uniform(0.05, 2.0))
    out = resample(poly, d)
    # output k sits at arc position k*d on the source (the final point may
    # repeat the endpoint instead); chord gaps therefore never exceed d
    for k, q in enumerate(out[:-1]):
        assert np.allclose(q, _at_arc_oracle(poly, k * d), atol=1e-6)
    assert np.allclose(out[0], poly[0]) and np.allclose(out[-1], poly[-1])
    gaps = np.hypot(*np.diff(out, axis=0).T)
    assert np.all(gaps <= d + 1e-9)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_point_at_arc_matches_segment_walk(seed):
    rng = np.random.default_rng(seed)
    poly = _walk(rng, rng.integers(2, 20))
    ss = rng.uniform(0.0, arc_length(poly), size=12)
    got = point_at_arc(poly, ss)
    for s, g in zip(ss, got):
        assert np.allclose(g, _at_arc_oracle(poly, s), atol=1e-9)


def test_resample_rejects_bad_spacing():
    poly = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        resample(poly, 0.0)


def test_validate_polyline_rejects_junk():
    with pytest.raises(ValueError):
        validate_polyline(np.array([[0.0, 0.0]]))
    with pytest.raises(ValueError):
        validate_polyline(np.array([[0.0, 0.0], [np.nan, 1.0]]))
    with pytest.raises(ValueError):
        validate_polyline(np.zeros((3, 2)))  # zero extent


# -- projection ---------------------------------------------------------------

@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=30, deadline=None)
def test_project_onto_matches_dense_scan(seed):
    rng = np.random.default_rng(seed)
    poly = _walk(rng, rng.integers(2, 15))
    point = rng.uniform(-5.0, 5.0, size=2)
    arc, dist = project_onto(poly, point)

    # oracle: dense arc scan
    total = arc_length(poly)
    s = np.linspace(0.0, total, 20_001)
    pts = point_at_arc(poly, s)
    d = np.hypot(*(pts - point).T)
    i = int(np.argmin(d))
    assert dist == pytest.approx(float(d[i]), abs=2e-3)
    # arc can differ when two segments are near-equidistant; distance is the contract
    assert 0.0 <= arc <= total + 1e-9
    on_curve = point_at_arc(poly, arc)[0]
    assert np.hypot(*(on_curve - point)) == pytest.approx(dist, abs=1e-9)


def test_project_onto_tie_takes_earliest_arc():
    # square-ish hairpin: the point is equidistant from both legs
    poly = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    arc, dist = project_onto(poly, np.array([1.0, 1.0]))
    assert dist == pytest.approx(1.0)
    assert arc == pytest.approx(1.0)  # first leg wins the tie


# -- frames -------------------------------------------------------------------

@given(
    st.floats(-10, 10), st.floats(-10, 10), st.floats(-7, 7),
    st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=60, deadline=None)
def test_egocentric_round_trip(x, y, theta, seed):
    pose = Pose2(x, y, theta)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-20, 20, size=(7, 2))
    back = from_egocentric(to_egocentric(pts, pose), pose)
    assert np.allclose(back, pts, atol=1e-9)


def test_egocentric_axes():
    pose = Pose2(1.0, 1.0, np.pi / 2)  # facing +y
    ahead = to_egocentric(np.array([[1.0, 3.0]]), pose)[0]
    left = to_egocentric(np.array([[-1.0, 1.0]]), pose)[0]
    assert np.allclose(ahead, [2.0, 0.0], atol=1e-12)
    assert np.allclose(left, [0.0, 2.0], atol=1e-12)


# -- intersection tests -------------------------------------------------------

def test_segments_intersect_cases():
    assert segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    # touching at an endpoint counts
    assert segments_intersect((0, 0), (1, 0), (1, 0), (2, 5))
    # collinear overlap
    assert segments_intersect((0, 0), (3, 0), (1, 0), (2, 0))
    # collinear but disjoint
    assert not segments_intersect((0, 0), (1, 0), (2, 0), (3, 0))


@given(st.integers(min_value=0, max_value=100_000))
@settings(max_examples=150, deadline=None)
def test_self_intersects_matches_quadratic_oracle(seed):
    rng = np.random.default_rng(seed)
    # tight steps force frequent crossings; also exercise loops
    n = int(rng.integers(4, 24))
    poly = _walk(rng, n, step_scale=float(rng.uniform(0.3, 1.0)))
    assert self_intersects(poly) == _self_intersects_oracle(poly)


def test_self_intersects_examples():
    square_open = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert not self_intersects(square_open)
    bowtie = np.array([[0, 0], [2, 2], [2, 0], [0, 2]], dtype=float)
    assert self_intersects(bowtie)
    closed = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    assert self_intersects(closed)  # closing segment touches the first vertex


# -- ray primitives -----------------------------------------------------------

def _march_hit(origin, direction, inside, t_max=50.0):
    # march-and-bisect entry point; independent of the analytic solutions
    step = 1e-3
    t = 0.0
    was = inside(origin)
    while t < t_max:
        t += step
        p = origin + t * direction
        if inside(p) != was:
            lo, hi = t - step, t
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if inside(origin + mid * direction) != was:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
    return None


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_ray_circle_interval_matches_marching(seed):
    rng = np.random.default_rng(seed)
    origin = rng.uniform(-3, 3, size=2)
    ang = rng.uniform(-np.pi, np.pi)
    direction = np.array([np.cos(ang), np.sin(ang)])
    center = rng.uniform(-3, 3, size=2)
    radius = float(rng.uniform(0.3, 2.0))

    def inside(p):
        return np.hypot(*(p - center)) < radius

    got = ray_circle_interval(origin, direction, center, radius)
    hit = _march_hit(origin, direction, inside, t_max=15.0)
    if got is None:
        assert hit is None or inside(origin)
    else:
        t0, _ = got
        if inside(origin):
            assert t0 == pytest.approx(0.0, abs=1e-12)
        elif hit is not None:
            assert t0 == pytest.approx(hit, abs=1e-6)


def test_ray_convex_interval_square():
    square = np.array([[0, 0], [4, 0], [4, 4], [0, 4]], dtype=float)
    got = ray_convex_interval(np.array([-1.0, 2.0]), np.array([1.0, 0.0]), square)
    assert got is not None
    t0, t1 = got
    assert (t0, t1) == (pytest.approx(1.0), pytest.approx(5.0))
    assert ray_convex_interval(np.array([-1.0, 5.0]), np.array([1.0, 0.0]), square) is None
    # starting inside clamps the entry at zero
    t0, t1 = ray_convex_interval(np.array([2.0, 2.0]), np.array([0.0, 1.0]), square)
    assert t0 == pytest.approx(0.0) and t1 == pytest.approx(2.0)
