"""Planar geometry primitives shared by routing, simulation, and evaluation.

Polylines are float64 arrays of shape (n, 2). The agent frame has +x forward
and +y to the left; ``theta`` is the world-frame heading in radians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap_angle(a):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    w = np.arctan2(np.sin(a), np.cos(a))
    return np.where(w <= -np.pi, np.pi, w) if isinstance(w, np.ndarray) else (np.pi if w <= -np.pi else w)


@dataclass
class Pose2:
    """Planar pose; theta is normalized into (-pi, pi] on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.x = float(self.x)
        self.y = float(self.y)
        self.theta = float(wrap_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def heading(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)], dtype=np.float64)


def as_polyline(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValueError(f"polyline must have shape (n, 2), got {p.shape}")
    return p


def segment_lengths(poly: np.ndarray) -> np.ndarray:
    d = np.diff(as_polyline(poly), axis=0)
    return np.hypot(d[:, 0], d[:, 1])


def cumulative_arc(poly: np.ndarray) -> np.ndarray:
    """Arc length of each vertex measured from the first vertex."""
    out = np.zeros(len(poly), dtype=np.float64)
    if len(poly) > 1:
        np.cumsum(segment_lengths(poly), out=out[1:])
    return out


def arc_length(poly) -> float:
    poly = as_polyline(poly)
    if len(poly) < 2:
        raise ValueError("polyline needs at least 2 points")
    return float(segment_lengths(poly).sum())


def validate_polyline(poly) -> np.ndarray:
    """Boundary check for polylines entering from files or messages."""
    poly = as_polyline(poly)
    if not np.all(np.isfinite(poly)):
        raise ValueError("polyline contains non-finite coordinates")
    if len(poly) < 2 or arc_length(poly) == 0.0:
        raise ValueError("degenerate polyline: needs >= 2 points with nonzero extent")
    return poly


def point_at_arc(poly: np.ndarray, s) -> np.ndarray:
    """Interpolate position(s) at arc position(s) ``s``, clamped to the ends."""
    poly = as_polyline(poly)
    cum = cumulative_arc(poly)
    s = np.clip(np.atleast_1d(np.asarray(s, dtype=np.float64)), 0.0, cum[-1])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, max(len(poly) - 2, 0))
    if len(poly) == 1:
        return np.repeat(poly, len(s), axis=0)
    seg = poly[idx + 1] - poly[idx]
    seg_len = np.where(cum[idx + 1] > cum[idx], cum[idx + 1] - cum[idx], 1.0)
    # walk (s - cum) along the unit direction rather than lerping by t: keeps
    # axis-aligned segments exact (no d/L*L round-trip)
    return poly[idx] + (s - cum[idx])[:, None] * (seg / seg_len[:, None])


def resample(poly, d: float) -> np.ndarray:
    """Resample a polyline at arc-length multiples of ``d``.

    Output points lie on the source polyline at arc positions 0, d, 2d, ...;
    the final point is always the source endpoint, so every consecutive pair
    is spaced exactly ``d`` apart except possibly the last.
    """
    poly = as_polyline(poly)
    if d <= 0.0:
        raise ValueError("spacing must be positive")
    total = arc_length(poly)
    n = int(np.floor(total / d + 1e-12)) + 1
    s = np.arange(n, dtype=np.float64) * d
    out = point_at_arc(poly, s)
    if total - s[-1] > 1e-9:
        out = np.vstack([out, poly[-1]])
    else:
        out[-1] = poly[-1]
    return out


def to_egocentric(points, pose: Pose2) -> np.ndarray:
    """World points into the agent frame of ``pose`` (+x forward, +y left)."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - pose.xy
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    rot = np.array([[c, s], [-s, c]], dtype=np.float64)
    return p @ rot.T


def from_egocentric(points, pose: Pose2) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return p @ rot.T + pose.xy


def project_onto(poly, point) -> tuple[float, float]:
    """Project a point onto a polyline.

    Returns ``(arc, dist)``: the arc position of the closest point measured
    from the start of the polyline, and the Euclidean distance to it. Ties
    between segments resolve to the earliest arc position.
    """
    poly = as_polyline(poly)
    p = np.asarray(point, dtype=np.float64)
    if len(poly) == 1:
        return 0.0, float(np.hypot(*(p - poly[0])))
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / np.where(seg_len2 > 0.0, seg_len2, 1.0)
    t = np.clip(np.where(seg_len2 > 0.0, t, 0.0), 0.0, 1.0)
    closest = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", closest - p, closest - p)
    i = int(np.argmin(d2))
    cum = cumulative_arc(poly)
    arc = cum[i] + t[i] * np.sqrt(seg_len2[i])
    return float(arc), float(np.sqrt(d2[i]))


# -- segment intersection ----------------------------------------------------

def _on_segment(p, q, r) -> bool:
    return (
        min(p[0], r[0]) <= q[0] <= max(p[0], r[0])
        and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True when segment p1-p2 touches or crosses segment q1-q2."""
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 0.0:
            return 1
        if v < 0.0:
            return -1
        return 0

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(q1, p1, q2):
        return True
    if d2 == 0 and _on_segment(q1, p2, q2):
        return True
    if d3 == 0 and _on_segment(p1, q1, p2):
        return True
    if d4 == 0 and _on_segment(p1, q2, p2):
        return True
    return False


def self_intersects(poly) -> bool:
    """Whether any two non-adjacent segments of the polyline touch.

    Candidate pairs come from a uniform grid hash over segment bounding
    boxes, so typical paths are checked in near-linear time; the pair test
    itself is exact up to float orientation tests.
    """
    poly = as_polyline(poly)
    n_seg = len(poly) - 1
    if n_seg < 2:
        return False
    lengths = segment_lengths(poly)
    cell = max(float(lengths.max()), 1e-9)
    grid: dict[tuple[int, int], list[int]] = {}
    mins = np.minimum(poly[:-1], poly[1:])
    maxs = np.maximum(poly[:-1], poly[1:])
    lo = np.floor(mins / cell).astype(np.int64)
    hi = np.floor(maxs / cell).astype(np.int64)
    checked: set[tuple[int, int]] = set()
    for i in range(n_seg):
        for cx in range(lo[i, 0], hi[i, 0] + 1):
            for cy in range(lo[i, 1], hi[i, 1] + 1):
                bucket = grid.setdefault((cx, cy), [])
                for j in bucket:
                    if i - j <= 1:
                        continue
                    key = (j, i)
                    if key in checked:
                        continue
                    checked.add(key)
                    if segments_intersect(poly[i], poly[i + 1], poly[j], poly[j + 1]):
                        return True
                bucket.append(i)
    return False


# -- ray casting primitives --------------------------------------------------

def ray_circle_interval(origin, direction, center, radius):
    """Parameter interval [t0, t1] where the ray is inside the disc, or None.

    ``direction`` need not be normalized; parameters are in units of its
    length. Only intervals overlapping t >= 0 are returned (clamped at 0).
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    oc = o - c
    a = float(d @ d)
    if a == 0.0:
        return None
    b = 2.0 * float(oc @ d)
    cc = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * a * cc
    if disc < 0.0:
        return None
    sq = np.sqrt(disc)
    t0 = (-b - sq) / (2.0 * a)
    t1 = (-b + sq) / (2.0 * a)
    if t1 < 0.0:
        return None
    return max(t0, 0.0), t1


def ray_convex_interval(origin, direction, vertices):
    """Parameter interval where the ray is inside a convex CCW polygon.

    Half-plane clipping against each edge; returns (t_enter, t_exit)
    intersected with t >= 0, or None when the ray misses the polygon.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v = as_polyline(vertices)
    t_lo, t_hi = 0.0, np.inf
    for i in range(len(v)):
        a = v[i]
        e = v[(i + 1) % len(v)] - a
        # outward normal of a CCW edge
        n = np.array([e[1], -e[0]], dtype=np.float64)
        c0 = float((o - a) @ n)
        c1 = float(d @ n)
        if c1 == 0.0:
            if c0 > 0.0:
                return None
            continue
        t = -c0 / c1
        if c1 > 0.0:
            t_hi = min(t_hi, t)
        else:
            t_lo = max(t_lo, t)
        if t_lo > t_hi:
            return None
    if t_hi < 0.0:
        return None
    return t_lo, t_hi


def point_in_convex(point, vertices, tol: float = 0.0) -> bool:
    p = np.asarray(point, dtype=np.float64)
    v = as_polyline(vertices)
    e = np.roll(v, -1, axis=0) - v
    rel = p - v
    cross = e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0]
    return bool(np.all(cross >= -tol))
