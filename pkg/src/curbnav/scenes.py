"""Procedural 2D sidewalk scenes.

A scene is a union of convex walkable polygons (corridor quads plus joint
discs approximated by 16-gons), static circle/box obstacles, a ground-truth
center route, spawn/goal endpoints, and scripted pedestrians. Generation is
a pure function of (seed, kind, difficulty).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import Pose2, as_polyline, cumulative_arc, point_at_arc, point_in_convex
from . import planner

KINDS = ("straight", "L", "C", "intersection", "obstacle_course")
_JOINT_SIDES = 16


class GenerationFailed(RuntimeError):
    pass


@dataclass
class PedestrianSpec:
    spawn: tuple  # (x, y)
    goal: tuple  # (x, y)
    speed: float  # m/s


@dataclass
class Scene:
    seed: int
    kind: str
    walkable: list  # convex CCW polygons, each (k, 2) float64
    circles: list  # (cx, cy, r)
    boxes: list  # (xmin, ymin, xmax, ymax)
    gt_route: np.ndarray
    spawn: Pose2
    goal: tuple
    goal_radius: float = 2.0
    pedestrians: list = field(default_factory=list)

    @property
    def ref(self) -> str:
        return f"{self.kind}-{self.seed}"

    def contains(self, point, tol: float = 1e-9) -> bool:
        return any(point_in_convex(point, poly, tol) for poly in self.walkable)

    def bounds(self) -> tuple:
        allv = np.concatenate(self.walkable, axis=0)
        return (
            float(allv[:, 0].min()),
            float(allv[:, 1].min()),
            float(allv[:, 0].max()),
            float(allv[:, 1].max()),
        )


def _regular_polygon(center, radius: float, sides: int = _JOINT_SIDES) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(sides) / sides
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1)


def corridor_polys(center, width: float) -> list:
    """Cover a corridor of the given width around a center polyline.

    One quad per segment (end caps perpendicular to the segment) plus a
    16-gon disc at every interior joint to fill the outer elbow wedges.
    """
    center = as_polyline(center)
    h = width / 2.0
    polys = []
    for a, b in zip(center[:-1], center[1:]):
        d = b - a
        norm = float(np.hypot(*d))
        if norm == 0.0:
            continue
        n = np.array([-d[1], d[0]]) / norm
        polys.append(np.array([a - n * h, b - n * h, b + n * h, a + n * h]))
    for joint in center[1:-1]:
        polys.append(_regular_polygon(joint, h))
    return polys


def _route_arc(kind: str, rng) -> np.ndarray:
    """Center path vertices for a scene kind, starting at the origin."""
    phi = rng.uniform(0.0, 2.0 * np.pi)
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])

    if kind in ("straight", "obstacle_course"):
        length = rng.uniform(40.0, 80.0) if kind == "straight" else rng.uniform(50.0, 70.0)
        local = np.array([[0.0, 0.0], [length, 0.0]])
    elif kind == "L":
        l1, l2 = rng.uniform(20.0, 40.0, size=2)
        sgn = rng.choice([-1.0, 1.0])
        local = np.array([[0.0, 0.0], [l1, 0.0], [l1, sgn * l2]])
    elif kind == "C":
        # entry straight, ~150 degree arc, exit straight; ~60 m total
        r = rng.uniform(14.0, 18.0)
        span = rng.uniform(2.2, 2.8)
        sgn = rng.choice([-1.0, 1.0])
        lead = rng.uniform(5.0, 8.0)
        n_arc = max(int(np.ceil(span / np.deg2rad(5.0))), 8)
        u = span * np.linspace(0.0, 1.0, n_arc + 1)
        arc = np.stack([r * np.sin(u), sgn * r * (1.0 - np.cos(u))], axis=1)
        entry = np.array([[-lead, 0.0], [0.0, 0.0]])
        tangent = np.array([np.cos(span), sgn * np.sin(span)])
        exit_pt = arc[-1] + tangent * rng.uniform(5.0, 8.0)
        local = np.vstack([entry, arc[1:], exit_pt])
    elif kind == "intersection":
        l1 = rng.uniform(20.0, 35.0)
        l2 = rng.uniform(20.0, 35.0)
        turn = rng.choice([-1.0, 0.0, 1.0])
        if turn == 0.0:
            local = np.array([[0.0, 0.0], [l1 + l2, 0.0]])
        else:
            local = np.array([[0.0, 0.0], [l1, 0.0], [l1, turn * l2]])
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return local @ rot.T


def _lateral_point(center, s: float, lateral: float, total: float) -> np.ndarray:
    p = point_at_arc(center, s)[0]
    eps = 0.5
    t = point_at_arc(center, min(s + eps, total))[0] - point_at_arc(center, max(s - eps, 0.0))[0]
    norm = float(np.hypot(*t))
    n = np.array([-t[1], t[0]]) / norm if norm > 0 else np.array([0.0, 1.0])
    return p + n * lateral


def _place_pedestrians(rng, center, width: float, count: int, walkable, circles, boxes) -> list:
    """Pedestrians shuttle forever between two endpoints, so every leg must
    stay viable: endpoints away from the route ends (one of them would sit in
    the success region every other leg), and the straight walk chord inside
    the corridor and clear of obstacles — a leg that dead-ends against a wall
    or a planter would park its pedestrian across the corridor for good."""
    cum = cumulative_arc(center)
    total = cum[-1]
    peds = []
    margin = min(6.0, total * 0.2)

    def leg_clear(p0, p1):
        n = max(int(np.ceil(float(np.hypot(*(p1 - p0))) / 0.5)), 1)
        t = np.linspace(0.0, 1.0, n + 1)
        pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
        if not planner._inside_any(pts, walkable).all():
            return False
        return planner._clear_of_obstacles(pts, circles, boxes, 1.0).all()

    for _ in range(count):
        for _attempt in range(30):
            s0 = rng.uniform(max(margin, min(10.0, total * 0.3)), total - margin)
            s1 = rng.uniform(margin, total - margin)
            if abs(s1 - s0) < 3.0:
                continue
            lat0 = rng.uniform(-(width / 2 - 1.0), width / 2 - 1.0)
            lat1 = rng.uniform(-(width / 2 - 1.0), width / 2 - 1.0)
            p0 = _lateral_point(center, s0, lat0, total)
            p1 = _lateral_point(center, s1, lat1, total)
            if not leg_clear(p0, p1):
                continue
            peds.append(
                PedestrianSpec(
                    spawn=(float(p0[0]), float(p0[1])),
                    goal=(float(p1[0]), float(p1[1])),
                    speed=float(rng.uniform(0.5, 1.2)),
                )
            )
            break
    return peds


_DEFAULT_WIDTH = {"straight": 6.0, "L": 6.0, "C": 8.0, "intersection": 6.0, "obstacle_course": 8.0}
_DEFAULT_PEDS = {"straight": (0, 2), "L": (0, 2), "C": (1, 3), "intersection": (1, 3), "obstacle_course": (2, 4)}


def generate_scene(seed: int, kind: str, n_pedestrians: int | None = None, n_obstacles: int | None = None) -> Scene:
    """Build a feasible scene deterministically from (seed, kind, difficulty).

    Regenerates internally (up to 20 attempts, all folded into the seed) when
    obstacle placement blocks every path; feasibility means the grid planner
    finds a path with 0.75 m inflation, which guarantees a passable gap wide
    enough that a follower tracking with a few decimeters of corner overshoot
    still clears every obstacle.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    for attempt in range(20):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, KINDS.index(kind), attempt])))
        scene = _generate_once(seed, kind, rng, n_pedestrians, n_obstacles)
        try:
            planner.grid_plan(
                scene.walkable,
                scene.circles,
                scene.boxes,
                scene.spawn.xy,
                np.asarray(scene.goal),
                inflation=0.75,
            )
        except planner.NoPath:
            continue
        return scene
    raise GenerationFailed(f"no feasible scene for seed={seed} kind={kind} after 20 attempts")


def _generate_once(seed, kind, rng, n_pedestrians, n_obstacles) -> Scene:
    width = _DEFAULT_WIDTH[kind]
    center = _route_arc(kind, rng)
    walkable = corridor_polys(center, width)

    if kind == "intersection":
        # add a crossing corridor at the first turn (or midpoint when straight)
        cum = cumulative_arc(center)
        mid = point_at_arc(center, cum[-1] * 0.5)[0] if len(center) == 2 else center[1]
        d = center[1] - center[0]
        d = d / np.hypot(*d)
        n = np.array([-d[1], d[0]])
        arm = rng.uniform(12.0, 20.0)
        cross = np.array([mid - n * arm, mid + n * arm])
        walkable += corridor_polys(cross, width)

    circles, boxes = [], []
    if kind == "obstacle_course":
        count = n_obstacles if n_obstacles is not None else int(rng.integers(6, 11))
        cum = cumulative_arc(center)
        total = cum[-1]
        for _ in range(count):
            s = rng.uniform(8.0, total - 8.0)
            lat = rng.uniform(-(width / 2 - 0.8), width / 2 - 0.8)
            p = point_at_arc(center, s)[0]
            d = center[-1] - center[0]
            d = d / np.hypot(*d)
            n = np.array([-d[1], d[0]])
            pos = p + n * lat
            if rng.random() < 0.6:
                circles.append((float(pos[0]), float(pos[1]), float(rng.uniform(0.4, 0.9))))
            else:
                half = rng.uniform(0.4, 0.8, size=2)
                boxes.append((float(pos[0] - half[0]), float(pos[1] - half[1]), float(pos[0] + half[0]), float(pos[1] + half[1])))

    lo, hi = _DEFAULT_PEDS[kind]
    count = n_pedestrians if n_pedestrians is not None else int(rng.integers(lo, hi + 1))
    peds = _place_pedestrians(rng, center, width, count, walkable, circles, boxes)

    d0 = center[1] - center[0]
    spawn = Pose2(float(center[0, 0]), float(center[0, 1]), float(np.arctan2(d0[1], d0[0])))
    goal = (float(center[-1, 0]), float(center[-1, 1]))
    scene = Scene(
        seed=seed,
        kind=kind,
        walkable=walkable,
        circles=circles,
        boxes=boxes,
        gt_route=center,
        spawn=spawn,
        goal=goal,
        pedestrians=peds,
    )
    _scrub_endpoints(scene)
    return scene


def _scrub_endpoints(scene: Scene) -> None:
    """Drop obstacles that cover spawn or goal; invariant, not chance."""
    keep_c, keep_b = [], []
    for c in scene.circles:
        clear = all(np.hypot(p[0] - c[0], p[1] - c[1]) > c[2] + 2.5 for p in (scene.spawn.xy, scene.goal))
        if clear:
            keep_c.append(c)
    for b in scene.boxes:
        clear = True
        for p in (scene.spawn.xy, scene.goal):
            dx = max(b[0] - p[0], 0.0, p[0] - b[2])
            dy = max(b[1] - p[1], 0.0, p[1] - b[3])
            if np.hypot(dx, dy) <= 2.5:
                clear = False
        if clear:
            keep_b.append(b)
    scene.circles = keep_c
    scene.boxes = keep_b


def validate_scene(scene: Scene) -> Scene:
    for name, p in (("spawn", scene.spawn.xy), ("goal", scene.goal)):
        if not scene.contains(p, tol=1e-6):
            raise ValueError(f"{name} outside walkable region")
    for p in scene.gt_route:
        if not scene.contains(p, tol=1e-6):
            raise ValueError("gt_route leaves walkable region")
    return scene
