"""Grid planner: A* over a 0.25 m occupancy raster plus greedy shortcutting.

Used three ways: scene-generation feasibility checks (stricter inflation),
the scripted expert's reference path, and shortest-path lengths for
path-efficiency scoring. Deterministic throughout; ties in the open set
break by insertion order.
"""

from __future__ import annotations

import heapq

import numpy as np

from .geom import as_polyline

RESOLUTION = 0.25
DEFAULT_INFLATION = 0.45


class NoPath(RuntimeError):
    pass


def _inside_any(points: np.ndarray, walkable) -> np.ndarray:
    ok = np.zeros(len(points), dtype=bool)
    for poly in walkable:
        v = as_polyline(poly)
        e = np.roll(v, -1, axis=0) - v
        rem = ~ok
        if not rem.any():
            break
        p = points[rem]
        inside = np.ones(len(p), dtype=bool)
        for i in range(len(v)):
            cross = e[i, 0] * (p[:, 1] - v[i, 1]) - e[i, 1] * (p[:, 0] - v[i, 0])
            inside &= cross >= 0.0
            if not inside.any():
                break
        ok[np.flatnonzero(rem)[inside]] = True
    return ok


def _clear_of_obstacles(points: np.ndarray, circles, boxes, inflation: float) -> np.ndarray:
    ok = np.ones(len(points), dtype=bool)
    for cx, cy, r in circles:
        ok &= np.hypot(points[:, 0] - cx, points[:, 1] - cy) > r + inflation
    for xmin, ymin, xmax, ymax in boxes:
        dx = np.maximum(np.maximum(xmin - points[:, 0], 0.0), points[:, 0] - xmax)
        dy = np.maximum(np.maximum(ymin - points[:, 1], 0.0), points[:, 1] - ymax)
        ok &= np.hypot(dx, dy) > inflation
    return ok


_N_PROBES = 12


def _free_points(points: np.ndarray, walkable, circles, boxes, inflation: float) -> np.ndarray:
    """Free = a disk of radius ``inflation`` fits inside the walkable union
    and obstacles are at least ``inflation`` away.

    The walkable region is a union of overlapping convex pieces, so distance
    to its boundary has no cheap closed form; the disk test probes the circle
    at 12 bearings, which under-erodes by at most inflation·(1−cos(π/12))
    (≈ 3 cm at 0.45 m) — well inside the slack the callers budget for.
    """
    ok = _inside_any(points, walkable) & _clear_of_obstacles(points, circles, boxes, inflation)
    if inflation > 0.0 and ok.any():
        idx = np.flatnonzero(ok)
        ang = np.arange(_N_PROBES) * (2.0 * np.pi / _N_PROBES)
        ring = inflation * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        probes = (points[idx, None, :] + ring[None, :, :]).reshape(-1, 2)
        ok[idx] &= _inside_any(probes, walkable).reshape(len(idx), _N_PROBES).all(axis=1)
    return ok


def free_mask(walkable, circles, boxes, inflation: float, resolution: float = RESOLUTION):
    """Rasterize free space. Returns (mask[ny, nx], origin) with cell centers
    at origin + (index + 0.5) * resolution."""
    allv = np.concatenate([as_polyline(p) for p in walkable], axis=0)
    origin = np.floor(allv.min(axis=0) / resolution) * resolution - resolution
    top = np.ceil(allv.max(axis=0) / resolution) * resolution + resolution
    nx = int(round((top[0] - origin[0]) / resolution))
    ny = int(round((top[1] - origin[1]) / resolution))
    xs = origin[0] + (np.arange(nx) + 0.5) * resolution
    ys = origin[1] + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    free = _free_points(centers, walkable, circles, boxes, inflation)
    return free.reshape(ny, nx), origin


def _to_cell(p, origin, resolution):
    return (
        int(np.floor((p[0] - origin[0]) / resolution)),
        int(np.floor((p[1] - origin[1]) / resolution)),
    )


def _nearest_free(cell, mask):
    ny, nx = mask.shape
    cx, cy = cell
    for radius in range(9):
        best = None
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if max(abs(dx), abs(dy)) != radius:
                    continue
                x, y = cx + dx, cy + dy
                if 0 <= x < nx and 0 <= y < ny and mask[y, x]:
                    d = dx * dx + dy * dy
                    if best is None or d < best[0]:
                        best = (d, (x, y))
        if best is not None:
            return best[1]
    return None


_STEPS = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0)), (-1, 1, np.sqrt(2.0)), (-1, -1, np.sqrt(2.0))]


def _octile(a, b):
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (np.sqrt(2.0) - 1.0) * min(dx, dy)


def grid_plan(walkable, circles, boxes, start, goal, inflation: float = DEFAULT_INFLATION,
              resolution: float = RESOLUTION) -> np.ndarray:
    """A* path of world points from start to goal; raises NoPath."""
    mask, origin = free_mask(walkable, circles, boxes, inflation, resolution)
    s = _nearest_free(_to_cell(start, origin, resolution), mask)
    g = _nearest_free(_to_cell(goal, origin, resolution), mask)
    if s is None or g is None:
        raise NoPath("start or goal has no nearby free cell")
    ny, nx = mask.shape
    dist = {s: 0.0}
    came: dict = {}
    counter = 0
    open_heap = [(_octile(s, g), 0, s)]
    closed = set()
    while open_heap:
        _, _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == g:
            break
        closed.add(cur)
        cx, cy = cur
        for dx, dy, cost in _STEPS:
            x, y = cx + dx, cy + dy
            if not (0 <= x < nx and 0 <= y < ny) or not mask[y, x]:
                continue
            # forbid cutting a blocked corner diagonally
            if dx and dy and not (mask[cy, x] and mask[y, cx]):
                continue
            nd = dist[cur] + cost
            if nd < dist.get((x, y), np.inf):
                dist[(x, y)] = nd
                came[(x, y)] = cur
                counter += 1
                heapq.heappush(open_heap, (nd + _octile((x, y), g), counter, (x, y)))
    else:
        raise NoPath("goal unreachable on the occupancy grid")

    cells = [g]
    while cells[-1] != s:
        cells.append(came[cells[-1]])
    cells.reverse()
    pts = np.array([(origin[0] + (c[0] + 0.5) * resolution, origin[1] + (c[1] + 0.5) * resolution) for c in cells])
    path = np.vstack([np.asarray(start, dtype=np.float64), pts, np.asarray(goal, dtype=np.float64)])
    return _dedup(path)


def _dedup(path: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = [0]
    for i in range(1, len(path)):
        if np.hypot(*(path[i] - path[keep[-1]])) > tol:
            keep.append(i)
    return path[keep]


def _segment_free(a, b, walkable, circles, boxes, inflation, step=0.1) -> bool:
    n = max(int(np.ceil(np.hypot(*(b - a)) / step)), 1)
    t = np.linspace(0.0, 1.0, n + 1)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return _free_points(pts, walkable, circles, boxes, inflation).all()


def shortcut(path: np.ndarray, walkable, circles, boxes, inflation: float = DEFAULT_INFLATION) -> np.ndarray:
    """Greedy line-of-sight smoothing: keep jumping to the farthest visible vertex."""
    path = as_polyline(path)
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not _segment_free(path[i], path[j], walkable, circles, boxes, inflation):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def plan_path(scene, inflation: float = DEFAULT_INFLATION) -> np.ndarray:
    """Planned polyline from scene spawn to goal (A* + shortcutting)."""
    raw = grid_plan(scene.walkable, scene.circles, scene.boxes, scene.spawn.xy, np.asarray(scene.goal), inflation)
    return shortcut(raw, scene.walkable, scene.circles, scene.boxes, inflation)
