"""Deterministic simulation core.

One tick = one unicycle integration at dt, pedestrian advance, and event
detection. All faults are events, never exceptions: collision rolls the
position back, leaving non-walkable ground or reaching the goal terminates.
Identical (scene, control sequence) pairs reproduce identical state and
event histories bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SimParams
from .geom import Pose2, from_egocentric, project_onto, wrap_angle
from .records import Event
from .scenes import Scene

HEAD_BEARINGS = np.array([0.0, np.pi / 2.0, -np.pi / 2.0, np.pi])  # front, left, right, rear
_HEAD_FOV = np.pi / 2.0


@dataclass
class PedState:
    pos: np.ndarray
    goal: np.ndarray
    speed: float
    vel: np.ndarray
    home: np.ndarray  # walk endpoint opposite `goal`; swapped on arrival
    blocked: int = 0  # consecutive ticks near the agent with no goal progress
    best_goal: float = float("inf")  # closest approach to `goal` so far


@dataclass
class Observation:
    rays: np.ndarray  # (heads, rays_per_head) depths in meters, (0, max_range]
    head_bearings: np.ndarray  # relative bearing of each head, radians


@dataclass
class SimState:
    agent: Pose2
    pedestrians: list
    agent_speed: float = 0.0
    tick: int = 0
    route_progress: float = 0.0  # monotone arc along scene.gt_route
    route_total: float = 0.0
    social_violations: int = 0
    terminal: str | None = None
    event_log: list = field(default_factory=list)


def init_state(scene: Scene, params: SimParams | None = None) -> SimState:
    from .geom import arc_length

    peds = [
        PedState(
            pos=np.array(p.spawn, dtype=np.float64),
            goal=np.array(p.goal, dtype=np.float64),
            speed=float(p.speed),
            vel=np.zeros(2),
            home=np.array(p.spawn, dtype=np.float64),
        )
        for p in scene.pedestrians
    ]
    agent = Pose2(scene.spawn.x, scene.spawn.y, scene.spawn.theta)
    arc, _ = project_onto(scene.gt_route, agent.xy)
    return SimState(agent=agent, pedestrians=peds, route_progress=arc, route_total=arc_length(scene.gt_route))


def check_collision(point, scene: Scene, ped_positions, params: SimParams) -> bool:
    """Does an agent disk centered at ``point`` overlap any obstacle or pedestrian?"""
    x, y = float(point[0]), float(point[1])
    ar = params.agent_radius
    for cx, cy, r in scene.circles:
        if np.hypot(x - cx, y - cy) < r + ar:
            return True
    for xmin, ymin, xmax, ymax in scene.boxes:
        dx = max(xmin - x, 0.0, x - xmax)
        dy = max(ymin - y, 0.0, y - ymax)
        if np.hypot(dx, dy) < ar:
            return True
    pr = params.pedestrian_radius
    for p in ped_positions:
        if np.hypot(x - p[0], y - p[1]) < ar + pr:
            return True
    return False


def _ped_position_free(p: np.ndarray, scene: Scene) -> bool:
    """Pedestrians stay on the walkable surface and out of obstacles."""
    if not scene.contains(p):
        return False
    for cx, cy, r in scene.circles:
        if np.hypot(p[0] - cx, p[1] - cy) < r + 0.3:
            return False
    for xmin, ymin, xmax, ymax in scene.boxes:
        dx = max(xmin - p[0], 0.0, p[0] - xmax)
        dy = max(ymin - p[1], 0.0, p[1] - ymax)
        if np.hypot(dx, dy) < 0.3:
            return False
    return True


def _advance_pedestrians(state: SimState, scene: Scene, params: SimParams) -> None:
    dt = params.dt
    agent_pos = state.agent.xy
    for i, ped in enumerate(state.pedestrians):
        to_goal = ped.goal - ped.pos
        dist_goal = float(np.hypot(*to_goal))
        if dist_goal < 0.15:
            # ping-pong between endpoints so nobody parks on the corridor
            ped.goal, ped.home = ped.home, ped.goal
            ped.best_goal = float("inf")
            to_goal = ped.goal - ped.pos
            dist_goal = float(np.hypot(*to_goal))
            if dist_goal < 1e-9:
                ped.vel = np.zeros(2)
                continue
        steer = to_goal / dist_goal
        # repulsion from the agent and other pedestrians: a radial push whose
        # gain keeps the head-on equilibrium above the 0.6 m collision range
        # even against a stationary agent, plus a tangential bias (pass on
        # the right) so head-on meetings slide around instead of freezing
        neighbors = [agent_pos] + [q.pos for j, q in enumerate(state.pedestrians) if j != i]
        for nb in neighbors:
            away = ped.pos - nb
            d = float(np.hypot(*away))
            if 0.0 < d < params.ped_repulse_dist:
                w = (params.ped_repulse_dist - d) / params.ped_repulse_dist
                radial = away / d
                tangent = np.array([radial[1], -radial[0]])
                steer = steer + (radial * 2.5 + tangent * 1.2) * w
        norm = float(np.hypot(*steer))
        vel = steer / norm * ped.speed if norm > 0 else np.zeros(2)
        d_agent = float(np.hypot(*(ped.pos - agent_pos)))

        def _admissible(q: np.ndarray) -> bool:
            # never step into the agent's personal space: crowd pressure or
            # a wall pocket can otherwise force sustained contact
            if not _ped_position_free(q, scene):
                return False
            da = float(np.hypot(*(q - agent_pos)))
            return da >= 0.8 or da >= d_agent

        cand = ped.pos + vel * dt
        if _admissible(cand):
            ped.pos = cand
            ped.vel = vel
        else:
            # pinched: the field can point square into a wall (or the agent)
            # forever, so probe rotated headings and take the first free one
            for ang in (0.5, -0.5, 1.0, -1.0, 1.6, -1.6, 2.2, -2.2, np.pi):
                c, s = np.cos(ang), np.sin(ang)
                alt_vel = np.array([c * vel[0] - s * vel[1], s * vel[0] + c * vel[1]])
                alt = ped.pos + alt_vel * dt
                if _admissible(alt):
                    ped.pos = alt
                    ped.vel = alt_vel
                    break
            else:
                ped.vel = np.zeros(2)
        # a walk held near the agent without gaining ground gives up and
        # turns around rather than shoving through — covers both the wedged
        # case and the repulsion/goal standoff where every step is free but
        # the walker just dances in place; mutual waits end in bounded time
        now_goal = float(np.hypot(*(ped.goal - ped.pos)))
        if now_goal < ped.best_goal - 0.05:
            ped.best_goal = now_goal
            ped.blocked = 0
        elif d_agent < 1.5:
            ped.blocked += 1
            if ped.blocked >= 25:
                ped.goal, ped.home = ped.home, ped.goal
                ped.best_goal = float("inf")
                ped.blocked = 0
        else:
            ped.blocked = 0


def step(state: SimState, scene: Scene, control, params: SimParams | None = None):
    """Advance one tick. ``control`` is (v, omega); both are clamped.

    Returns (state, events-this-tick). Events carry the post-step tick
    index. Raises if the episode already ended.
    """
    params = params or SimParams()
    if state.terminal is not None:
        raise RuntimeError(f"episode already terminal ({state.terminal})")
    v = float(np.clip(control[0], -params.max_speed, params.max_speed))
    omega = float(np.clip(control[1], -params.max_yaw_rate, params.max_yaw_rate))
    dt = params.dt

    _advance_pedestrians(state, scene, params)

    pose = state.agent
    cand = np.array([pose.x + v * np.cos(pose.theta) * dt, pose.y + v * np.sin(pose.theta) * dt])
    new_theta = float(wrap_angle(pose.theta + omega * dt))
    state.tick += 1
    tick = state.tick
    events: list = []

    if not scene.contains(cand):
        state.agent = Pose2(float(cand[0]), float(cand[1]), new_theta)
        state.agent_speed = abs(v)
        events.append(Event("crash_offwalkable", tick))
        state.terminal = "crash_offwalkable"
        state.event_log.extend(events)
        return state, events

    ped_pos = [p.pos for p in state.pedestrians]
    if check_collision(cand, scene, ped_pos, params):
        # rollback: keep the last free position, rotation still applies
        state.agent = Pose2(pose.x, pose.y, new_theta)
        state.agent_speed = 0.0
        events.append(Event("collision", tick))
    else:
        state.agent = Pose2(float(cand[0]), float(cand[1]), new_theta)
        state.agent_speed = abs(v)

    arc, offset = project_onto(scene.gt_route, state.agent.xy)
    state.route_progress = max(state.route_progress, arc)
    if offset > params.corridor_half_width:
        events.append(Event("deviation", tick))

    if ped_pos:
        nearest = min(float(np.hypot(*(state.agent.xy - p))) for p in ped_pos)
        if nearest < params.near_miss_dist:
            state.social_violations += 1

    if float(np.hypot(state.agent.x - scene.goal[0], state.agent.y - scene.goal[1])) <= scene.goal_radius:
        events.append(Event("success", tick))
        state.terminal = "success"
    elif tick >= params.timeout_ticks:
        events.append(Event("timeout", tick))
        state.terminal = "timeout"

    state.event_log.extend(events)
    return state, events


# -- raycasting --------------------------------------------------------------

def _poly_intervals(origin, dirs, poly):
    """Per-ray [t_in, t_out] inside one convex CCW polygon (t in ray units)."""
    n_rays = len(dirs)
    t_lo = np.zeros(n_rays)
    t_hi = np.full(n_rays, np.inf)
    valid = np.ones(n_rays, dtype=bool)
    for i in range(len(poly)):
        a = poly[i]
        e = poly[(i + 1) % len(poly)] - a
        nrm = np.array([e[1], -e[0]])  # outward normal
        c0 = float((origin - a) @ nrm)
        c1 = dirs @ nrm
        pos = c1 > 0.0
        neg = c1 < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -c0 / c1
        t_hi = np.where(pos, np.minimum(t_hi, t), t_hi)
        t_lo = np.where(neg, np.maximum(t_lo, t), t_lo)
        valid &= ~((c1 == 0.0) & (c0 > 0.0))
    valid &= (t_lo <= t_hi + 1e-12) & (t_hi >= 0.0)
    return t_lo, t_hi, valid


def _walkable_exit(origin, dirs, walkable) -> np.ndarray:
    """Distance at which each ray leaves the union of walkable polygons."""
    n_rays = len(dirs)
    per_ray: list = [[] for _ in range(n_rays)]
    for poly in walkable:
        t_lo, t_hi, valid = _poly_intervals(origin, dirs, poly)
        for r in np.flatnonzero(valid):
            per_ray[r].append((max(t_lo[r], 0.0), t_hi[r]))
    exits = np.zeros(n_rays)
    for r in range(n_rays):
        reach = 0.0
        for lo, hi in sorted(per_ray[r]):
            if lo <= reach + 1e-9:
                reach = max(reach, hi)
            else:
                break
        exits[r] = reach
    return exits


def raycast(origin, angles, scene: Scene, ped_positions, max_range: float, ped_radius: float = 0.3) -> np.ndarray:
    """Exact depths along world-frame ``angles`` from ``origin``.

    A ray ends where it leaves walkable ground or first hits an obstacle or
    pedestrian disk, capped at ``max_range``; depths are clamped strictly
    positive.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    depth = _walkable_exit(origin, dirs, scene.walkable)

    for cx, cy, r in scene.circles:
        oc = origin - np.array([cx, cy])
        b = 2.0 * dirs @ oc
        c = float(oc @ oc) - r * r
        disc = b * b - 4.0 * c
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / 2.0
        t1 = (-b + sq) / 2.0
        t_hit = np.where(t0 >= 0.0, t0, np.where(t1 >= 0.0, 0.0, np.inf))
        depth = np.where(hit, np.minimum(depth, np.where(np.isfinite(t_hit), t_hit, np.inf)), depth)

    for xmin, ymin, xmax, ymax in scene.boxes:
        box = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
        t_lo, t_hi, valid = _poly_intervals(origin, dirs, box)
        t_hit = np.where(valid, np.maximum(t_lo, 0.0), np.inf)
        depth = np.minimum(depth, t_hit)

    for p in ped_positions:
        oc = origin - np.asarray(p, dtype=np.float64)
        b = 2.0 * dirs @ oc
        c = float(oc @ oc) - ped_radius * ped_radius
        disc = b * b - 4.0 * c
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / 2.0
        t1 = (-b + sq) / 2.0
        t_hit = np.where(t0 >= 0.0, t0, np.where(t1 >= 0.0, 0.0, np.inf))
        depth = np.where(hit, np.minimum(depth, np.where(np.isfinite(t_hit), t_hit, np.inf)), depth)

    return np.clip(depth, 1e-6, max_range)


def ray_angles(pose: Pose2, params: SimParams) -> np.ndarray:
    """World-frame angle of every ray, shaped (heads * rays_per_head,)."""
    k = np.arange(params.rays_per_head)
    offsets = ((k + 0.5) / params.rays_per_head - 0.5) * _HEAD_FOV
    return (pose.theta + HEAD_BEARINGS[:, None] + offsets[None, :]).ravel()


def observe(state: SimState, scene: Scene, params: SimParams | None = None) -> Observation:
    """4-head range scan around the agent; deterministic."""
    params = params or SimParams()
    angles = ray_angles(state.agent, params)
    depths = raycast(
        state.agent.xy,
        angles,
        scene,
        [p.pos for p in state.pedestrians],
        params.ray_max_range,
        params.pedestrian_radius,
    )
    return Observation(
        rays=depths.reshape(params.ray_heads, params.rays_per_head),
        head_bearings=HEAD_BEARINGS.copy(),
    )


# -- capped trajectory execution --------------------------------------------

@dataclass
class ExecResult:
    events: list
    controls: list  # [(v, omega)] per tick, in order
    arc: float  # meters actually travelled
    consumed: int  # waypoints reached


_CAPTURE = 0.1  # m: a waypoint this close counts as reached
_FACE_TOL = 0.15  # rad: drive only once roughly facing the target


def execute_trajectory(state: SimState, scene: Scene, traj, params: SimParams | None = None) -> ExecResult:
    """Track egocentric waypoints tick-by-tick until the step cap.

    ``traj`` is (N, 2) or (N, 3) egocentric waypoints (extra columns are
    ignored by the follower). Execution stops at ``step_cap_m`` meters of
    actual travel, when every waypoint is consumed, on a terminal event, or
    at the per-execution tick bound, whichever comes first; control then
    returns to the caller for the next policy query.
    """
    params = params or SimParams()
    traj = np.atleast_2d(np.asarray(traj, dtype=np.float64))
    world = from_egocentric(traj[:, :2], state.agent)
    events: list = []
    controls: list = []
    arc = 0.0
    consumed = 0
    n = len(world)
    dt = params.dt

    while consumed < n and np.hypot(*(world[consumed] - state.agent.xy)) < _CAPTURE:
        consumed += 1

    while (
        state.terminal is None
        and consumed < n
        and arc < params.step_cap_m - 1e-9
        and len(controls) < params.exec_tick_cap
    ):
        pos = state.agent.xy
        target = world[consumed]
        delta = target - pos
        d = float(np.hypot(*delta))
        alpha = float(wrap_angle(np.arctan2(delta[1], delta[0]) - state.agent.theta))
        omega = float(np.clip(alpha / dt, -params.max_yaw_rate, params.max_yaw_rate))
        budget = (params.step_cap_m - arc) / dt
        if abs(alpha) > _FACE_TOL:
            # rotate in place first: moving while badly misaligned turns a
            # close oblique waypoint into a stable orbit the yaw-rate cap
            # can never break out of
            v = 0.0
        else:
            v = min(params.max_speed, d / dt, budget) * np.cos(alpha)
        before = state.agent.xy
        _, ev = step(state, scene, (v, omega), params)
        events.extend(ev)
        controls.append((v, omega))
        arc += float(np.hypot(*(state.agent.xy - before)))
        while consumed < n and np.hypot(*(world[consumed] - state.agent.xy)) < _CAPTURE:
            consumed += 1
        close = state.pedestrians and (
            min(float(np.hypot(*(state.agent.xy - p.pos))) for p in state.pedestrians) < params.near_miss_dist
        )
        if close or any(e.kind == "collision" for e in ev):
            # contact developing mid-execution; hand control back so the
            # policy sees it now instead of tracking stale waypoints into it
            break
    return ExecResult(events=events, controls=controls, arc=arc, consumed=consumed)


def replay_controls(state: SimState, scene: Scene, controls, params: SimParams | None = None) -> list:
    """Re-issue a recorded control sequence; returns the events it produces."""
    params = params or SimParams()
    out: list = []
    for v, omega in controls:
        _, ev = step(state, scene, (v, omega), params)
        out.extend(ev)
        if state.terminal is not None:
            break
    return out
