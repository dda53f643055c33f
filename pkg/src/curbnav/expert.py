"""Scripted expert: follows a grid-planned path with optional corruption.

The expert never reads the roadbook — it tracks the planner's collision-free
path directly, which is what makes its demonstrations worth cloning. The
noise knob (0..1) injects waypoint jitter and occasional detour swerves so a
dataset can contain deliberately mixed-quality behaviour.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

from .config import Config, SimParams
from .geom import Pose2, arc_length, point_at_arc, project_onto, resample, to_egocentric, wrap_angle
from .planner import NoPath, _free_points, plan_path
from .records import EpisodeRecord
from .rollout import QueryContext, rollout
from .route import lift
from .scenes import Scene

_YIELD_DIST = 3.0  # begin yielding to a pedestrian this close ahead
_YIELD_HALF_W = 0.9  # half-width of the yield corridor; wider passes are safe
_NEAR_FIELD = 0.85  # yield to a pedestrian this close at any bearing
_HOLD_BACK = 1.1  # stand-off distance kept from a pedestrian's center
_ALIGN_LEAD = 0.9  # first-waypoint lead used while swinging onto the path
_ALIGN_TOL = 0.15  # rad of heading error that triggers the long lead
_PLAN_MARGIN = 0.75  # obstacle inflation the expert plans with (> default)
_DENSE_STEP = 0.5  # sampling used to densify a scene route before lifting
_PULL_SLACK = 0.5  # pulled plan points stay this far inside the route corridor


class ExpertPolicy:
    def __init__(self, plan: np.ndarray, cfg: Config, noise_level: float = 0.0, seed: int = 0):
        if not 0.0 <= noise_level <= 1.0:
            raise ValueError(f"noise_level must be in [0, 1], got {noise_level}")
        self.plan = plan
        self.cfg = cfg
        self.noise = float(noise_level)
        self.rng = Generator(PCG64(SeedSequence([seed, 7])))
        self.progress = 0.0

    def act(self, ctx: QueryContext) -> np.ndarray:
        cfg = self.cfg
        n = cfg.train.n_waypoints
        pose = ctx.state.agent
        arc, _ = project_onto(self.plan, pose.xy)
        self.progress = max(self.progress, arc)

        span = cfg.train.horizon_m
        ped = self._nearest_ahead(ctx)
        if ped is not None:
            # yield by shortening the commanded span rather than swerving:
            # split the closing distance so an oncoming walker at similar
            # speed still leaves the stand-off gap by the next query, and
            # let the repulsion field slide them off the line while we hold
            span = min(span, max((ped - _HOLD_BACK) / 2.0, 0.0))
            if span < 0.15:
                return np.zeros((n, 3))

        total = arc_length(self.plan)
        step = span / n
        arcs = np.minimum(self.progress + step * np.arange(1, n + 1), total)
        if ped is None and self._misaligned(pose, total, step):
            # the follower spirals instead of converging when its target is
            # both near and far off the heading (a stable orbit exists for
            # any target closer than ~0.67 m); lead with a distant first
            # waypoint so it swings onto the path, then tighten back up
            arcs = np.minimum(self.progress + _ALIGN_LEAD + step * np.arange(n, dtype=float), total)
        world = point_at_arc(self.plan, arcs)
        tangents = point_at_arc(self.plan, np.minimum(arcs + 0.05, total)) - world
        # at the plan's end the lookahead collapses; hold the last heading
        for i in range(len(tangents)):
            if np.linalg.norm(tangents[i]) < 1e-9:
                tangents[i] = tangents[i - 1] if i else np.array([np.cos(pose.theta), np.sin(pose.theta)])

        ego_xy = to_egocentric(world, pose)
        ego_theta = np.array([wrap_angle(np.arctan2(t[1], t[0]) - pose.theta) for t in tangents])
        wps = np.column_stack([ego_xy, ego_theta])

        if self.noise > 0.0:
            wps[:, :2] += self.rng.normal(0.0, 0.15 * self.noise, size=(n, 2))
            if self.rng.random() < 0.3 * self.noise:
                ang = self.rng.uniform(-1.2, 1.2) * self.noise
                c, s = np.cos(ang), np.sin(ang)
                rot = np.array([[c, -s], [s, c]])
                wps[:, :2] = wps[:, :2] @ rot.T
                wps[:, 2] = np.array([wrap_angle(t + ang) for t in wps[:, 2]])
        return wps

    def _misaligned(self, pose: Pose2, total: float, step: float) -> bool:
        probe_arc = min(self.progress + max(step, 0.35), total)
        probe = point_at_arc(self.plan, np.array([probe_arc]))[0]
        rel = probe - pose.xy
        if np.hypot(rel[0], rel[1]) < 0.05:
            return False
        return abs(wrap_angle(np.arctan2(rel[1], rel[0]) - pose.theta)) > _ALIGN_TOL

    def _nearest_ahead(self, ctx: QueryContext) -> float | None:
        """Distance to the closest pedestrian inside the swept corridor
        ahead — or brushing the near field at any bearing — or None.

        The corridor is deliberately narrow: anyone a full body-width to
        the side is passed, not trailed, and the repulsion field plus the
        mid-execution contact halt cover them stepping inward."""
        pose = ctx.state.agent
        best = None
        for ped in ctx.state.pedestrians:
            d = ped.pos - pose.xy
            dist = float(np.hypot(d[0], d[1]))
            ex = float(d[0] * np.cos(pose.theta) + d[1] * np.sin(pose.theta))
            ey = float(-d[0] * np.sin(pose.theta) + d[1] * np.cos(pose.theta))
            ahead = dist < _YIELD_DIST and ex > -0.2 and abs(ey) < _YIELD_HALF_W
            if (ahead or dist < _NEAR_FIELD) and (best is None or dist < best):
                best = dist
        return best


def _smooth_polyline(path: np.ndarray, step: float = 0.25, window: int = 5) -> np.ndarray:
    """Round the kinks of a shortcut polyline with a short moving average.

    The follower steers bang-bang toward close-spaced targets, so heading
    breaks above ~10 degrees per step excite a weave; averaging over ~1 m
    keeps the per-step turn demand under that. Endpoints stay pinned, and
    the inward pull at a corner is small against the planning margin."""
    dense = resample(path, step)
    if len(dense) < window + 2:
        return dense
    kernel = np.ones(window) / window
    half = window // 2
    out = dense.copy()
    for j in (0, 1):
        out[half:-half, j] = np.convolve(dense[:, j], kernel, mode="valid")
    return out


def _pull_to_corridor(path: np.ndarray, scene: Scene, half_width: float) -> np.ndarray:
    """Bend a shortest path back toward the route wherever clearance allows.

    A pure shortest path shaves the inside of wide bends and can settle just
    outside the corridor the deviation penalty watches. Each dense sample
    that strays is walked back along the ray from its route projection until
    it re-enters the corridor (with slack), but only if the pulled point
    still keeps the full planning margin — so detours around obstacles that
    genuinely need the room survive untouched."""
    limit = half_width - _PULL_SLACK
    dense = resample(path, 0.25)
    out = dense.copy()
    for i, p in enumerate(dense):
        arc, off = project_onto(scene.gt_route, p)
        if off <= limit:
            continue
        anchor = point_at_arc(scene.gt_route, np.array([arc]))[0]
        pulled = anchor + (p - anchor) * (limit / off)
        if _free_points(pulled[None, :], scene.walkable, scene.circles, scene.boxes, _PLAN_MARGIN)[0]:
            out[i] = pulled
    return out


def expert_plan(scene: Scene, sim: SimParams | None = None) -> np.ndarray:
    """Path the scripted expert follows.

    Planned with extra obstacle clearance, pulled back inside the route
    corridor, then corner-smoothed: the follower overshoots sharp corners
    by a few decimeters at speed and weaves on kinked chords, neither of
    which the planner's own margin covers. Scene generation guarantees the
    wide plan exists; hand-built scenes fall back to the standard margin."""
    try:
        raw = plan_path(scene, inflation=_PLAN_MARGIN)
    except NoPath:
        raw = plan_path(scene)
    half_width = (sim or SimParams()).corridor_half_width
    return _smooth_polyline(_pull_to_corridor(raw, scene, half_width))


def conditioning_route(scene: Scene, cfg: Config, seed: int, htl: bool = True) -> np.ndarray:
    """Route the roadbook is encoded from: lifted, or clean when htl=False."""
    dense = resample(scene.gt_route, _DENSE_STEP)
    params = cfg.htl if htl else replace(cfg.htl, noise_sigma=0.0)
    return lift(dense, params, rng_seed=seed, smooth=False)


def run_expert(
    scene: Scene,
    cfg: Config,
    seed: int = 0,
    noise_level: float = 0.0,
    htl: bool = True,
    episode_id: str = "",
    created_at: str = "",
) -> EpisodeRecord:
    plan = expert_plan(scene, cfg.sim)
    cond = conditioning_route(scene, cfg, seed, htl=htl)
    policy = ExpertPolicy(plan, cfg, noise_level=noise_level, seed=seed)
    return rollout(
        scene,
        policy,
        cfg,
        cond_route=cond,
        source="expert",
        episode_id=episode_id or f"{scene.ref}-expert-{seed}",
        seed=seed,
        shortest=arc_length(plan_path(scene)),
        created_at=created_at,
    )
