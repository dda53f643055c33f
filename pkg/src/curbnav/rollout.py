"""Generic policy-rollout loop producing episode records.

One loop serves the scripted expert, learned policies, and random baselines:
observe, encode the roadbook, query the policy for an egocentric trajectory,
execute it under the step cap, log the step. The conditioning route may
differ from the scene's ground-truth route (that distinction is the whole
point of lifting), so progress along each is tracked separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .engine import SimState, execute_trajectory, init_state, observe, step
from .geom import Pose2, project_onto
from .records import EpisodeRecord, RewardTerms, StepRecord, validate_episode
from .route import detect_corners, encode_roadbook
from .scenes import Scene

_MAX_POLICY_STEPS = 2200  # timeout is reached first; pure safety bound


@dataclass
class QueryContext:
    obs_window: list  # recent Observations, oldest first
    roadbook: object
    speed: float
    state: SimState
    scene: Scene


def apply_spawn_jitter(state: SimState, scene: Scene, rng) -> None:
    """Perturb the spawn pose laterally and in heading, staying walkable."""
    pose = state.agent
    lateral = rng.uniform(-0.5, 0.5)
    dtheta = rng.uniform(-0.1, 0.1)
    n = np.array([-np.sin(pose.theta), np.cos(pose.theta)])
    cand = pose.xy + n * lateral
    if scene.contains(cand):
        state.agent = Pose2(float(cand[0]), float(cand[1]), pose.theta + dtheta)
        arc, _ = project_onto(scene.gt_route, state.agent.xy)
        state.route_progress = max(state.route_progress, arc)


def rollout(
    scene: Scene,
    policy,
    cfg: Config,
    cond_route: np.ndarray,
    source: str,
    episode_id: str,
    seed: int = 0,
    shortest: float | None = None,
    spawn_jitter_rng=None,
    created_at: str = "",
) -> EpisodeRecord:
    """Run one episode to its terminal event and return the full record.

    ``policy.act(ctx)`` must return an (N, 3) egocentric trajectory ready
    for execution; it is recorded flattened as the step's action.
    """
    state = init_state(scene, cfg.sim)
    if spawn_jitter_rng is not None:
        apply_spawn_jitter(state, scene, spawn_jitter_rng)
    corners = detect_corners(cond_route, cfg.htl)
    cond_progress, _ = project_onto(cond_route, state.agent.xy)
    window: list = []
    steps: list = []
    path_len = 0.0

    while state.terminal is None and len(steps) < _MAX_POLICY_STEPS:
        obs = observe(state, scene, cfg.sim)
        window.append(obs)
        window = window[-cfg.train.frame_stack :]
        rb = encode_roadbook(cond_route, state.agent, cond_progress, params=cfg.htl, corners=corners)
        speed = state.agent_speed
        ctx = QueryContext(obs_window=list(window), roadbook=rb, speed=speed, state=state, scene=scene)
        wps = np.asarray(policy.act(ctx), dtype=np.float64)

        tick0 = state.tick
        prev_progress = state.route_progress
        res = execute_trajectory(state, scene, wps, cfg.sim)
        if not res.controls and state.terminal is None:
            # degenerate trajectory: burn one tick so time always advances
            _, ev = step(state, scene, (0.0, 0.0), cfg.sim)
            res.controls.append((0.0, 0.0))
            res.events.extend(ev)
        path_len += res.arc

        frac = (state.route_progress - prev_progress) / state.route_total
        terms = RewardTerms(
            d_completion=float(np.clip(frac, 0.0, 1.0)),
            collision=int(any(e.kind == "collision" for e in res.events)),
            deviation=int(any(e.kind == "deviation" for e in res.events)),
        )
        steps.append(
            StepRecord(
                tick=tick0,
                observation=obs.rays,
                roadbook=rb,
                speed=speed,
                action=wps.reshape(-1),
                controls=res.controls,
                reward_terms=terms,
                events=res.events,
            )
        )
        arc, _ = project_onto(cond_route, state.agent.xy)
        cond_progress = max(cond_progress, arc)

    ep = EpisodeRecord(
        episode_id=episode_id,
        scene_ref=scene.ref,
        source=source,
        seed=seed,
        created_at=created_at,
        steps=steps,
        terminal=state.terminal or "",
        metrics={
            "success": 1.0 if state.terminal == "success" else 0.0,
            "agent_path_length": path_len,
            "shortest_path_length": float(shortest) if shortest is not None else 0.0,
            "collision_steps": float(sum(1 for s in steps for e in s.events if e.kind == "collision")),
            "social_violation_steps": float(state.social_violations),
            "completed_route": float(min(state.route_progress, state.route_total)),
            "total_route": float(state.route_total),
        },
    )
    return validate_episode(ep)
