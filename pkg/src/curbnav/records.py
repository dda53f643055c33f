"""Episode and dataset records shared by the simulator, trainers, and storage.

A step is one policy query plus the capped execution that followed it; ticks
inside the execution are kept as raw controls so episodes replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .route import Roadbook

EVENT_KINDS = ("collision", "deviation", "success", "timeout", "crash_offwalkable")
TERMINAL_KINDS = ("success", "timeout", "crash_offwalkable")
SOURCES = ("expert", "teleop", "policy")


@dataclass
class Event:
    kind: str
    tick: int

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        self.tick = int(self.tick)


@dataclass
class RewardTerms:
    """Per-step reward inputs: completion is a fraction of the whole route."""

    d_completion: float = 0.0
    collision: int = 0
    deviation: int = 0


@dataclass
class StepRecord:
    tick: int  # sim tick at policy-query time
    observation: np.ndarray  # (heads, rays_per_head) depths in meters
    roadbook: Roadbook
    speed: float  # agent speed when queried
    action: np.ndarray  # flattened egocentric trajectory, 3N floats
    controls: list  # [(v, omega)] actually issued, one per sim tick
    reward_terms: RewardTerms = field(default_factory=RewardTerms)
    events: list = field(default_factory=list)  # Events fired during execution


@dataclass
class EpisodeRecord:
    episode_id: str
    scene_ref: str
    source: str
    seed: int
    created_at: str  # ISO-8601, or "" in fixed-time mode
    steps: list = field(default_factory=list)
    terminal: str = ""
    metrics: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    episodes: list  # file references, relative to the manifest
    counts: dict  # source -> episode count
    config_digest: str


def validate_episode(ep: EpisodeRecord) -> EpisodeRecord:
    """Enforce record invariants; raises ValueError naming the first breach."""
    if ep.source not in SOURCES:
        raise ValueError(f"unknown source {ep.source!r}")
    if ep.terminal not in TERMINAL_KINDS:
        raise ValueError(f"terminal must be one of {TERMINAL_KINDS}, got {ep.terminal!r}")
    terminals = 0
    last_tick = -1
    for i, step in enumerate(ep.steps):
        if step.tick <= last_tick and i > 0:
            raise ValueError(f"step {i}: ticks not strictly increasing")
        last_tick = step.tick
        t = step.reward_terms
        if not (0.0 <= t.d_completion <= 1.0) or t.collision not in (0, 1) or t.deviation not in (0, 1):
            raise ValueError(f"step {i}: reward terms out of range")
        for ev in step.events:
            if ev.kind in TERMINAL_KINDS:
                terminals += 1
                if terminals > 1:
                    raise ValueError(f"step {i}: second terminal event")
    if terminals != 1:
        raise ValueError("episode must contain exactly one terminal event")
    last_events = ep.steps[-1].events if ep.steps else []
    if not any(ev.kind in TERMINAL_KINDS for ev in last_events):
        raise ValueError("terminal event must be in the final step")
    return ep


def episode_event_log(ep: EpisodeRecord) -> list:
    """Flat (tick, kind) event log, the unit compared by replay."""
    out = []
    for step in ep.steps:
        out.extend((ev.tick, ev.kind) for ev in step.events)
    return out
