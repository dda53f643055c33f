"""Navigation metrics: SR, SPL, SNS, CC, RC.

SPL follows the standard success-weighted-by-path-length form. CC counts
collision ticks and SNS blends success with near-miss exposure; both of
those are local definitions, kept in this module so a different convention
can be swapped in without touching the harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import EpisodeRecord

_SNS_VIOLATION_SCALE = 100.0


@dataclass
class EpisodeResult:
    scene_ref: str
    success: bool
    agent_path_length: float
    shortest_path_length: float
    collision_steps: int
    social_violation_steps: int
    completed_route: float
    total_route: float
    terminal: str

    def __post_init__(self):
        if self.completed_route > self.total_route + 1e-9:
            raise ValueError("completed_route exceeds total_route")
        if min(self.agent_path_length, self.shortest_path_length, self.total_route) < 0:
            raise ValueError("lengths must be non-negative")

    @classmethod
    def from_episode(cls, ep: EpisodeRecord) -> "EpisodeResult":
        m = ep.metrics
        return cls(
            scene_ref=ep.scene_ref,
            success=bool(m["success"]),
            agent_path_length=float(m["agent_path_length"]),
            shortest_path_length=float(m["shortest_path_length"]),
            collision_steps=int(m["collision_steps"]),
            social_violation_steps=int(m["social_violation_steps"]),
            completed_route=float(min(m["completed_route"], m["total_route"])),
            total_route=float(m["total_route"]),
            terminal=ep.terminal,
        )


def spl(results) -> float:
    """Mean success·shortest/max(agent, shortest); requires known shortest paths."""
    vals = []
    for r in results:
        if r.shortest_path_length <= 0.0:
            raise ValueError(f"{r.scene_ref}: shortest_path_length must be > 0 for SPL")
        if not r.success:
            vals.append(0.0)
        else:
            vals.append(r.shortest_path_length / max(r.agent_path_length, r.shortest_path_length))
    return float(np.mean(vals))


def route_completion(result: EpisodeResult) -> float:
    # success implies the route is done even though progress stops a goal
    # radius short of the final vertex
    if result.success:
        return 1.0
    if result.total_route <= 0.0:
        raise ValueError("total_route must be > 0")
    return float(np.clip(result.completed_route / result.total_route, 0.0, 1.0))


def cumulative_cost(result: EpisodeResult) -> float:
    return float(result.collision_steps)


def sns(result: EpisodeResult) -> float:
    exposure = min(1.0, result.social_violation_steps / _SNS_VIOLATION_SCALE)
    return 0.5 * (1.0 if result.success else 0.0) + 0.5 * (1.0 - exposure)


@dataclass
class MetricReport:
    results: list  # EpisodeResult, sorted by scene_ref
    config_digest: str = ""
    seeds: list = field(default_factory=list)

    def aggregate(self) -> dict:
        rs = self.results
        if not rs:
            raise ValueError("no results to aggregate")
        return {
            "SR": float(np.mean([1.0 if r.success else 0.0 for r in rs])),
            "SPL": spl(rs),
            "SNS": float(np.mean([sns(r) for r in rs])),
            "CC": float(np.mean([cumulative_cost(r) for r in rs])),
            "RC": float(np.mean([route_completion(r) for r in rs])),
        }


def make_report(results, config_digest: str = "", seeds=()) -> MetricReport:
    ordered = sorted(results, key=lambda r: r.scene_ref)
    return MetricReport(results=ordered, config_digest=config_digest, seeds=list(seeds))
