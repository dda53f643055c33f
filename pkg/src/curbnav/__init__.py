"""curbnav: a desk-scale testbed for route-conditioned sidewalk navigation.

A 2D deterministic simulator with procedural street scenes, a trajectory
lifting pipeline that turns raw traces into perturbed conditioning routes,
a two-stage learned waypoint policy (behaviour cloning, then offline RL),
navigation metrics and a benchmark harness, text-first persistence, and a
teleoperation server for human data collection.
"""

from .config import Config, HtlParams, SimParams, TrainParams
from .geom import Pose2, arc_length, project_onto, resample, to_egocentric
from .records import EpisodeRecord, Event, RewardTerms, StepRecord
from .route import Roadbook, TurnCue, encode_roadbook, lift, render_prompt
from .scenes import Scene, generate_scene
from .engine import execute_trajectory, init_state, observe, step
from .planner import plan_path
from .expert import ExpertPolicy, run_expert
from .rollout import rollout
from .metrics import EpisodeResult, MetricReport
from .bench import run_benchmark
from .training import reward, train_rft, train_sft

__version__ = "0.1.0"

__all__ = [
    "Config",
    "HtlParams",
    "SimParams",
    "TrainParams",
    "Pose2",
    "arc_length",
    "project_onto",
    "resample",
    "to_egocentric",
    "EpisodeRecord",
    "Event",
    "RewardTerms",
    "StepRecord",
    "Roadbook",
    "TurnCue",
    "encode_roadbook",
    "lift",
    "render_prompt",
    "Scene",
    "generate_scene",
    "execute_trajectory",
    "init_state",
    "observe",
    "step",
    "plan_path",
    "ExpertPolicy",
    "run_expert",
    "rollout",
    "EpisodeResult",
    "MetricReport",
    "run_benchmark",
    "reward",
    "train_rft",
    "train_sft",
    "__version__",
]
