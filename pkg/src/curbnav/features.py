"""Feature encoding: simulator observations + roadbook into one flat vector.

Layout (defaults): 4 stacked frames of min-pooled rays (4 x 64 = 256),
20 zero-padded egocentric waypoints (40), turn cue one-hot + distance (4),
agent speed (1) -> 301 values, everything normalized to unit-ish scale.
"""

from __future__ import annotations

import numpy as np

from .config import Config
from .route import ROADBOOK_CAPACITY, ROADBOOK_LOOKAHEAD_M, Roadbook

_CUE_ORDER = ("left", "right", "straight-to-goal")


def feature_dim(cfg: Config) -> int:
    pooled = cfg.sim.ray_heads * cfg.sim.rays_per_head // 2
    return cfg.train.frame_stack * pooled + 2 * ROADBOOK_CAPACITY + (len(_CUE_ORDER) + 1) + 1


def pool_rays(rays: np.ndarray) -> np.ndarray:
    """Min-pool adjacent ray pairs: (heads, n) -> flat heads*n/2 vector."""
    h, n = rays.shape
    return rays.reshape(h, n // 2, 2).min(axis=2).ravel()


def encode_features(obs_frames, roadbook: Roadbook, speed: float, cfg: Config) -> np.ndarray:
    """Build the policy input vector.

    ``obs_frames`` is the recent observation window, oldest first; fewer
    than ``frame_stack`` frames are padded by repeating the oldest.
    """
    k = cfg.train.frame_stack
    frames = list(obs_frames)[-k:]
    if not frames:
        raise ValueError("need at least one observation frame")
    while len(frames) < k:
        frames.insert(0, frames[0])
    parts = [pool_rays(f.rays) / cfg.sim.ray_max_range for f in frames]

    wps = np.zeros((ROADBOOK_CAPACITY, 2))
    m = min(len(roadbook.waypoints), ROADBOOK_CAPACITY)
    if m:
        wps[:m] = np.asarray(roadbook.waypoints)[:m]
    parts.append(wps.ravel() / ROADBOOK_LOOKAHEAD_M)

    cue = np.zeros(len(_CUE_ORDER) + 1)
    cue[_CUE_ORDER.index(roadbook.turn_cue.direction)] = 1.0
    cue[-1] = roadbook.turn_cue.distance / ROADBOOK_LOOKAHEAD_M
    parts.append(cue)

    parts.append(np.array([speed / cfg.sim.max_speed]))
    return np.concatenate(parts)
