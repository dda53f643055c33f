"""Policy and value networks plus trajectory decode.

The policy maps the feature vector to a flattened egocentric trajectory and
exposes its mid-layer activation as the state embedding the value nets
consume (always detached: value updates never touch the policy trunk).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .geom import wrap_angle
from .nn import MLP, Adam


class PolicyModel:
    def __init__(self, feature_dim: int, cfg: Config, seed: int = 0):
        self.cfg = cfg
        dims = [feature_dim, *cfg.train.hidden, cfg.train.action_dim]
        self.net = MLP(dims, seed=seed)
        self.tap = cfg.train.tap_layer

    @property
    def embed_dim(self) -> int:
        return self.net.dims[self.tap]

    def forward(self, features: np.ndarray):
        """Returns (actions, embeddings, cache); embeddings come from the
        mid-layer tap and are plain arrays (no gradient flows back through
        a consumer)."""
        out, cache = self.net.forward(features)
        _, acts = cache
        return out, acts[self.tap].copy(), cache

    def act(self, features: np.ndarray) -> np.ndarray:
        out, _, _ = self.forward(np.atleast_2d(features))
        return out[0]

    def embed(self, features: np.ndarray) -> np.ndarray:
        _, emb, _ = self.forward(features)
        return emb


@dataclass
class ValueNets:
    q: MLP
    v: MLP
    q_target: MLP

    @classmethod
    def build(cls, embed_dim: int, action_dim: int, cfg: Config, seed: int = 0) -> "ValueNets":
        q = MLP([embed_dim + action_dim, *cfg.train.value_hidden, 1], seed=seed * 2 + 1)
        v = MLP([embed_dim, *cfg.train.value_hidden, 1], seed=seed * 2 + 2)
        return cls(q=q, v=v, q_target=q.copy())

    def sync_target(self) -> None:
        self.q_target = self.q.copy()


def q_forward(net: MLP, emb: np.ndarray, actions: np.ndarray):
    x = np.concatenate([emb, actions], axis=1)
    out, cache = net.forward(x)
    return out[:, 0], cache


def v_forward(net: MLP, emb: np.ndarray):
    out, cache = net.forward(emb)
    return out[:, 0], cache


def decode_action(a: np.ndarray, cfg: Config) -> np.ndarray:
    """Raw policy output -> executable (N, 3) egocentric trajectory.

    Clamps x and y into the configured square, wraps headings, and walks
    the waypoint chain truncating any gap above the per-waypoint spacing
    cap (measured from the agent at the origin).
    """
    t = cfg.train
    wps = np.array(a, dtype=np.float64).reshape(t.n_waypoints, 3)
    wps[:, 0] = np.clip(wps[:, 0], -t.xy_clamp, t.xy_clamp)
    wps[:, 1] = np.clip(wps[:, 1], -t.xy_clamp, t.xy_clamp)
    wps[:, 2] = wrap_angle(wps[:, 2])
    prev = np.zeros(2)
    for i in range(t.n_waypoints):
        gap = wps[i, :2] - prev
        d = float(np.hypot(*gap))
        if d > t.max_wp_gap:
            wps[i, :2] = prev + gap * (t.max_wp_gap / d)
        prev = wps[i, :2]
    return wps


def trajectory_to_action(wps: np.ndarray) -> np.ndarray:
    return np.asarray(wps, dtype=np.float64).reshape(-1)


def make_optimizers(policy: PolicyModel, values: ValueNets, cfg: Config):
    lr = cfg.train.lr
    return (
        Adam(policy.net.params(), lr=lr),
        Adam(values.q.params(), lr=lr),
        Adam(values.v.params(), lr=lr),
    )
