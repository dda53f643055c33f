"""Benchmark harness: run a policy across a scene suite, emit a report.

The harness re-queries the policy after each capped trajectory execution
(not per tick), so every policy — scripted, learned, or random — is scored
under the same step-distance rule. Scenes are independent, which keeps the
reduction order-independent; results are sorted by scene id before
aggregation either way.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

from .config import Config
from .expert import ExpertPolicy, conditioning_route, expert_plan
from .features import encode_features
from .geom import arc_length
from .metrics import EpisodeResult, MetricReport, make_report
from .models import PolicyModel, decode_action
from .planner import plan_path
from .rollout import rollout

_TABLE_COLUMNS = ("SR", "SPL", "SNS", "CC", "RC")


class NetPolicy:
    """Learned policy adapter: features in, decoded trajectory out."""

    def __init__(self, model: PolicyModel, cfg: Config):
        self.model = model
        self.cfg = cfg

    def act(self, ctx):
        feats = encode_features(ctx.obs_window, ctx.roadbook, ctx.speed, self.cfg)
        return decode_action(self.model.act(feats), self.cfg)


class RandomPolicy:
    def __init__(self, cfg: Config, seed: int = 0):
        self.cfg = cfg
        self.rng = Generator(PCG64(SeedSequence([seed, 13])))

    def act(self, ctx):
        n = self.cfg.train.action_dim
        a = self.rng.uniform(-1.0, 1.0, size=n) * np.tile([2.5, 2.5, np.pi], n // 3)
        return decode_action(a, self.cfg)


def net_policy_factory(model: PolicyModel):
    def make(scene, plan, cfg, seed):
        return NetPolicy(model, cfg)

    return make


def random_policy_factory():
    def make(scene, plan, cfg, seed):
        return RandomPolicy(cfg, seed=seed)

    return make


def expert_policy_factory(noise_level: float = 0.0):
    def make(scene, plan, cfg, seed):
        # the expert tracks its own wide-margin plan, not the reference
        # shortest path used for SPL
        return ExpertPolicy(expert_plan(scene, cfg.sim), cfg, noise_level=noise_level, seed=seed)

    return make


def offset_route(route: np.ndarray, offset: float) -> np.ndarray:
    """Shift a polyline laterally (left-normal positive) by a constant."""
    if offset == 0.0:
        return np.asarray(route, dtype=np.float64)
    r = np.asarray(route, dtype=np.float64)
    d = np.gradient(r, axis=0)
    norm = np.hypot(d[:, 0], d[:, 1])
    norm[norm < 1e-12] = 1.0
    left = np.column_stack([-d[:, 1], d[:, 0]]) / norm[:, None]
    return r + offset * left


def run_benchmark(
    policy_factory,
    scenes,
    cfg: Config,
    seed: int = 0,
    source: str = "policy",
    route_offset: float = 0.0,
    jitter: bool = False,
    workers: int = 1,
) -> MetricReport:
    """Evaluate one policy over a suite; deterministic given (suite, seed)."""

    def run_one(idx_scene):
        idx, scene = idx_scene
        ep_seed = int(SeedSequence([seed, idx]).generate_state(1)[0])
        plan = plan_path(scene)
        cond = offset_route(conditioning_route(scene, cfg, ep_seed, htl=False), route_offset)
        policy = policy_factory(scene, plan, cfg, ep_seed)
        jrng = Generator(PCG64(SeedSequence([seed, idx, 5]))) if jitter else None
        ep = rollout(
            scene,
            policy,
            cfg,
            cond_route=cond,
            source=source,
            episode_id=f"{scene.ref}-{source}-{seed}",
            seed=ep_seed,
            shortest=arc_length(plan),
            spawn_jitter_rng=jrng,
        )
        return EpisodeResult.from_episode(ep)

    items = list(enumerate(scenes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, items))
    else:
        results = [run_one(it) for it in items]
    return make_report(results, config_digest=cfg.digest(), seeds=[seed])


def render_table(named_reports: dict) -> str:
    """Tab-separated metric table, one row per named report."""
    lines = ["\t".join(("policy",) + _TABLE_COLUMNS)]
    for name, report in named_reports.items():
        agg = report.aggregate()
        lines.append("\t".join([name] + [f"{agg[c]:.4f}" for c in _TABLE_COLUMNS]))
    return "\n".join(lines) + "\n"
