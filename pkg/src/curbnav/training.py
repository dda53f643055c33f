"""Reward definition and the two-stage training pipeline.

Stage one clones expert trajectories with plain MSE. Stage two runs offline
expectile-based Q-learning over mixed-quality episodes: V regresses toward
an expectile of target-Q, Q regresses on one-step TD against V, and the
policy is pulled toward dataset actions with advantage-exponential weights.
All updates are deterministic given the seed; batches follow a fixed seeded
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .features import encode_features
from .models import PolicyModel, ValueNets, make_optimizers, q_forward, v_forward
from .nn import Adam
from .records import EpisodeRecord, RewardTerms

W_COMPLETION = 0.5
W_COLLISION = 1.0
W_DEVIATION = 1.0


def reward(terms) -> float:
    """Scalar step reward from (completion fraction, collision, deviation)."""
    if isinstance(terms, RewardTerms):
        d, c, v = terms.d_completion, terms.collision, terms.deviation
    else:
        d, c, v = terms
    if not (0.0 <= d <= 1.0):
        raise ValueError(f"completion fraction out of range: {d}")
    if c not in (0, 1) or v not in (0, 1):
        raise ValueError(f"indicators must be 0 or 1, got collision={c} deviation={v}")
    return W_COMPLETION * d - W_COLLISION * c - W_DEVIATION * v


def expectile_loss(u, tau: float) -> float:
    """Asymmetric squared loss; minimizing it finds the tau-expectile."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must be in (0, 1)")
    u = np.asarray(u, dtype=np.float64)
    w = np.abs(tau - (u < 0.0))
    return float(np.mean(w * u * u))


def _interleave(gW, gb) -> list:
    return [g for pair in zip(gW, gb) for g in pair]


def sft_update(policy: PolicyModel, opt: Adam, feats: np.ndarray, targets: np.ndarray) -> float:
    """One MSE gradient step; loss is averaged over batch and action dims."""
    if feats.shape[0] != targets.shape[0]:
        raise ValueError("batch size mismatch between features and targets")
    out, cache = policy.net.forward(feats)
    err = out - targets
    b, d = err.shape
    loss = float(np.mean(err * err))
    grad_out = 2.0 * err / (b * d)
    gW, gb = policy.net.backward(cache, grad_out)
    opt.step(policy.net.params(), _interleave(gW, gb))
    return loss


@dataclass
class TrainState:
    policy: PolicyModel
    values: ValueNets
    opt_pi: Adam
    opt_q: Adam
    opt_v: Adam
    step_count: int = 0
    history: list = field(default_factory=list)


def build_train_state(feature_dim: int, cfg: Config, seed: int = 0, policy: PolicyModel | None = None) -> TrainState:
    policy = policy or PolicyModel(feature_dim, cfg, seed=seed)
    values = ValueNets.build(policy.embed_dim, policy.net.dims[-1], cfg, seed=seed)
    opt_pi, opt_q, opt_v = make_optimizers(policy, values, cfg)
    return TrainState(policy=policy, values=values, opt_pi=opt_pi, opt_q=opt_q, opt_v=opt_v)


def iql_update(ts: TrainState, batch: dict, cfg: Config, policy_step: bool = True) -> dict:
    """One offline-RL update: V (expectile), Q (TD), policy (weighted MSE).

    All three gradients are taken against the pre-update parameters, then
    applied; the target Q copies on its schedule. Value paths consume the
    policy embedding as data, so value steps can never move the trunk.
    ``policy_step=False`` applies only the critic updates (loss_pi is still
    reported): advantage weights from an untrained critic are noise, and a
    few hundred steps under them wreck a cloned initialization beyond what
    later training repairs.
    """
    t = cfg.train
    s, a, r, s2, done = batch["s"], batch["a"], batch["r"], batch["s2"], batch["done"]
    b = len(s)

    pred, emb_s, pi_cache = ts.policy.forward(s)
    emb_s2 = ts.policy.embed(s2)

    # V target: expectile regression toward target-network Q
    qt, _ = q_forward(ts.values.q_target, emb_s, a)
    v_s, v_cache = v_forward(ts.values.v, emb_s)
    u = qt - v_s
    w_exp = np.abs(t.expectile - (u < 0.0))
    loss_v = float(np.mean(w_exp * u * u))
    gWv, gbv = ts.values.v.backward(v_cache, (-2.0 * w_exp * u / b)[:, None])

    # Q: one-step TD against V(s')
    v_s2, _ = v_forward(ts.values.v, emb_s2)
    y = r + t.gamma * (1.0 - done) * v_s2
    q_sa, q_cache = q_forward(ts.values.q, emb_s, a)
    td = q_sa - y
    loss_q = float(np.mean(td * td))
    gWq, gbq = ts.values.q.backward(q_cache, (2.0 * td / b)[:, None])

    # policy: advantage-weighted regression toward dataset actions
    adv = q_sa - v_s
    wts = np.minimum(np.exp(t.beta * adv), t.adv_clip)
    err = pred - a
    loss_pi = float(np.mean(wts * np.mean(err * err, axis=1)))

    losses = {"loss_v": loss_v, "loss_q": loss_q, "loss_pi": loss_pi}
    if not all(np.isfinite(v) for v in losses.values()):
        raise RuntimeError(
            f"non-finite loss at step {ts.step_count}: {losses}; "
            f"max|adv|={float(np.abs(adv).max()):.3g} max|pred|={float(np.abs(pred).max()):.3g}"
        )

    ts.opt_v.step(ts.values.v.params(), _interleave(gWv, gbv))
    ts.opt_q.step(ts.values.q.params(), _interleave(gWq, gbq))
    if policy_step:
        d = err.shape[1]
        gWp, gbp = ts.policy.net.backward(pi_cache, 2.0 * wts[:, None] * err / (b * d))
        ts.opt_pi.step(ts.policy.net.params(), _interleave(gWp, gbp))
    ts.step_count += 1
    if ts.step_count % t.target_copy_every == 0:
        ts.values.sync_target()
    return losses


# -- dataset assembly --------------------------------------------------------

def episode_features(ep: EpisodeRecord, cfg: Config) -> np.ndarray:
    """Per-step feature vectors for one episode, honoring the frame window."""
    window: list = []
    rows = []
    for step in ep.steps:
        window.append(step.observation)
        frames = [_AsObs(r) for r in window[-cfg.train.frame_stack :]]
        rows.append(encode_features(frames, step.roadbook, step.speed, cfg))
    return np.array(rows)


class _AsObs:
    """Adapter giving raw ray arrays the Observation attribute shape."""

    __slots__ = ("rays",)

    def __init__(self, rays):
        self.rays = rays


def build_sft_arrays(episodes, cfg: Config):
    xs, ys = [], []
    for ep in episodes:
        feats = episode_features(ep, cfg)
        for row, step in zip(feats, ep.steps):
            xs.append(row)
            ys.append(np.asarray(step.action, dtype=np.float64))
    if not xs:
        raise ValueError("no steps in dataset")
    return np.array(xs), np.array(ys)


def build_transitions(episodes, cfg: Config) -> dict:
    s, a, r, s2, done = [], [], [], [], []
    for ep in episodes:
        feats = episode_features(ep, cfg)
        n = len(ep.steps)
        for i, step in enumerate(ep.steps):
            s.append(feats[i])
            a.append(np.asarray(step.action, dtype=np.float64))
            r.append(reward(step.reward_terms))
            last = i == n - 1
            s2.append(feats[i] if last else feats[i + 1])
            done.append(1.0 if last else 0.0)
    if not s:
        raise ValueError("no transitions in dataset")
    return {
        "s": np.array(s),
        "a": np.array(a),
        "r": np.array(r),
        "s2": np.array(s2),
        "done": np.array(done),
    }


# -- training loops ----------------------------------------------------------

def train_sft(episodes, cfg: Config, seed: int = 0, ckpt_dir=None) -> TrainState:
    """Behavior-clone the dataset; returns a TrainState whose policy is trained.

    Writes one checkpoint per epoch (plus ``sft.ckpt``) when ``ckpt_dir``
    is given. Deterministic: same (episodes, cfg, seed) gives bit-identical
    parameters.
    """
    x, y = build_sft_arrays(episodes, cfg)
    ts = build_train_state(x.shape[1], cfg, seed=seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 101])))
    bs = cfg.train.batch_size
    for epoch in range(cfg.train.sft_epochs):
        order = rng.permutation(len(x))
        losses = []
        for lo in range(0, len(order), bs):
            idx = order[lo : lo + bs]
            losses.append(sft_update(ts.policy, ts.opt_pi, x[idx], y[idx]))
        snap = {"epoch": epoch, "loss": float(np.mean(losses))}
        ts.history.append(snap)
        if ckpt_dir is not None:
            _save(ckpt_dir, f"sft-epoch{epoch:03d}.ckpt", ts, cfg, seed, "sft", snap)
    if ckpt_dir is not None:
        _save(ckpt_dir, "sft.ckpt", ts, cfg, seed, "sft", ts.history[-1])
    return ts


def train_rft(episodes, cfg: Config, init_policy: PolicyModel, seed: int = 0, ckpt_dir=None) -> TrainState:
    """Offline RL fine-tuning starting from cloned policy parameters."""
    trans = build_transitions(episodes, cfg)
    policy = PolicyModel(init_policy.net.dims[0], cfg, seed=seed)
    policy.net.set_flat(init_policy.net.flat())
    ts = build_train_state(policy.net.dims[0], cfg, seed=seed, policy=policy)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 202])))
    n = len(trans["s"])
    bs = cfg.train.batch_size
    order = rng.permutation(n)
    pos = 0
    epoch_losses = []
    epoch = 0
    for i in range(cfg.train.rft_steps):
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
            snap = {"epoch": epoch, **{k: float(np.mean([h[k] for h in epoch_losses])) for k in epoch_losses[0]}} if epoch_losses else {"epoch": epoch}
            ts.history.append(snap)
            if ckpt_dir is not None and epoch_losses:
                _save(ckpt_dir, f"rft-epoch{epoch:03d}.ckpt", ts, cfg, seed, "rft", snap)
            epoch += 1
            epoch_losses = []
        idx = order[pos : pos + bs]
        pos += bs
        epoch_losses.append(
            iql_update(ts, {k: v[idx] for k, v in trans.items()}, cfg, policy_step=i >= cfg.train.rft_warmup)
        )
    if ckpt_dir is not None:
        final = {"epoch": epoch, **{k: float(np.mean([h[k] for h in epoch_losses])) for k in epoch_losses[0]}} if epoch_losses else {"epoch": epoch}
        _save(ckpt_dir, "rft.ckpt", ts, cfg, seed, "rft", final)
    return ts


def _save(ckpt_dir, name, ts: TrainState, cfg: Config, seed: int, stage: str, snap: dict) -> None:
    from pathlib import Path

    from .storage import save_checkpoint

    save_checkpoint(Path(ckpt_dir) / name, ts.policy, cfg, seed=seed, stage=stage, metrics=snap, values=ts.values)
