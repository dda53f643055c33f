"""Run configuration: simulator, training, and lifting knobs in one record.

Everything that changes numerical behavior lives here so a single digest can
stamp checkpoints, manifests, and reports. Overrides come from plain
``section.field=value`` text files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .route import HtlParams


@dataclass
class SimParams:
    dt: float = 0.1
    max_speed: float = 2.0  # m/s, clamped
    max_yaw_rate: float = 1.5  # rad/s, clamped
    agent_radius: float = 0.3
    pedestrian_radius: float = 0.3
    goal_radius: float = 2.0
    corridor_half_width: float = 3.0  # deviation threshold
    timeout_ticks: int = 2000
    ray_heads: int = 4
    rays_per_head: int = 32
    ray_max_range: float = 15.0
    near_miss_dist: float = 0.8  # social-violation radius around pedestrians
    ped_repulse_dist: float = 1.5
    step_cap_m: float = 1.5  # max arc per policy query
    exec_tick_cap: int = 60  # safety bound per execution


@dataclass
class TrainParams:
    n_waypoints: int = 8  # N: poses per predicted trajectory
    horizon_m: float = 2.0  # arc length the prediction spans
    frame_stack: int = 4
    hidden: tuple = (512, 512, 512, 512)
    tap_layer: int = 2  # embedding comes from this hidden layer (1-based)
    value_hidden: tuple = (256, 256)
    gamma: float = 0.99
    expectile: float = 0.7
    beta: float = 3.0
    adv_clip: float = 100.0
    target_copy_every: int = 500
    lr: float = 3e-4
    batch_size: int = 256
    sft_epochs: int = 30
    rft_steps: int = 1500
    rft_warmup: int = 1000  # critic-only steps before policy extraction starts
    xy_clamp: float = 5.0
    max_wp_gap: float = 0.5

    @property
    def action_dim(self) -> int:
        return 3 * self.n_waypoints


@dataclass
class Config:
    sim: SimParams = field(default_factory=SimParams)
    train: TrainParams = field(default_factory=TrainParams)
    htl: HtlParams = field(default_factory=HtlParams)

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def _parse_value(text: str, current):
    if isinstance(current, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(v) for v in text.split(",") if v.strip())
    return text


def apply_overrides(cfg: Config, lines) -> Config:
    """Apply ``section.field=value`` override lines to a config.

    Blank lines and ``#`` comments are skipped. Unknown keys raise so typos
    never pass silently.
    """
    sections = {"sim": cfg.sim, "train": cfg.train, "htl": cfg.htl}
    pending: dict[str, dict] = {k: {} for k in sections}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise ValueError(f"config line {lineno}: expected section.field=value, got {raw!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        section, name = key.split(".", 1)
        if section not in sections:
            raise ValueError(f"config line {lineno}: unknown section {section!r}")
        target = sections[section]
        if not any(f.name == name for f in fields(target)):
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        pending[section][name] = _parse_value(text, getattr(target, name))
    return Config(
        sim=replace(cfg.sim, **pending["sim"]),
        train=replace(cfg.train, **pending["train"]),
        htl=replace(cfg.htl, **pending["htl"]),
    )


def load_config(path, base: Config | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        return apply_overrides(base or Config(), fh)


def dump_config(cfg: Config) -> str:
    """Canonical text form: sorted section.field=value lines."""
    out = []
    for section_name, section in (("htl", cfg.htl), ("sim", cfg.sim), ("train", cfg.train)):
        for f in sorted(fields(section), key=lambda f: f.name):
            v = getattr(section, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append(f"{section_name}.{f.name}={v}")
    return "\n".join(out) + "\n"
