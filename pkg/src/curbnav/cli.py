"""Command-line surface tying the pipeline together.

Every command is reproducible from (inputs, seed, config): outputs carry no
wall-clock timestamps unless explicitly stamped, so running a command twice
with the same arguments yields byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import Config
from .bench import expert_policy_factory, net_policy_factory, random_policy_factory, render_table, run_benchmark
from .expert import run_expert
from .records import DatasetManifest, episode_event_log
from .route import lift
from .scenes import KINDS, generate_scene
from . import storage
from .training import train_rft, train_sft


def _load_cfg(args) -> Config:
    if getattr(args, "config", None):
        return storage.load_config_file(args.config)
    return Config()


def _scene_files(directory) -> list:
    files = sorted(Path(directory).glob("*.scene"))
    if not files:
        raise storage.StorageError(f"{directory}: no .scene files found")
    return files


def _cmd_gen_scenes(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        kind = KINDS[i % len(KINDS)] if args.kind == "mix" else args.kind
        scene = generate_scene(args.seed + i, kind)
        storage.save_scene(out / f"{scene.ref}.scene", scene)
        print(f"wrote {out / (scene.ref + '.scene')}")
    return 0


def _cmd_collect_expert(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    levels = [float(x) for x in args.noise.split(",")]
    stamp = datetime.now(timezone.utc).isoformat() if args.stamp else ""
    refs = []
    count = 0
    for sf in _scene_files(args.scenes):
        scene = storage.load_scene(sf)
        for j in range(args.per_scene):
            ep_seed = int(np.random.SeedSequence([args.seed, scene.seed, j]).generate_state(1)[0])
            ep = run_expert(
                scene,
                cfg,
                seed=ep_seed,
                noise_level=levels[count % len(levels)],
                htl=not args.no_htl,
                episode_id=f"{scene.ref}-e{j}",
                created_at=stamp,
            )
            name = f"{scene.ref}-e{j}.ep"
            storage.save_episode(out / name, ep)
            refs.append(name)
            count += 1
    manifest = DatasetManifest(episodes=refs, counts={"expert": count}, config_digest=cfg.digest())
    storage.save_manifest(out / "dataset.manifest", manifest)
    print(f"collected {count} episodes -> {out / 'dataset.manifest'}")
    return 0


def _cmd_lift(args) -> int:
    cfg = _load_cfg(args)
    raw = storage.import_trace(args.trace, frame=args.frame)
    route = lift(raw, cfg.htl, rng_seed=args.seed, smooth=not args.no_smooth)
    storage.save_route(args.out, route)
    print(f"lifted {len(raw)} points -> {len(route)} route points ({args.out})")
    return 0


def _cmd_train_sft(args) -> int:
    cfg = _load_cfg(args)
    episodes = storage.load_dataset(args.dataset)
    train_sft(episodes, cfg, seed=args.seed, ckpt_dir=args.out)
    print(f"wrote {Path(args.out) / 'sft.ckpt'}")
    return 0


def _cmd_train_rft(args) -> int:
    cfg = _load_cfg(args)
    episodes = storage.load_dataset(args.dataset)
    policy, _, _ = storage.load_checkpoint(args.init, cfg)
    train_rft(episodes, cfg, policy, seed=args.seed, ckpt_dir=args.out)
    print(f"wrote {Path(args.out) / 'rft.ckpt'}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    scenes = [storage.load_scene(f) for f in _scene_files(args.scenes)]
    if args.policy == "net":
        if not args.checkpoint:
            raise ValueError("--checkpoint is required for the net policy")
        policy, _, meta = storage.load_checkpoint(args.checkpoint, cfg)
        factory, name = net_policy_factory(policy), meta.get("stage", "net")
    elif args.policy == "expert":
        factory, name = expert_policy_factory(noise_level=0.0), "expert"
    else:
        factory, name = random_policy_factory(), "random"
    report = run_benchmark(
        factory, scenes, cfg, seed=args.seed, route_offset=args.route_offset, jitter=args.jitter
    )
    storage.save_report(args.out, report)
    if args.table:
        sys.stdout.write(render_table({name: report}))
    print(f"wrote {args.out}")
    return 0


def _cmd_teleop_serve(args) -> int:
    import asyncio

    from .teleop import serve

    cfg = _load_cfg(args)
    scene = storage.load_scene(args.scene)
    asyncio.run(serve(scene, cfg, port=args.port, out_dir=args.out, seed=args.seed, realtime=not args.lockstep))
    return 0


def _cmd_replay(args) -> int:
    from .engine import init_state, replay_controls

    cfg = _load_cfg(args)
    ep = storage.load_episode(args.episode)
    if args.scene:
        scene = storage.load_scene(args.scene)
    else:
        scene = storage.load_scene(Path(args.scenes) / f"{ep.scene_ref}.scene")
    if scene.ref != ep.scene_ref:
        raise ValueError(f"scene {scene.ref} does not match episode's {ep.scene_ref}")
    controls = [c for s in ep.steps for c in s.controls]
    state = init_state(scene, cfg.sim)
    replayed = [(e.tick, e.kind) for e in replay_controls(state, scene, controls, cfg.sim)]
    recorded = episode_event_log(ep)
    if ep.metrics.get("partial") and recorded and recorded[-1][1] == "timeout":
        recorded = recorded[:-1]  # synthetic terminal added at disconnect
    if replayed == recorded:
        print(f"replay ok: {len(recorded)} events match")
        return 0
    for i in range(max(len(recorded), len(replayed))):
        a = recorded[i] if i < len(recorded) else None
        b = replayed[i] if i < len(replayed) else None
        if a != b:
            tick = (a or b)[0]
            print(f"replay diverged at tick {tick}: recorded {a}, replayed {b}", file=sys.stderr)
            return 1
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curbnav", description="Route-conditioned sidewalk navigation testbed")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None, help="key=value override file")

    sp = sub.add_parser("gen-scenes", help="generate procedural scenes")
    common(sp)
    sp.add_argument("--kind", choices=KINDS + ("mix",), required=True)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_gen_scenes)

    sp = sub.add_parser("collect-expert", help="record scripted-expert episodes")
    common(sp)
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--per-scene", type=int, default=1)
    sp.add_argument("--noise", default="0", help="comma-separated noise levels cycled per episode")
    sp.add_argument("--no-htl", action="store_true", help="condition roadbooks on the clean route")
    sp.add_argument("--stamp", action="store_true", help="record wall-clock created_at headers")
    sp.set_defaults(fn=_cmd_collect_expert)

    sp = sub.add_parser("lift", help="import an external trace and lift it into a route")
    common(sp)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--frame", choices=("xy", "latlon"), default="xy")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-smooth", action="store_true")
    sp.set_defaults(fn=_cmd_lift)

    sp = sub.add_parser("train-sft", help="behaviour-clone a policy from a dataset")
    common(sp)
    sp.add_argument("--dataset", required=True, help="dataset manifest path")
    sp.add_argument("--out", required=True, help="checkpoint directory")
    sp.set_defaults(fn=_cmd_train_sft)

    sp = sub.add_parser("train-rft", help="offline-RL fine-tune from an SFT checkpoint")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--init", required=True, help="initial policy checkpoint")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_train_rft)

    sp = sub.add_parser("eval", help="benchmark a policy over a scene suite")
    common(sp)
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--out", required=True, help="report file path")
    sp.add_argument("--policy", choices=("net", "expert", "random"), default="net")
    sp.add_argument("--route-offset", type=float, default=0.0, help="lateral conditioning-route shift (m)")
    sp.add_argument("--jitter", action="store_true", help="jitter spawn poses")
    sp.add_argument("--table", action="store_true", help="print the metric table")
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("teleop-serve", help="serve a teleoperation session")
    common(sp)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--port", type=int, default=8765)
    sp.add_argument("--out", default=".", help="directory for recorded episodes")
    sp.add_argument("--lockstep", action="store_true", help="tick only on received control (testing)")
    sp.set_defaults(fn=_cmd_teleop_serve)

    sp = sub.add_parser("replay", help="re-simulate an episode and verify its event log")
    common(sp)
    sp.add_argument("--episode", required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--scene", default=None)
    group.add_argument("--scenes", default=None, help="directory to resolve the episode's scene_ref")
    sp.set_defaults(fn=_cmd_replay)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
