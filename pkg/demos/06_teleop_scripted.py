"""Driving the teleop session server with a scripted console client.

The server speaks a small JSON-over-WebSocket protocol: hello handshake,
episode_begin, one control per tick (lockstep mode), optional annotate
messages, episode_end.  Whatever drives it — a browser console or the
30 lines of client below — the recorded episode is the same format the
expert and the learned policies produce, and replays bit-exactly.

Run:  python demos/06_teleop_scripted.py
"""

import asyncio
import tempfile
from pathlib import Path

import numpy as np
from websockets.asyncio.client import connect

from curbnav import Config, generate_scene
from curbnav.records import episode_event_log
from curbnav.storage import load_episode, save_scene
from curbnav.teleop import PROTOCOL_VERSION, decode_msg, encode_msg, serve
from curbnav.training import reward


def steer(state_payload):
    """Aim at the first roadbook waypoint: rotate first, then drive."""
    wp = state_payload["roadbook"]["waypoints"][0]
    bearing = float(np.arctan2(wp[1], wp[0]))
    omega = float(np.clip(bearing / 0.1, -1.5, 1.5))
    v = 2.0 if abs(bearing) < 0.5 else 0.0
    return v, omega


async def drive(port, annotate_at=None):
    async with connect(f"ws://127.0.0.1:{port}/teleop") as ws:
        # handshake: versions must match or the server refuses the session
        verb, p = decode_msg(await ws.recv())
        assert verb == "hello" and p["format_version"] == PROTOCOL_VERSION
        await ws.send(encode_msg("hello", {"format_version": PROTOCOL_VERSION}))
        await ws.recv()  # ack

        await ws.send(encode_msg("episode_begin", {}))
        verb, ack = decode_msg(await ws.recv())
        episode_id = ack["episode_id"]

        v, omega, ticks = 0.5, 0.0, 0
        while True:
            await ws.send(encode_msg("control", {"v": v, "omega": omega}))
            verb, st = decode_msg(await ws.recv())
            ticks += 1
            if annotate_at is not None and st["tick"] == annotate_at:
                # the operator saw something the detector missed
                await ws.send(encode_msg("annotate", {"kind": "collision", "tick": annotate_at}))
                await ws.recv()  # ack
            if st["terminal"] is not None:
                await ws.recv()  # episode_end
                return episode_id, st["terminal"], ticks
            v, omega = steer(st)


async def session(scene, cfg, out_dir, annotate_at=None):
    stop, ready = asyncio.Event(), asyncio.Event()
    task = asyncio.create_task(serve(scene, cfg, port=8941, out_dir=out_dir,
                                     seed=5, realtime=False, stop=stop, ready=ready))
    await ready.wait()
    try:
        return await drive(8941, annotate_at=annotate_at)
    finally:
        stop.set()
        await task


cfg = Config()
scene = generate_scene(300, "straight")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    save_scene(out / "scene.scene", scene)

    ep_id, terminal, ticks = asyncio.run(session(scene, cfg, out))
    ep = load_episode(out / f"{ep_id}.ep")
    print(f"scripted drive on {scene.ref}: terminal '{terminal}' after {ticks} ticks")
    print(f"recorded: {len(ep.steps)} steps, source '{ep.source}', "
          f"events {episode_event_log(ep)}")

    # the saved control stream re-simulates to the identical event log
    from curbnav.cli import main as cli_main
    code = cli_main(["replay", "--episode", str(out / f"{ep_id}.ep"),
                     "--scene", str(out / "scene.scene")])
    print(f"replay verification exit code: {code} (0 = bit-exact)")

    # drive again, flagging tick 40 as a collision the detector missed
    base_rewards = [reward(s.reward_terms) for s in ep.steps]
    ep_id2, _, _ = asyncio.run(session(scene, cfg, out, annotate_at=40))
    ep2 = load_episode(out / f"{ep_id2}.ep")
    ann_rewards = [reward(s.reward_terms) for s in ep2.steps]

    diffs = [(i, b, a) for i, (b, a) in enumerate(zip(base_rewards, ann_rewards))
             if abs(b - a) > 1e-12]
    print(f"\nmanual collision annotation at tick 40:")
    for i, b, a in diffs:
        print(f"  step {i}: reward {b:+.3f} -> {a:+.3f} (delta {a-b:+.1f})")
    print("annotations merge into the stored reward terms on save; nothing "
          "else about the episode changes")
