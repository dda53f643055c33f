"""Teleoperation session server.

Bridges the simulator to a human (or scripted) console over a line-oriented
wire protocol: the server streams per-tick state, the client sends driving
controls and event annotations, and finished sessions are written in the
same episode format the trainers consume.

Wire verbs (one JSON payload per line/message):
  server -> client: ``hello``, ``state``, ``ack``, ``error``, ``episode_end``
  client -> server: ``hello``, ``episode_begin``, ``control``, ``annotate``,
                    ``episode_end``

Two tick modes: wall-clock 10 Hz with zero-order hold on the latest control
(driving), and lockstep where each received control advances exactly one
tick (deterministic scripted sessions).
"""

from __future__ import annotations

import asyncio
import hashlib
import json
from pathlib import Path

import numpy as np

from .config import Config
from .engine import init_state, observe, step
from .expert import conditioning_route
from .geom import project_onto, to_egocentric, wrap_angle
from .records import EpisodeRecord, Event, RewardTerms, StepRecord, TERMINAL_KINDS
from .route import detect_corners, encode_roadbook
from .scenes import Scene
from . import storage

PROTOCOL_VERSION = 1
STALE_TICKS = 50  # annotations older than this are refused
_TICK_PERIOD_S = 0.1


def encode_msg(verb: str, payload: dict) -> str:
    return verb + " " + json.dumps(payload, sort_keys=True, separators=(",", ":"))


def decode_msg(line: str):
    line = line.strip()
    if not line:
        raise ValueError("empty message")
    verb, _, body = line.partition(" ")
    payload = json.loads(body) if body else {}
    if not isinstance(payload, dict):
        raise ValueError("payload must be an object")
    return verb, payload


def scene_payload(scene: Scene) -> dict:
    """Static scene geometry for consoles that render a map; sent once in the
    episode_begin ack (the state stream stays lean)."""
    return {
        "ref": scene.ref,
        "walkable": [[[float(x), float(y)] for x, y in poly] for poly in scene.walkable],
        "circles": [[float(c[0]), float(c[1]), float(c[2])] for c in scene.circles],
        "boxes": [[float(v) for v in b] for b in scene.boxes],
        "route": [[float(x), float(y)] for x, y in scene.gt_route],
        "goal": [float(scene.goal[0]), float(scene.goal[1])],
        "goal_radius": float(scene.goal_radius),
        "bounds": list(scene.bounds()),
    }


class Session:
    """Single-episode state machine; the sim ticker is the only mutator."""

    def __init__(self, scene: Scene, cfg: Config, seed: int = 0, episode_id: str = ""):
        self.scene = scene
        self.cfg = cfg
        self.seed = seed
        self.episode_id = episode_id or f"{scene.ref}-teleop-{seed}"
        self.state = init_state(scene, cfg.sim)
        self.cond_route = conditioning_route(scene, cfg, seed, htl=False)
        self.corners = detect_corners(self.cond_route, cfg.htl)
        self.cond_progress, _ = project_onto(self.cond_route, self.state.agent.xy)
        self.manual: dict = {}  # tick -> set of annotated kinds
        self._groups: list = []
        self._open_group = None
        self.ended = False

    # -- per-tick ------------------------------------------------------------

    def _begin_group(self):
        obs = observe(self.state, self.scene, self.cfg.sim)
        rb = encode_roadbook(
            self.cond_route, self.state.agent, self.cond_progress, params=self.cfg.htl, corners=self.corners
        )
        self._open_group = {
            "tick": self.state.tick,
            "obs": obs,
            "roadbook": rb,
            "speed": self.state.agent_speed,
            "origin": self.state.agent,
            "controls": [],
            "poses": [],
            "events": [],
            "d_completion": 0.0,
            "arc": 0.0,
        }
        return obs

    def tick(self, v: float, omega: float) -> dict:
        """Advance one sim tick under (v, omega); returns the state payload."""
        if self.ended or self.state.terminal is not None:
            raise RuntimeError("session already terminal")
        if self._open_group is None:
            obs = self._begin_group()
        else:
            obs = None
        g = self._open_group
        before = self.state.agent.xy
        prev_progress = self.state.route_progress
        _, events = step(self.state, self.scene, (v, omega), self.cfg.sim)
        g["controls"].append((float(v), float(omega)))
        g["poses"].append(self.state.agent)
        g["events"].extend(events)
        g["arc"] += float(np.hypot(*(self.state.agent.xy - before)))
        frac = (self.state.route_progress - prev_progress) / self.state.route_total
        g["d_completion"] += float(np.clip(frac, 0.0, 1.0))
        arc, _ = project_onto(self.cond_route, self.state.agent.xy)
        self.cond_progress = max(self.cond_progress, arc)

        terms = RewardTerms(
            d_completion=float(np.clip(frac, 0.0, 1.0)),
            collision=int(any(e.kind == "collision" for e in events)),
            deviation=int(any(e.kind == "deviation" for e in events)),
        )
        payload = self._state_payload(obs, terms, events)
        cap = self.cfg.sim
        if (
            self.state.terminal is not None
            or g["arc"] >= cap.step_cap_m - 1e-9
            or len(g["controls"]) >= cap.exec_tick_cap
        ):
            self._close_group()
        return payload

    def _state_payload(self, obs, terms: RewardTerms, events) -> dict:
        if obs is None:
            obs = self._open_group["obs"] if self._open_group else observe(self.state, self.scene, self.cfg.sim)
        rb = encode_roadbook(
            self.cond_route, self.state.agent, self.cond_progress, params=self.cfg.htl, corners=self.corners
        )
        a = self.state.agent
        return {
            "tick": self.state.tick,
            "agent": [a.x, a.y, a.theta],
            "speed": self.state.agent_speed,
            "pedestrians": [[float(p.pos[0]), float(p.pos[1])] for p in self.state.pedestrians],
            "rays_digest": hashlib.sha256(np.ascontiguousarray(obs.rays).tobytes()).hexdigest()[:16],
            "roadbook": {
                "waypoints": [[float(x), float(y)] for x, y in rb.waypoints],
                "cue": [rb.turn_cue.direction, float(rb.turn_cue.distance)],
            },
            "reward_terms": [terms.d_completion, terms.collision, terms.deviation],
            "events": [[e.tick, e.kind] for e in events],
            "terminal": self.state.terminal,
        }

    def _close_group(self):
        g = self._open_group
        if g is None or not g["controls"]:
            self._open_group = None
            return
        self._groups.append(g)
        self._open_group = None

    # -- annotations ---------------------------------------------------------

    def annotate(self, kind: str, tick: int) -> dict:
        if kind not in ("collision", "deviation", "clear"):
            return {"ok": False, "reason": f"unknown annotation kind {kind!r}"}
        if tick > self.state.tick or tick < 0:
            return {"ok": False, "reason": "tick not yet simulated"}
        if self.state.tick - tick > STALE_TICKS:
            return {"ok": False, "reason": f"stale tick ({self.state.tick - tick} > {STALE_TICKS} old)"}
        if kind == "clear":
            self.manual.pop(tick, None)
        else:
            self.manual.setdefault(tick, set()).add(kind)
        return {"ok": True, "tick": tick, "kind": kind}

    # -- episode assembly ----------------------------------------------------

    def _group_action(self, g) -> np.ndarray:
        n = self.cfg.train.n_waypoints
        poses = g["poses"]
        idx = np.clip(np.round(np.linspace(1, len(poses), n)).astype(int) - 1, 0, len(poses) - 1)
        origin = g["origin"]
        pts = np.array([[poses[i].x, poses[i].y] for i in idx])
        ego = to_egocentric(pts, origin)
        theta = [wrap_angle(poses[i].theta - origin.theta) for i in idx]
        return np.column_stack([ego, theta]).reshape(-1)

    def build_episode(self, reason: str) -> EpisodeRecord:
        """Assemble the recorded episode; manual annotations OR-merge into
        reward terms (auto-detections can never be cleared)."""
        self._close_group()
        self.ended = True
        steps = []
        for g in self._groups:
            ticks = range(g["tick"] + 1, g["tick"] + 1 + len(g["controls"]))
            manual_coll = any("collision" in self.manual.get(t, ()) for t in ticks)
            manual_dev = any("deviation" in self.manual.get(t, ()) for t in ticks)
            terms = RewardTerms(
                d_completion=float(np.clip(g["d_completion"], 0.0, 1.0)),
                collision=int(manual_coll or any(e.kind == "collision" for e in g["events"])),
                deviation=int(manual_dev or any(e.kind == "deviation" for e in g["events"])),
            )
            steps.append(
                StepRecord(
                    tick=g["tick"],
                    observation=g["obs"].rays,
                    roadbook=g["roadbook"],
                    speed=g["speed"],
                    action=self._group_action(g),
                    controls=g["controls"],
                    reward_terms=terms,
                    events=list(g["events"]),
                )
            )
        partial = self.state.terminal is None
        if partial and steps:
            # synthetic terminal so the record validates; flagged, and replay
            # comparison excludes it
            steps[-1].events.append(Event(kind="timeout", tick=self.state.tick))
        st = self.state
        metrics = {
            "success": 1.0 if st.terminal == "success" else 0.0,
            "agent_path_length": float(sum(g["arc"] for g in self._groups)),
            "shortest_path_length": 0.0,
            "collision_steps": float(sum(1 for g in self._groups for e in g["events"] if e.kind == "collision")),
            "social_violation_steps": float(st.social_violations),
            "completed_route": float(min(st.route_progress, st.route_total)),
            "total_route": float(st.route_total),
            "end_reason": reason,
        }
        if partial:
            metrics["partial"] = 1.0
        return EpisodeRecord(
            episode_id=self.episode_id,
            scene_ref=self.scene.ref,
            source="teleop",
            seed=self.seed,
            created_at="",
            steps=steps,
            terminal=st.terminal or "timeout",
            metrics=metrics,
        )


async def serve(
    scene: Scene,
    cfg: Config,
    port: int = 8765,
    out_dir=".",
    seed: int = 0,
    realtime: bool = True,
    host: str = "127.0.0.1",
    stop: asyncio.Event | None = None,
    ready: asyncio.Event | None = None,
):
    """Accept one console client at a time on ws://host:port/teleop."""
    from websockets.asyncio.server import serve as ws_serve

    busy = {"active": False}
    counter = {"n": 0}

    async def handler(ws):
        path = getattr(getattr(ws, "request", None), "path", "/teleop")
        if path.split("?")[0].rstrip("/") not in ("", "/teleop"):
            await ws.send(encode_msg("error", {"reason": f"unknown path {path}"}))
            await ws.close()
            return
        if busy["active"]:
            await ws.send(encode_msg("error", {"reason": "busy: a session is already active"}))
            await ws.close()
            return
        busy["active"] = True
        try:
            await _run_connection(ws, scene, cfg, out_dir, seed, realtime, counter)
        finally:
            busy["active"] = False

    async with ws_serve(handler, host, port):
        if ready is not None:
            ready.set()
        if stop is None:
            await asyncio.Future()
        else:
            await stop.wait()


async def _run_connection(ws, scene, cfg, out_dir, seed, realtime, counter):
    await ws.send(encode_msg("hello", {"format_version": PROTOCOL_VERSION}))
    session: Session | None = None
    latest = {"v": 0.0, "omega": 0.0}
    ticker: asyncio.Task | None = None
    hello_ok = False

    async def finish(reason: str):
        nonlocal session, ticker
        t, ticker = ticker, None
        if t is not None and t is not asyncio.current_task():
            t.cancel()
        if session is not None and not session.ended:
            ep = session.build_episode(reason)
            if ep.steps:
                path = Path(out_dir) / f"{ep.episode_id}.ep"
                storage.save_episode(path, ep)
            try:
                await ws.send(
                    encode_msg("episode_end", {"reason": reason, "terminal": ep.terminal, "episode_id": ep.episode_id})
                )
            except Exception:
                pass  # client already gone; the file is what matters
            session = None

    async def run_ticker():
        # wall-clock 10 Hz, zero-order hold on the latest control
        loop = asyncio.get_running_loop()
        next_t = loop.time()
        try:
            while session is not None and not session.ended:
                next_t += _TICK_PERIOD_S
                await asyncio.sleep(max(0.0, next_t - loop.time()))
                if session is None or session.ended or session.state.terminal is not None:
                    break
                payload = session.tick(latest["v"], latest["omega"])
                await ws.send(encode_msg("state", payload))
                if payload["terminal"] is not None:
                    await finish("terminal")
                    break
        except asyncio.CancelledError:
            raise
        except Exception:
            return  # connection dropped mid-send; the reader's cleanup saves

    try:
        async for raw in ws:
            try:
                verb, payload = decode_msg(raw if isinstance(raw, str) else raw.decode())
            except (ValueError, json.JSONDecodeError) as e:
                await ws.send(encode_msg("error", {"reason": f"malformed message: {e}"}))
                continue

            if verb == "hello":
                if payload.get("format_version") != PROTOCOL_VERSION:
                    await ws.send(
                        encode_msg(
                            "error",
                            {"reason": "version-mismatch", "server": PROTOCOL_VERSION, "client": payload.get("format_version")},
                        )
                    )
                    await ws.close()
                    return
                hello_ok = True
                await ws.send(encode_msg("ack", {"for": "hello"}))
            elif verb == "episode_begin":
                if not hello_ok:
                    await ws.send(encode_msg("error", {"reason": "hello required before episode_begin"}))
                    continue
                if session is not None:
                    await ws.send(encode_msg("error", {"reason": "episode already active"}))
                    continue
                ref = payload.get("scene_ref", scene.ref)
                if ref != scene.ref:
                    await ws.send(encode_msg("error", {"reason": f"server is running scene {scene.ref}, not {ref}"}))
                    continue
                ep_seed = int(payload.get("seed", seed))
                counter["n"] += 1
                session = Session(scene, cfg, seed=ep_seed, episode_id=f"{scene.ref}-teleop-{ep_seed}-{counter['n']}")
                latest["v"] = latest["omega"] = 0.0
                await ws.send(
                    encode_msg(
                        "ack",
                        {"for": "episode_begin", "episode_id": session.episode_id, "scene": scene_payload(scene)},
                    )
                )
                if realtime:
                    ticker = asyncio.create_task(run_ticker())
            elif verb == "control":
                if session is None or session.ended:
                    await ws.send(encode_msg("error", {"reason": "no active episode"}))
                    continue
                latest["v"] = float(payload.get("v", 0.0))
                latest["omega"] = float(payload.get("omega", 0.0))
                if not realtime:
                    payload_out = session.tick(latest["v"], latest["omega"])
                    await ws.send(encode_msg("state", payload_out))
                    if payload_out["terminal"] is not None:
                        await finish("terminal")
            elif verb == "annotate":
                if session is None:
                    await ws.send(encode_msg("error", {"reason": "no active episode"}))
                    continue
                result = session.annotate(str(payload.get("kind")), int(payload.get("tick", -1)))
                await ws.send(encode_msg("ack", {"for": "annotate", **result}))
            elif verb == "episode_end":
                if session is None:
                    await ws.send(encode_msg("error", {"reason": "no active episode"}))
                    continue
                await finish(str(payload.get("reason", "user")))
            else:
                await ws.send(encode_msg("error", {"reason": f"unknown verb {verb!r}"}))
    finally:
        await finish("disconnect")
