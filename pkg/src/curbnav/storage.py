"""Persistence for every artifact the pipeline produces.

All formats are versioned text (human-diffable, floats as shortest
round-trippable decimals); the checkpoint parameter block is the single
binary exception. Writers go through write-temp-then-rename so a crashed
process never leaves a half-written file at the destination; loaders are
pure and reject unknown major versions.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .config import Config, apply_overrides, dump_config
from .geom import Pose2, validate_polyline
from .metrics import EpisodeResult, MetricReport, make_report
from .models import PolicyModel, ValueNets
from .records import DatasetManifest, EpisodeRecord, Event, RewardTerms, StepRecord, validate_episode
from .route import Roadbook, TurnCue
from .scenes import PedestrianSpec, Scene, validate_scene

_VERSIONS = {"scene": 1, "route": 1, "episode": 1, "manifest": 1, "ckpt": 1, "report": 1, "config": 1}
_EARTH_RADIUS_M = 6371000.0


class StorageError(ValueError):
    pass


# -- low-level helpers --------------------------------------------------------


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(kind: str) -> str:
    return f"curbnav-{kind} v{_VERSIONS[kind]}"


def _check_header(line: str, kind: str, path) -> None:
    expect = f"curbnav-{kind} v"
    if not line.startswith(expect):
        raise StorageError(f"{path}:1: expected '{_header(kind)}' header, got {line!r}")
    try:
        major = int(line[len(expect) :].split(".")[0])
    except ValueError:
        raise StorageError(f"{path}:1: unparseable version in {line!r}") from None
    if major != _VERSIONS[kind]:
        raise StorageError(f"{path}:1: unsupported {kind} format version {major}")


def _f(v) -> str:
    return repr(float(v))


def _jdump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _py(obj):
    """Recursively convert numpy containers/scalars to JSON-legal builtins."""
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    return obj


def _read_lines(path, kind: str) -> list:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise StorageError(f"{path}: no such file") from None
    lines = text.splitlines()
    if not lines:
        raise StorageError(f"{path}:1: empty file")
    _check_header(lines[0], kind, path)
    return lines


# -- scenes -------------------------------------------------------------------


def save_scene(path, scene: Scene) -> None:
    out = [_header("scene")]
    out.append(f"seed {scene.seed}")
    out.append(f"kind {scene.kind}")
    out.append(f"spawn {_f(scene.spawn.x)} {_f(scene.spawn.y)} {_f(scene.spawn.theta)}")
    out.append(f"goal {_f(scene.goal[0])} {_f(scene.goal[1])} {_f(scene.goal_radius)}")
    out.append(f"walkable {len(scene.walkable)}")
    for poly in scene.walkable:
        out.append("poly " + " ".join(_f(v) for v in np.asarray(poly).ravel()))
    out.append(f"circles {len(scene.circles)}")
    for c in scene.circles:
        out.append("circle " + " ".join(_f(v) for v in c))
    out.append(f"boxes {len(scene.boxes)}")
    for b in scene.boxes:
        out.append("box " + " ".join(_f(v) for v in b))
    out.append(f"route {len(scene.gt_route)}")
    for p in np.asarray(scene.gt_route):
        out.append(f"pt {_f(p[0])} {_f(p[1])}")
    out.append(f"pedestrians {len(scene.pedestrians)}")
    for ped in scene.pedestrians:
        out.append(
            "ped "
            + " ".join(_f(v) for v in (*ped.spawn, *ped.goal, ped.speed))
        )
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def load_scene(path) -> Scene:
    lines = _read_lines(path, "scene")
    it = iter(enumerate(lines[1:], start=2))

    def take(tag: str):
        try:
            ln, line = next(it)
        except StopIteration:
            raise StorageError(f"{path}: truncated, expected '{tag}'") from None
        parts = line.split()
        if not parts or parts[0] != tag:
            raise StorageError(f"{path}:{ln}: expected '{tag}', got {line!r}")
        return ln, parts[1:]

    def floats(parts, ln):
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise StorageError(f"{path}:{ln}: bad float") from None

    _, v = take("seed")
    seed = int(v[0])
    _, v = take("kind")
    kind = v[0]
    ln, v = take("spawn")
    spawn = Pose2(*floats(v, ln))
    ln, v = take("goal")
    gx, gy, gr = floats(v, ln)
    _, v = take("walkable")
    walkable = []
    for _ in range(int(v[0])):
        ln, v = take("poly")
        flat = floats(v, ln)
        walkable.append(np.array(flat, dtype=np.float64).reshape(-1, 2))
    _, v = take("circles")
    circles = []
    for _ in range(int(v[0])):
        ln, v = take("circle")
        circles.append(tuple(floats(v, ln)))
    _, v = take("boxes")
    boxes = []
    for _ in range(int(v[0])):
        ln, v = take("box")
        boxes.append(tuple(floats(v, ln)))
    _, v = take("route")
    pts = []
    for _ in range(int(v[0])):
        ln, v = take("pt")
        pts.append(floats(v, ln))
    _, v = take("pedestrians")
    peds = []
    for _ in range(int(v[0])):
        ln, v = take("ped")
        sx, sy, px, py, speed = floats(v, ln)
        peds.append(PedestrianSpec(spawn=(sx, sy), goal=(px, py), speed=speed))
    scene = Scene(
        seed=seed,
        kind=kind,
        walkable=walkable,
        circles=circles,
        boxes=boxes,
        gt_route=np.array(pts, dtype=np.float64),
        spawn=spawn,
        goal=(gx, gy),
        goal_radius=gr,
        pedestrians=peds,
    )
    return validate_scene(scene)


# -- routes -------------------------------------------------------------------


def save_route(path, route: np.ndarray) -> None:
    route = validate_polyline(np.asarray(route, dtype=np.float64))
    out = [_header("route")]
    out.extend(f"{_f(p[0])} {_f(p[1])}" for p in route)
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def load_route(path) -> np.ndarray:
    lines = _read_lines(path, "route")
    pts = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            pts.append([float(parts[0]), float(parts[1])])
        except (IndexError, ValueError):
            raise StorageError(f"{path}:{ln}: bad route point {line!r}") from None
    try:
        return validate_polyline(np.array(pts, dtype=np.float64))
    except ValueError as e:
        raise StorageError(f"{path}: {e}") from None


# -- episodes -----------------------------------------------------------------


def _step_to_json(s: StepRecord) -> dict:
    return {
        "tick": int(s.tick),
        "obs": _py(s.observation),
        "rb_wps": _py(s.roadbook.waypoints),
        "cue": [s.roadbook.turn_cue.direction, float(s.roadbook.turn_cue.distance)],
        "speed": float(s.speed),
        "action": _py(s.action),
        "controls": _py(s.controls),
        "terms": [float(s.reward_terms.d_completion), int(s.reward_terms.collision), int(s.reward_terms.deviation)],
        "events": [[int(e.tick), e.kind] for e in s.events],
    }


def _step_from_json(d: dict) -> StepRecord:
    wps = np.array(d["rb_wps"], dtype=np.float64).reshape(-1, 2)
    return StepRecord(
        tick=int(d["tick"]),
        observation=np.array(d["obs"], dtype=np.float64),
        roadbook=Roadbook(waypoints=wps, turn_cue=TurnCue(direction=d["cue"][0], distance=float(d["cue"][1]))),
        speed=float(d["speed"]),
        action=np.array(d["action"], dtype=np.float64),
        controls=[(float(v), float(w)) for v, w in d["controls"]],
        reward_terms=RewardTerms(
            d_completion=float(d["terms"][0]), collision=int(d["terms"][1]), deviation=int(d["terms"][2])
        ),
        events=[Event(kind=k, tick=int(t)) for t, k in d["events"]],
    )


def save_episode(path, ep: EpisodeRecord) -> None:
    validate_episode(ep)
    out = [_header("episode")]
    out.append(
        "H "
        + _jdump(
            {
                "episode_id": ep.episode_id,
                "scene_ref": ep.scene_ref,
                "source": ep.source,
                "seed": int(ep.seed),
                "created_at": ep.created_at,
            }
        )
    )
    out.extend("S " + _jdump(_step_to_json(s)) for s in ep.steps)
    out.append("F " + _jdump({"terminal": ep.terminal, "metrics": _py(ep.metrics)}))
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def load_episode(path) -> EpisodeRecord:
    from .records import TERMINAL_KINDS

    lines = _read_lines(path, "episode")
    header = None
    footer = None
    steps = []
    terminals_seen = 0
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tag, _, body = line.partition(" ")
        try:
            d = json.loads(body)
        except json.JSONDecodeError as e:
            raise StorageError(f"{path}:{ln}: bad record line ({e.msg})") from None
        if tag == "H":
            if header is not None:
                raise StorageError(f"{path}:{ln}: duplicate header")
            header = d
        elif tag == "S":
            if header is None:
                raise StorageError(f"{path}:{ln}: step before header")
            if footer is not None:
                raise StorageError(f"{path}:{ln}: step after footer")
            try:
                step = _step_from_json(d)
            except (KeyError, TypeError, ValueError) as e:
                raise StorageError(f"{path}:{ln}: malformed step ({e})") from None
            for ev in step.events:
                if ev.kind in TERMINAL_KINDS:
                    terminals_seen += 1
                    if terminals_seen > 1:
                        raise StorageError(f"{path}:{ln}: second terminal event")
            steps.append(step)
        elif tag == "F":
            footer = d
        else:
            raise StorageError(f"{path}:{ln}: unknown record tag {tag!r}")
    if header is None or footer is None:
        raise StorageError(f"{path}: truncated episode (missing {'header' if header is None else 'footer'})")
    ep = EpisodeRecord(
        episode_id=header["episode_id"],
        scene_ref=header["scene_ref"],
        source=header["source"],
        seed=int(header["seed"]),
        created_at=header.get("created_at", ""),
        steps=steps,
        terminal=footer["terminal"],
        metrics=footer["metrics"],
    )
    try:
        return validate_episode(ep)
    except ValueError as e:
        raise StorageError(f"{path}: {e}") from None


# -- dataset manifests --------------------------------------------------------


def save_manifest(path, manifest: DatasetManifest) -> None:
    out = [_header("manifest")]
    out.append(f"config {manifest.config_digest}")
    for source in sorted(manifest.counts):
        out.append(f"count {source} {manifest.counts[source]}")
    out.extend(f"episode {ref}" for ref in manifest.episodes)
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def load_manifest(path) -> DatasetManifest:
    lines = _read_lines(path, "manifest")
    digest = ""
    counts: dict = {}
    episodes: list = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "config":
            digest = parts[1] if len(parts) > 1 else ""
        elif parts[0] == "count":
            counts[parts[1]] = int(parts[2])
        elif parts[0] == "episode":
            episodes.append(line.split(" ", 1)[1])
        else:
            raise StorageError(f"{path}:{ln}: unknown manifest line {parts[0]!r}")
    base = Path(path).parent
    for ref in episodes:
        if not (base / ref).exists():
            raise StorageError(f"{path}: referenced episode missing: {ref}")
    return DatasetManifest(episodes=episodes, counts=counts, config_digest=digest)


def load_dataset(path) -> list:
    """Load every episode a manifest references, in manifest order."""
    manifest = load_manifest(path)
    base = Path(path).parent
    return [load_episode(base / ref) for ref in manifest.episodes]


# -- checkpoints --------------------------------------------------------------


def _net_params_f32(net) -> bytes:
    return b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.params())


def save_checkpoint(path, policy: PolicyModel, cfg: Config, seed: int = 0, stage: str = "sft", metrics=None, values: ValueNets | None = None, created_at: str = "") -> None:
    head = [_header("ckpt")]
    head.append(f"stage {stage}")
    head.append(f"seed {int(seed)}")
    head.append(f"created_at {created_at}")
    head.append(f"config {cfg.digest()}")
    head.append("metrics " + _jdump(_py(metrics or {})))
    nets = [("policy", policy.net)]
    if values is not None:
        nets += [("q", values.q), ("q_target", values.q_target), ("v", values.v)]
    blob = b""
    for name, net in nets:
        head.append(f"net {name} " + " ".join(str(d) for d in net.dims))
        blob += _net_params_f32(net)
    head.append(f"params {len(blob) // 4}")
    head.append("BINARY")
    _atomic_write(path, ("\n".join(head) + "\n").encode() + blob)


def _assign_params(net, flat: np.ndarray, offset: int) -> int:
    params = []
    for fan_in, fan_out in zip(net.dims[:-1], net.dims[1:]):
        w = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset : offset + fan_out]
        offset += fan_out
        params.extend([w.astype(np.float64), b.astype(np.float64)])
    net.set_params(params)
    return offset


def load_checkpoint(path, cfg: Config):
    """Rebuild (policy, values-or-None, meta) from a checkpoint file.

    The stored network shapes must match what ``cfg`` would construct —
    a checkpoint from a different configuration is rejected, not coerced.
    """
    raw = Path(path).read_bytes() if Path(path).exists() else None
    if raw is None:
        raise StorageError(f"{path}: no such file")
    marker = b"\nBINARY\n"
    cut = raw.find(marker)
    if cut < 0:
        raise StorageError(f"{path}: missing BINARY marker")
    text = raw[:cut].decode("utf-8")
    blob = raw[cut + len(marker) :]
    lines = text.splitlines()
    if not lines:
        raise StorageError(f"{path}:1: empty header")
    _check_header(lines[0], "ckpt", path)
    meta: dict = {"nets": {}}
    net_order = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key in ("stage", "config", "created_at"):
            meta[key] = parts[1] if len(parts) > 1 else ""
        elif key == "seed":
            meta["seed"] = int(parts[1])
        elif key == "metrics":
            meta["metrics"] = json.loads(line.split(" ", 1)[1])
        elif key == "net":
            dims = [int(d) for d in parts[2:]]
            meta["nets"][parts[1]] = dims
            net_order.append(parts[1])
        elif key == "params":
            meta["params"] = int(parts[1])
        else:
            raise StorageError(f"{path}:{ln}: unknown checkpoint field {key!r}")
    if "policy" not in meta["nets"]:
        raise StorageError(f"{path}: checkpoint has no policy net")
    if len(blob) != meta.get("params", -1) * 4:
        raise StorageError(f"{path}: parameter block size mismatch")
    flat = np.frombuffer(blob, dtype="<f4")

    pol_dims = meta["nets"]["policy"]
    policy = PolicyModel(pol_dims[0], cfg, seed=0)
    if policy.net.dims != pol_dims:
        raise StorageError(
            f"{path}: policy shape {pol_dims} incompatible with config {policy.net.dims}"
        )
    offset = _assign_params(policy.net, flat, 0)
    values = None
    if "q" in meta["nets"]:
        q_dims = meta["nets"]["q"]
        v_dims = meta["nets"]["v"]
        values = ValueNets.build(v_dims[0], q_dims[0] - v_dims[0], cfg, seed=0)
        for name in net_order:
            if name == "policy":
                continue
            net = {"q": values.q, "q_target": values.q_target, "v": values.v}[name]
            if net.dims != meta["nets"][name]:
                raise StorageError(f"{path}: {name} shape mismatch")
            offset = _assign_params(net, flat, offset)
    if offset != len(flat):
        raise StorageError(f"{path}: trailing parameter data")
    return policy, values, meta


# -- reports ------------------------------------------------------------------


def save_report(path, report: MetricReport) -> None:
    out = [_header("report")]
    out.append("M " + _jdump({"config_digest": report.config_digest, "seeds": _py(report.seeds)}))
    for r in report.results:
        out.append(
            "R "
            + _jdump(
                {
                    "scene_ref": r.scene_ref,
                    "success": bool(r.success),
                    "agent_path_length": float(r.agent_path_length),
                    "shortest_path_length": float(r.shortest_path_length),
                    "collision_steps": int(r.collision_steps),
                    "social_violation_steps": int(r.social_violation_steps),
                    "completed_route": float(r.completed_route),
                    "total_route": float(r.total_route),
                    "terminal": r.terminal,
                }
            )
        )
    out.append("A " + _jdump(_py(report.aggregate())))
    _atomic_write(path, ("\n".join(out) + "\n").encode())


def load_report(path) -> MetricReport:
    lines = _read_lines(path, "report")
    meta = {"config_digest": "", "seeds": []}
    rows = []
    agg = None
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tag, _, body = line.partition(" ")
        try:
            d = json.loads(body)
        except json.JSONDecodeError as e:
            raise StorageError(f"{path}:{ln}: bad report line ({e.msg})") from None
        if tag == "M":
            meta = d
        elif tag == "R":
            rows.append(EpisodeResult(**d))
        elif tag == "A":
            agg = d
        else:
            raise StorageError(f"{path}:{ln}: unknown report tag {tag!r}")
    report = make_report(rows, config_digest=meta["config_digest"], seeds=meta["seeds"])
    if agg is not None:
        fresh = report.aggregate()
        for k, v in agg.items():
            if abs(fresh.get(k, np.nan) - v) > 1e-9:
                raise StorageError(f"{path}: stored aggregate {k} does not match rows")
    return report


# -- config -------------------------------------------------------------------


def save_config(path, cfg: Config) -> None:
    _atomic_write(path, (_header("config") + "\n" + dump_config(cfg) + "\n").encode())


def load_config_file(path, base: Config | None = None) -> Config:
    """Read a config file; the version line is optional so plain
    ``section.field=value`` override files work unchanged."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if lines and lines[0].startswith("curbnav-config"):
        _check_header(lines[0], "config", path)
        lines = lines[1:]
    return apply_overrides(base or Config(), lines)


# -- external trace import ----------------------------------------------------


def import_trace(path, frame: str = "xy") -> np.ndarray:
    """Parse an external trace file into a raw polyline ready for lifting.

    ``frame='xy'`` expects ``x y [t]`` per line (t ignored); ``frame='latlon'``
    expects ``lat lon`` in degrees, projected equirectangularly about the
    first point so short traces keep their metric shape.
    """
    if frame not in ("xy", "latlon"):
        raise ValueError(f"frame must be 'xy' or 'latlon', got {frame!r}")
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise StorageError(f"{path}: no such file") from None
    rows = []
    for ln, line in enumerate(lines, start=1):
        txt = line.strip()
        if not txt or txt.startswith("#"):
            continue
        parts = txt.split()
        if frame == "xy" and len(parts) not in (2, 3):
            raise StorageError(f"{path}:{ln}: expected 'x y [t]', got {line!r}")
        if frame == "latlon" and len(parts) != 2:
            raise StorageError(f"{path}:{ln}: expected 'lat lon', got {line!r}")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise StorageError(f"{path}:{ln}: bad number in {line!r}") from None
    if len(rows) < 2:
        raise StorageError(f"{path}: need at least 2 points, got {len(rows)}")
    if frame == "xy":
        return np.array(rows, dtype=np.float64)
    lat0, lon0 = rows[0]
    lat0_r = np.radians(lat0)
    pts = [
        (
            _EARTH_RADIUS_M * np.cos(lat0_r) * np.radians(lon - lon0),
            _EARTH_RADIUS_M * np.radians(lat - lat0),
        )
        for lat, lon in rows
    ]
    return np.array(pts, dtype=np.float64)
