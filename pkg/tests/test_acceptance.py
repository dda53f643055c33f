"""End-to-end gates, one test per guarantee the package makes.

Every check here compares production output against an independently
written oracle (scalar scans, marching, bisection, exhaustive pair loops,
tabular sweeps) or against an exact stated value. The conftest summary
hook prints one verdict line per gate at the end of the run.

Gates 5 and 6 consume the session-scoped trained pipeline and are the
expensive part of a cold run; everything else is self-contained.
"""

import asyncio
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from curbnav import storage
from curbnav.bench import net_policy_factory, run_benchmark
from curbnav.cli import main as cli_main
from curbnav.config import Config, SimParams
from curbnav.engine import check_collision, init_state, ray_angles, raycast, replay_controls
from curbnav.expert import run_expert
from curbnav.geom import Pose2, arc_length, cumulative_arc, point_at_arc, resample, self_intersects
from curbnav.models import PolicyModel, q_forward, v_forward
from curbnav.nn import Adam
from curbnav.records import episode_event_log
from curbnav.route import HtlParams, detect_corners, encode_roadbook, sg_smooth
from curbnav.scenes import KINDS, generate_scene
from curbnav.training import (
    build_train_state,
    expectile_loss,
    iql_update,
    reward,
    sft_update,
)
from oracles import (
    GradTap,
    TOY_ACTIONS,
    assert_episodes_equal,
    at_arc_oracle,
    build_bent_path,
    collision_oracle,
    corner_scan_oracle,
    corridor_scene,
    expectile_oracle,
    fd_grad,
    free_depth_oracle,
    random_episode,
    rel_err,
    rl_batch,
    self_intersects_oracle,
    tap_flat,
    tapped_iql,
    tiny_cfg,
    toy_mdp,
    toy_mdp_batch,
    value_iteration,
    walk,
)
from teleop_client import drive_episode, free_port, running_server

GRAD_RTOL = 1e-4


# -- gate 1: the scalar reward is exactly its definition ----------------------


def test_a1_reward_exactness():
    assert reward((0.1, 0, 0)) == 0.05
    assert reward((0.0, 1, 1)) == -2.0


# -- gate 2: route geometry against scan oracles ------------------------------


def test_a2_route_geometry():
    rng = np.random.default_rng(20240401)

    # resampling puts point k at arc position k*d on the source (+-1e-6)
    for _ in range(100):
        poly = walk(rng, int(rng.integers(2, 30)))
        d = float(rng.uniform(0.05, 2.0))
        out = resample(poly, d)
        for k, q in enumerate(out[:-1]):
            want = at_arc_oracle(poly, k * d)
            assert np.abs(q - want).max() <= 1e-6, f"resample point {k} drifted"
        assert np.array_equal(out[-1], poly[-1])

    # corner detection against a scalar chord-angle scan: same count on 200
    # random piecewise-linear paths, each position within 1 m of arc length
    params = HtlParams()
    for _ in range(200):
        n_bends = int(rng.integers(1, 5))
        sharp = rng.uniform(0.55, 1.4, size=n_bends) * rng.choice([-1, 1], size=n_bends)
        gentle = rng.uniform(-0.2, 0.2, size=n_bends)
        bends = np.where(rng.random(n_bends) < 0.35, gentle, sharp)
        poly, _ = build_bent_path(bends, leg_len=float(rng.uniform(8.0, 15.0)))
        got = detect_corners(poly, params)
        want_arcs = corner_scan_oracle(poly, params)
        assert len(got) == len(want_arcs), f"corner count {len(got)} vs scan {len(want_arcs)}"
        cum = cumulative_arc(poly)
        for idx, arc in zip(got, want_arcs):
            assert abs(cum[idx] - arc) < 1.0

    # smoothing reproduces polynomial trajectories of degree <= 3 to 1e-9
    for _ in range(50):
        t = np.linspace(0.0, float(rng.uniform(2.0, 6.0)), int(rng.integers(20, 80)))
        deg = int(rng.integers(0, 4))
        coef = rng.normal(size=(2, 4))
        coef[:, deg + 1 :] = 0.0
        poly = np.stack([np.polyval(c[::-1], t) for c in coef], axis=1)
        out = sg_smooth(poly, window=9, order=3)
        assert np.abs(out - poly).max() < 1e-9

    # self-intersection decisions equal the quadratic all-pairs oracle
    for _ in range(10_000):
        poly = walk(rng, int(rng.integers(4, 16)), step_scale=float(rng.uniform(0.3, 1.0)))
        assert self_intersects(poly) == self_intersects_oracle(poly)


# -- gate 3: simulator against exhaustive / marching oracles ------------------


def test_a3_simulator_oracles(tmp_path):
    params = SimParams()
    rng = np.random.default_rng(77)

    # 10k random configurations: disk-vs-scene collision equals shapely
    # distance checks, configuration by configuration
    for _ in range(10_000):
        circles = [(*rng.uniform(-5, 5, 2), rng.uniform(0.2, 1.5)) for _ in range(rng.integers(0, 4))]
        lo = rng.uniform(-5, 4, (rng.integers(0, 3), 2))
        boxes = [(x, y, x + rng.uniform(0.2, 2), y + rng.uniform(0.2, 2)) for x, y in lo]
        peds = rng.uniform(-5, 5, (rng.integers(0, 4), 2))
        scene = corridor_scene(circles=circles, boxes=boxes)
        point = rng.uniform(-5, 5, 2)
        assert check_collision(point, scene, list(peds), params) == collision_oracle(
            point, scene, list(peds), params
        )

    # analytic ray depths within 2e-3 of a 1 mm march-and-bisect oracle
    for seed, kind in zip((3, 4, 5, 6, 7), KINDS):
        scene = generate_scene(seed, kind)
        state = init_state(scene, params)
        ped_pos = [p.pos for p in state.pedestrians]
        total = arc_length(scene.gt_route)
        for frac in (0.12, 0.45, 0.8):
            pos = point_at_arc(scene.gt_route, np.array([frac * total]))[0]
            pose = Pose2(pos[0], pos[1], float(rng.uniform(-np.pi, np.pi)))
            angles = ray_angles(pose, params)[::4]
            depths = raycast(pose.xy, angles, scene, ped_pos, params.ray_max_range, params.pedestrian_radius)
            for ang, got in zip(angles, depths):
                want = free_depth_oracle(
                    pose.xy, ang, scene, ped_pos, params.ray_max_range, params.pedestrian_radius
                )
                assert abs(got - want) <= 2e-3, f"ray at {ang:.3f} in {scene.ref}: {got} vs {want}"

    # 100 recorded episodes: save, load, re-simulate the control stream,
    # demand the identical event log
    cfg = Config()
    noise = (0.0, 0.3, 0.6)
    n = 0
    for i in range(20):
        scene = generate_scene(300 + i, KINDS[i % len(KINDS)])
        for j in range(5):
            k = 5 * i + j
            ep = run_expert(scene, cfg, seed=400 + k, noise_level=noise[k % 3], episode_id=f"rp-{k:03d}")
            path = tmp_path / f"{ep.episode_id}.ep"
            storage.save_episode(path, ep)
            loaded = storage.load_episode(path)
            controls = [c for s in loaded.steps for c in s.controls]
            replayed = [(e.tick, e.kind) for e in replay_controls(init_state(scene, cfg.sim), scene, controls, cfg.sim)]
            assert replayed == episode_event_log(loaded), f"{ep.episode_id} diverged"
            n += 1
    assert n == 100


# -- gate 4: learning numerics ------------------------------------------------


def test_a4_learning_numerics():
    # (a) analytic gradients vs central differences, all five losses
    cfg = tiny_cfg()
    policy = PolicyModel(7, cfg, seed=2)
    rng = np.random.default_rng(5)
    feats = rng.normal(size=(16, 7))
    targets = rng.uniform(-2.0, 2.0, size=(16, cfg.train.action_dim))
    tap = GradTap()
    sft_update(policy, tap, feats, targets)

    def sft_loss(flat):
        dup = policy.net.copy()
        dup.set_flat(flat)
        o, _ = dup.forward(feats)
        return float(np.mean((o - targets) ** 2))

    assert rel_err(tap_flat(policy.net, tap), fd_grad(sft_loss, policy.net.flat())) < GRAD_RTOL

    cfg, batch, ts = tapped_iql()
    tau = cfg.train.expectile
    _, emb_s, _ = ts.policy.forward(batch["s"])
    qt, _ = q_forward(ts.values.q_target, emb_s, batch["a"])
    v_s, _ = v_forward(ts.values.v, emb_s)
    assert np.abs(qt - v_s).min() > 1e-3  # keep residuals clear of the kink

    def v_loss(flat):
        dup = ts.values.v.copy()
        dup.set_flat(flat)
        v, _ = v_forward(dup, emb_s)
        u = qt - v
        return float(np.mean(np.abs(tau - (u < 0.0)) * u * u))

    assert rel_err(tap_flat(ts.values.v, ts.opt_v), fd_grad(v_loss, ts.values.v.flat())) < GRAD_RTOL

    emb_s2 = ts.policy.embed(batch["s2"])
    v_s2, _ = v_forward(ts.values.v, emb_s2)
    y = batch["r"] + cfg.train.gamma * (1.0 - batch["done"]) * v_s2

    def q_loss(flat):
        dup = ts.values.q.copy()
        dup.set_flat(flat)
        q_sa, _ = q_forward(dup, emb_s, batch["a"])
        return float(np.mean((q_sa - y) ** 2))

    assert rel_err(tap_flat(ts.values.q, ts.opt_q), fd_grad(q_loss, ts.values.q.flat())) < GRAD_RTOL

    q_sa, _ = q_forward(ts.values.q, emb_s, batch["a"])
    wts = np.minimum(np.exp(cfg.train.beta * (q_sa - v_s)), cfg.train.adv_clip)

    def awr_loss(flat):
        dup = ts.policy.net.copy()
        dup.set_flat(flat)
        out, _ = dup.forward(batch["s"])
        err = out - batch["a"]
        return float(np.mean(wts * np.mean(err * err, axis=1)))

    assert rel_err(tap_flat(ts.policy.net, ts.opt_pi), fd_grad(awr_loss, ts.policy.net.flat())) < GRAD_RTOL

    # the raw asymmetric loss itself: d/dm of mean_w(u)u^2 with u = q - m
    q_samples = np.random.default_rng(9).normal(size=64) * 2.0
    for m in (-0.7, 0.1, 1.3):
        u = q_samples - m
        analytic = float(np.mean(np.abs(0.7 - (u < 0.0)) * (-2.0) * u))
        numeric = fd_grad(lambda x: expectile_loss(q_samples - x[0], 0.7), np.array([m]))[0]
        assert rel_err(np.array([analytic]), np.array([numeric])) < GRAD_RTOL

    # (b) value regression converges to the 0.7-expectile of fixed Q samples
    cfg = tiny_cfg(lr=3e-3, expectile=0.7)
    ts = build_train_state(4, cfg, seed=5)
    ts.opt_pi = Adam(ts.policy.net.params(), lr=0.0)
    ts.opt_q = Adam(ts.values.q.params(), lr=0.0)
    rng = np.random.default_rng(17)
    feat = np.tile(rng.normal(size=4), (256, 1))
    batch = {
        "s": feat,
        "a": rng.uniform(-3.0, 3.0, size=(256, cfg.train.action_dim)),
        "r": np.zeros(256),
        "s2": feat,
        "done": np.ones(256),
    }
    emb = ts.policy.embed(feat)
    qt, _ = q_forward(ts.values.q_target, emb, batch["a"])
    for _ in range(3000):
        iql_update(ts, batch, cfg)
    v_final, _ = v_forward(ts.values.v, emb)
    assert abs(float(v_final.mean()) - expectile_oracle(qt, 0.7)) < 1e-2

    # (c) at beta=0 one offline-RL step equals one cloning step
    cfg = tiny_cfg(beta=0.0)
    batch = rl_batch(cfg)
    a_side = build_train_state(7, cfg, seed=9)
    b_side = build_train_state(7, cfg, seed=9)
    sft_update(a_side.policy, a_side.opt_pi, batch["s"], batch["a"])
    iql_update(b_side, batch, cfg)
    assert np.abs(a_side.policy.net.flat() - b_side.policy.net.flat()).max() < 1e-6

    # (d) on the two-state MDP with majority-suboptimal data, the learned
    # policy's nearest-action argmax matches tabular value iteration
    T, R = toy_mdp()
    gamma = 0.9
    best = value_iteration(T, R, gamma).argmax(axis=1)
    cfg = tiny_cfg(
        n_waypoints=1, hidden=(32, 32), value_hidden=(32, 32), gamma=gamma, lr=3e-3, target_copy_every=200
    )
    ts = build_train_state(2, cfg, seed=0)
    batch = toy_mdp_batch(T, R)
    for _ in range(4000):
        iql_update(ts, batch, cfg)
    pred, _, _ = ts.policy.forward(np.eye(2))
    picked = [int(np.linalg.norm(TOY_ACTIONS - p, axis=1).argmin()) for p in pred]
    assert picked == best.tolist()


# -- gates 5 and 6: the trained pipeline behaves directionally ----------------


def test_a5_offline_rl_improves_on_cloning(pipeline):
    sft = pipeline.sft_report.aggregate()
    rft = pipeline.rft_report.aggregate()
    assert rft["SR"] >= sft["SR"], f"SR fell: {sft['SR']:.3f} -> {rft['SR']:.3f}"
    assert rft["CC"] <= sft["CC"] * 1.05 + 1e-12, f"CC grew: {sft['CC']:.2f} -> {rft['CC']:.2f}"


C6_SCENE_SEED = 21
C6_OFFSET = 10.0


def test_a6_lifted_conditioning_survives_route_offset(pipeline):
    """Shift the conditioning route 10 m off the sidewalk: the policy trained
    on lifted (noisy) routes should keep making progress along the real
    route; the policy trained on clean routes follows the shift off the
    walkable surface. Mean route completion over 10 jittered trials must
    differ by at least 20 percentage points."""
    scene = generate_scene(C6_SCENE_SEED, "C")
    cfg = pipeline.cfg
    rc = {}
    for name, policy in (("lifted", pipeline.sft), ("clean", pipeline.sft_plain)):
        rep = run_benchmark(
            net_policy_factory(policy), [scene] * 10, cfg, seed=1, route_offset=C6_OFFSET, jitter=True
        )
        rc[name] = rep.aggregate()["RC"]
    assert rc["lifted"] - rc["clean"] >= 0.20, f"RC gap {rc['lifted']:.3f} - {rc['clean']:.3f} < 0.20"


# -- gate 7: roadbook slicing is exact on the canonical straight route --------


def test_a7_roadbook_exactness():
    route = np.array([[0.0, 0.0], [100.0, 0.0]])
    rb = encode_roadbook(route, Pose2(0.0, 0.0, 0.0), 0.0)
    want = np.column_stack([2.0 * np.arange(1, 21), np.zeros(20)])
    assert rb.waypoints.shape == (20, 2)
    assert np.array_equal(rb.waypoints, want)
    assert rb.turn_cue.direction == "straight-to-goal"
    assert rb.turn_cue.distance == 100.0


# -- gate 8: CLI determinism and record persistence ---------------------------

FAST_OVERRIDES = """\
train.sft_epochs=3
train.rft_steps=20
train.rft_warmup=5
train.hidden=32,32
train.value_hidden=16,16
train.batch_size=64
"""


def _run_cli(argv):
    rc = cli_main(argv)
    assert rc == 0, f"curbnav {' '.join(argv)} exited {rc}"


def _chain(root: Path, cfg_file: Path, trace: Path):
    """One full pass over every CLI command, artifacts under ``root``."""
    scenes, data, ckpt = root / "scenes", root / "data", root / "ckpt"
    _run_cli(["gen-scenes", "--kind", "mix", "--count", "2", "--seed", "7", "--out", str(scenes)])
    _run_cli(
        ["collect-expert", "--scenes", str(scenes), "--out", str(data), "--per-scene", "2",
         "--noise", "0,0.3", "--seed", "3", "--config", str(cfg_file)]
    )
    _run_cli(["lift", "--trace", str(trace), "--out", str(root / "lifted.route"), "--seed", "5"])
    _run_cli(
        ["train-sft", "--dataset", str(data / "dataset.manifest"), "--out", str(ckpt),
         "--seed", "11", "--config", str(cfg_file)]
    )
    _run_cli(
        ["train-rft", "--dataset", str(data / "dataset.manifest"), "--init", str(ckpt / "sft.ckpt"),
         "--out", str(ckpt), "--seed", "11", "--config", str(cfg_file)]
    )
    _run_cli(
        ["eval", "--checkpoint", str(ckpt / "rft.ckpt"), "--scenes", str(scenes),
         "--out", str(root / "eval.report"), "--seed", "2", "--config", str(cfg_file)]
    )
    ep = sorted(data.glob("*.ep"))[0]
    _run_cli(["replay", "--episode", str(ep), "--scenes", str(scenes), "--config", str(cfg_file)])


def _teleop_cli_run(out_dir: Path, scene_file: Path):
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-c", "from curbnav.cli import main; import sys; sys.exit(main(sys.argv[1:]))",
         "teleop-serve", "--scene", str(scene_file), "--port", str(port), "--out", str(out_dir),
         "--lockstep", "--seed", "0"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.monotonic() + 10.0
        last = None
        while time.monotonic() < deadline:
            try:
                asyncio.run(drive_episode(port))
                break
            except OSError as e:  # server socket not up yet
                last = e
                time.sleep(0.1)
        else:
            raise AssertionError(f"teleop server never came up: {last}")
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_a8_cli_determinism_and_persistence(tmp_path):
    cfg_file = tmp_path / "fast.cfg"
    cfg_file.write_text(FAST_OVERRIDES)
    trace = tmp_path / "trace.txt"
    rng = np.random.default_rng(1)
    pts = np.cumsum(rng.uniform(0.3, 0.9, size=(60, 2)), axis=0)
    trace.write_text("\n".join(f"{x:.6f} {y:.6f}" for x, y in pts))

    runs = []
    for label in ("a", "b"):
        root = tmp_path / label
        _chain(root, cfg_file, trace)
        runs.append(_tree_bytes(root))
    assert runs[0].keys() == runs[1].keys()
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], f"{name} differs between identical runs"

    # the teleop server, driven by the same scripted client, records the
    # same bytes too
    scene_file = sorted((tmp_path / "a" / "scenes").glob("*.scene"))[0]
    tele = []
    for label in ("ta", "tb"):
        out = tmp_path / label
        out.mkdir()
        _teleop_cli_run(out, scene_file)
        tele.append(_tree_bytes(out))
    assert tele[0] and tele[0].keys() == tele[1].keys()
    for name in tele[0]:
        assert tele[0][name] == tele[1][name], f"teleop {name} differs between identical runs"

    # 1000-episode fuzz: the episode format round-trips loss-free
    for seed in range(1000):
        ep = random_episode(seed)
        path = tmp_path / "fuzz.ep"
        storage.save_episode(path, ep)
        assert_episodes_equal(storage.load_episode(path), ep)


# -- gate 9: a scripted console session, replayed and annotated ---------------


def test_a9_console_loop(tmp_path):
    cfg = Config()
    scene = generate_scene(11, "straight")
    scene_file = tmp_path / f"{scene.ref}.scene"
    storage.save_scene(scene_file, scene)

    async def run(out_dir, annotate_at=None):
        async with running_server(scene, cfg, out_dir) as port:
            return await drive_episode(port, annotate_at=annotate_at)

    clean_dir, marked_dir = tmp_path / "clean", tmp_path / "marked"
    clean_dir.mkdir()
    marked_dir.mkdir()

    ep_id, terminal = asyncio.run(run(clean_dir))
    assert terminal == "success"
    clean = storage.load_episode(clean_dir / f"{ep_id}.ep")

    # the recorded episode re-simulates to the identical event log
    rc = cli_main(["replay", "--episode", str(clean_dir / f"{ep_id}.ep"), "--scene", str(scene_file)])
    assert rc == 0

    # annotate a tick inside a collision-free step: after reload, that step's
    # reward moves by exactly -1.0 and no other step changes
    free_steps = [s for s in clean.steps[2:-1] if s.reward_terms.collision == 0]
    assert free_steps, "no collision-free step to annotate"
    target = free_steps[0]
    t = target.tick + 1  # first tick covered by the step
    ep_id2, _ = asyncio.run(run(marked_dir, annotate_at=t))
    marked = storage.load_episode(marked_dir / f"{ep_id2}.ep")

    assert len(clean.steps) == len(marked.steps)
    for s_clean, s_marked in zip(clean.steps, marked.steps):
        delta = reward(s_marked.reward_terms) - reward(s_clean.reward_terms)
        assert delta == (-1.0 if s_clean.tick == target.tick else 0.0)
