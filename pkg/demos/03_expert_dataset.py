"""Collecting an expert demonstration dataset, clean and corrupted.

The scripted expert plans on the true scene geometry, so it succeeds almost
always — which makes for a dull RL dataset.  Mixing in noisy variants of the
same episodes gives the offline stage something to be better *than*.

Run:  python demos/03_expert_dataset.py
"""

import tempfile
from pathlib import Path

import numpy as np

from curbnav import Config, generate_scene, run_expert
from curbnav.records import episode_event_log, validate_episode
from curbnav.storage import DatasetManifest, load_dataset, save_episode, save_manifest
from curbnav.training import build_transitions, reward

cfg = Config()
scene = generate_scene(21, "C")

# -- one clean episode -------------------------------------------------------

ep = run_expert(scene, cfg, seed=0, noise_level=0.0, episode_id="demo-clean")
validate_episode(ep)

total = sum(reward(s.reward_terms) for s in ep.steps)
print(f"clean episode on {scene.ref}: {len(ep.steps)} steps, "
      f"terminal '{ep.terminal}', return {total:.2f}")
print(f"  per-step pieces: d_completion in "
      f"[{min(s.reward_terms.d_completion for s in ep.steps):.3f}, "
      f"{max(s.reward_terms.d_completion for s in ep.steps):.3f}], "
      f"collisions {sum(s.reward_terms.collision for s in ep.steps):.0f}, "
      f"deviations {sum(s.reward_terms.deviation for s in ep.steps):.0f}")
print(f"  event log: {episode_event_log(ep) or 'nothing but the terminal'}")

s0 = ep.steps[0]
print(f"  a step carries: obs {s0.observation.shape}, roadbook "
      f"{np.asarray(s0.roadbook.waypoints).shape[0]} waypoints + "
      f"'{s0.roadbook.turn_cue.direction}' cue, "
      f"action ({len(s0.action)},), {len(s0.controls)} low-level controls")

# -- noise degrades it, by design --------------------------------------------

print("\nsame scene, increasing actuation noise:")
for noise in (0.0, 0.3, 0.6):
    rets, fails = [], 0
    for seed in range(8):
        e = run_expert(scene, cfg, seed=seed, noise_level=noise)
        rets.append(sum(reward(s.reward_terms) for s in e.steps))
        fails += e.terminal != "success"
    print(f"  noise {noise:.1f}: mean return {np.mean(rets):6.2f}, "
          f"failures {fails}/8")

# -- a small on-disk dataset -------------------------------------------------

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    names, counts = [], {}
    i = 0
    for kind in ("straight", "L", "C"):
        for noise in (0.0, 0.3, 0.6):
            sc = generate_scene(100 + i, kind)
            e = run_expert(sc, cfg, seed=i, noise_level=noise,
                           episode_id=f"demo-{i:03d}")
            name = f"{e.episode_id}.ep"
            save_episode(root / name, e)
            names.append(name)
            counts[e.terminal] = counts.get(e.terminal, 0) + 1
            i += 1
    save_manifest(root / "dataset.manifest",
                  DatasetManifest(episodes=names, counts=counts, config_digest=""))

    episodes = load_dataset(root / "dataset.manifest")
    print(f"\nwrote {len(names)} episodes + manifest, loaded back "
          f"{len(episodes)}; terminals {counts}")

    # what the learner actually consumes
    trans = build_transitions(episodes, cfg)
    print(f"flattened to {trans['s'].shape[0]} transitions: "
          f"features {trans['s'].shape}, actions {trans['a'].shape}, "
          f"reward/done/next-state to match")
    print(f"mean reward {trans['r'].mean():.3f}, "
          f"done fraction {trans['done'].mean():.3f}")
