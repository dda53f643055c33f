"""From a raw walked trace to a conditioning roadbook.

A recorded walk is noisy, unevenly sampled, and slightly wrong about where
the sidewalk actually is. Lifting turns it into something worth conditioning
on anyway: smooth the jitter out, resample to fixed spacing, find the real
corners, then perturb the segments *between* corners so a policy trained on
these routes never learns to trust them blindly.

Run:  python demos/01_routes_and_roadbooks.py
"""

import numpy as np

from curbnav import Pose2, arc_length, encode_roadbook, generate_scene, render_prompt
from curbnav.config import Config
from curbnav.expert import conditioning_route
from curbnav.geom import cumulative_arc
from curbnav.route import detect_corners, lift, sg_smooth

rng = np.random.default_rng(7)

# -- fake a hand-recorded trace: two straight legs with GPS-grade jitter -----

leg_a = np.linspace([0, 0], [60, 0], 40)
leg_b = np.linspace([60, 0], [60, 45], 30)[1:]
clean = np.vstack([leg_a, leg_b])
trace = clean + rng.normal(0.0, 0.9, size=clean.shape)

print("raw trace:")
print(f"  {len(trace)} points, arc length {arc_length(trace):.1f} m")
print(f"  mean deviation from the true corridor: "
      f"{np.abs(trace - clean).mean():.2f} m")

cfg = Config()
smoothed = sg_smooth(trace, cfg.htl.sg_window, cfg.htl.sg_order)
print(f"\nafter smoothing: mean deviation {np.abs(smoothed - clean).mean():.2f} m")

corners = detect_corners(smoothed, cfg.htl)
arcs = cumulative_arc(smoothed)
print(f"corner detector: {len(corners)} corner(s), at "
      f"{', '.join(f'{arcs[c]:.1f} m' for c in corners)} along the walk "
      f"(the true corner is 60 m in)")

# -- the full lift, twice with different seeds -------------------------------

for seed in (0, 1):
    route = lift(trace, cfg.htl, rng_seed=seed)
    gap = np.abs(route - np.array([60, 0])).min(axis=0)
    print(f"\nlift(seed={seed}): {len(route)} points every ~{cfg.htl.resample_step:.0f} m, "
          f"length {arc_length(route):.1f} m")
    print(f"  endpoints pinned: start {route[0].round(2)}, end {route[-1].round(2)}")

print("\nthe two lifted routes differ between corners (that is the point):")
r0, r1 = lift(trace, cfg.htl, rng_seed=0), lift(trace, cfg.htl, rng_seed=1)
n = min(len(r0), len(r1))
print(f"  max pointwise spread {np.abs(r0[:n] - r1[:n]).max():.2f} m")

# -- roadbooks: what the policy actually sees --------------------------------

scene = generate_scene(11, "L")
# scene routes are sparse polylines; conditioning always goes through the
# densify-and-lift path so the corner detector has vertices to work with
route = conditioning_route(scene, cfg, seed=0, htl=False)
print(f"\nscene {scene.ref}: conditioning route of {arc_length(route):.1f} m, "
      f"{len(route)} points")

for progress, pose in [
    (0.0, scene.spawn),
    (0.0, Pose2(scene.spawn.x, scene.spawn.y, scene.spawn.theta + 0.8)),
]:
    rb = encode_roadbook(route, pose, progress, params=cfg.htl)
    print(f"\nagent at ({pose.x:.1f}, {pose.y:.1f}) heading {pose.theta:.2f} rad:")
    print(f"  first waypoints (egocentric): {rb.waypoints[:3].round(2).tolist()}")
    print(f"  cue: {rb.turn_cue.direction} in {rb.turn_cue.distance:.1f} m")
    print(f"  prompt: {render_prompt(rb)!r}")

print("\nwaypoints are always expressed in the agent's frame, so the same")
print("route reads differently as the agent turns — steering is baked into")
print("the representation, not recovered from coordinates later.")
