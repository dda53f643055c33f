"""Scoring policies over a scene suite, and reading the numbers.

The harness runs one episode per scene per policy, scores each with the
navigation metrics, and folds them into a report you can save, reload, and
diff.  Reports are deterministic given (suite, seed) — the same command
twice gives byte-identical files — which is what makes regression tracking
across code changes trustworthy.

Run:  python demos/05_benchmark.py
"""

import tempfile
from pathlib import Path

from curbnav import Config, generate_scene
from curbnav.bench import expert_policy_factory, random_policy_factory, render_table, run_benchmark
from curbnav.metrics import route_completion, spl
from curbnav.scenes import KINDS
from curbnav.storage import load_report, save_report

cfg = Config()
suite = [generate_scene(700 + i, KINDS[i % len(KINDS)]) for i in range(10)]
print(f"suite: {', '.join(s.ref for s in suite)}\n")

reports = {}
for name, factory in (
    ("expert", expert_policy_factory(0.0)),
    ("expert-noisy", expert_policy_factory(0.6)),
    ("random", random_policy_factory()),
):
    reports[name] = run_benchmark(factory, suite, cfg, seed=3, source="expert" if "expert" in name else "policy")

print(render_table(reports))
print("SR success rate | SPL success weighted by path efficiency | "
      "SNS success blended\nwith social compliance | CC collision ticks per "
      "episode | RC route completion\n")

# per-scene rows for one report
print("per-scene, clean expert:")
for r in reports["expert"].results[:5]:
    print(f"  {r.scene_ref:20s} success={int(r.success)}  spl={spl([r]):.2f}  "
          f"rc={route_completion(r):.2f}  collision ticks={r.collision_steps:.0f}")

# -- determinism -------------------------------------------------------------

again = run_benchmark(expert_policy_factory(0.0), suite, cfg, seed=3, source="expert")
same = render_table({"a": reports["expert"]}) == render_table({"a": again})
print(f"\nsame suite + seed rerun gives an identical table: {same}")

jit = run_benchmark(expert_policy_factory(0.0), suite, cfg, seed=3, source="expert", jitter=True)
print(f"spawn jitter on (seeded): SR {jit.aggregate()['SR']:.2f} -- perturbed "
      f"starts, still reproducible")

# -- reports persist ---------------------------------------------------------

with tempfile.TemporaryDirectory() as tmp:
    p = Path(tmp) / "expert.report"
    save_report(p, reports["expert"])
    back = load_report(p)
    print(f"\nsaved and reloaded report: {len(back.results)} rows, "
          f"aggregate matches: {back.aggregate() == reports['expert'].aggregate()}")
    print(f"(the loader recomputes the aggregate from rows and refuses a "
          f"file where they disagree)")
