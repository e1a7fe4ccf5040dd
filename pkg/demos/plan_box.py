"""Plan a regrasp for the bundled box scene and check the result.

The box starts lying so that only a side grasp reaches it and must end in a pose that needs
the opposite grasp, so at least one put-down and pick-up is required.

Run: python demos/plan_box.py [seed]
"""
import sys

from regrasp.harness import load_scene
from regrasp.paths import transitions
from regrasp.planner import GuidedPlanner, audit_path

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
scene = load_scene("box")
cfg = scene.config(seed=seed, t_max=60)
result = GuidedPlanner(scene.world, cfg).solve(scene.start, scene.goal)

path = result.path
print(f"seed {seed}: solved in {result.plan_time:.2f} s (table built in {result.prep_time:.3f} s)")
print("node sequence:", " -> ".join(str(tuple(n)) for n in result.node_sequence))
print(f"{len(path.segments)} segments, {transitions(path)} mode transitions")
for seg in path.segments:
    print(f"  {seg.kind:8s} {len(seg.waypoints):4d} waypoints")

problems = audit_path(scene.world, path)
print("audit:", "clean" if not problems else problems)
