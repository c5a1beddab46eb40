"""Walking onto a step.

A 5 x 3 m room with a 0.35 m platform. A human-height system (2 m) plans from
the floor onto the platform. The 2D baselines fly at a constant height, so
they end up too close to the raised ground; the dual-field planner follows it.
"""

import numpy as np

from gpdfnav import cloud, harness
from gpdfnav.freespace import clearance_height
from gpdfnav.scene import PRESETS, build_scene

labelled = cloud.synth_scene(cloud.preset_spec("step"))
sc = build_scene(labelled, PRESETS["human"])
print(f"ground points {len(labelled.ground)}, non-ground {len(labelled.nonground)}")
print(f"ground field: {sc.ground_field.n} training points, l = {sc.ground_field.params.lengthscale:.3f} m")

xy = np.array([[1.0, 1.5], [3.7, 1.5]])
start, goal = np.column_stack([xy, clearance_height(sc.ground_field, xy, 2.0)])
print(f"start z {start[2]:.3f}, goal z {goal[2]:.3f} (platform is 0.35 m high)\n")

for planner in ("ours", "astar_offset", "prm_offset"):
    out = harness.run_planner(planner, sc, start, goal)
    W = out.trajectory.waypoints
    d_g = sc.ground_distance(W)
    feasible, bad = harness.check_feasible(W, sc)
    print(f"{planner:13s} ground distance {d_g.min():.2f}..{d_g.max():.2f} m, "
          f"feasible {feasible} ({len(bad)} waypoints outside 1.8..2.2 m)")

W = harness.run_planner("ours", sc, start, goal).trajectory.waypoints
print("\nours, every 5th waypoint (x, z):")
for x, _, z in W[::5]:
    print(f"  x {x:.2f}  z {z:.3f}")
