"""Passing under a slab.

A horizontal slab hangs 0.5 m above the floor. Which points count as
obstacles depends on the system height: for a 0.1 m robot the slab is
overhead and harmless, for a 2 m person it blocks the way.
"""

import numpy as np

from gpdfnav import cloud, harness
from gpdfnav.freespace import clearance_height
from gpdfnav.scene import PRESETS, build_scene

labelled = cloud.synth_scene(cloud.preset_spec("slab"))
slab = cloud.preset_spec("slab").boxes[0]
on_slab = np.all((labelled.nonground >= np.asarray(slab.lo) - 1e-9) & (labelled.nonground <= np.asarray(slab.hi) + 1e-9), axis=1)

xy = np.array([[0.8, 1.5], [4.2, 1.5]])  # straight through the slab's footprint
for name in ("roomba", "human"):
    sc = build_scene(labelled, PRESETS[name])
    kept = {tuple(p) for p in sc.obstacle_points}
    n_slab = sum(tuple(p) in kept for p in labelled.nonground[on_slab])
    print(f"{name}: {n_slab}/{on_slab.sum()} slab points are obstacles")
    start, goal = np.column_stack([xy, clearance_height(sc.ground_field, xy, sc.system.height)])
    W = harness.run_planner("ours", sc, start, goal).trajectory.waypoints
    under = (np.abs(W[:, 0] - 2.5) < 0.6) & (np.abs(W[:, 1] - 1.5) < 0.5)
    print(f"  planned path: {under.sum()} of {len(W)} waypoints under the slab, "
          f"max lateral offset {np.abs(W[:, 1] - 1.5).max():.2f} m")
