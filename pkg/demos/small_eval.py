"""A small Monte-Carlo comparison.

Twenty seeded start/goal pairs in the cluttered room (boxes, a ball at
0.7 m and a step) for a person and a small robot. The full-size run is
``gpdfnav eval --preset cluttered --system human,roomba --out report/``.
"""

from gpdfnav import cloud, harness

labelled = cloud.synth_scene(cloud.preset_spec("cluttered"))
report = harness.monte_carlo_eval(labelled, systems=["human", "roomba"], n_trials=20, seed=0)
print(report.to_csv())
print("collision_free_rate uses the planar obstacle distance; collision_free_3d_rate")
print("checks the full cylinder, so a path that passes over an obstacle is clear there.")
