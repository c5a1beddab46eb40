"""Distance fields from surface samples.

Fit a GP distance field to points sampled on a sphere, then compare it with
the exact distance and with a brute-force nearest-neighbour search.
"""

import numpy as np
from scipy.spatial import cKDTree

from gpdfnav import gpdf

# Points on a sphere of radius 0.7 m, about 4 cm apart.
n = 1200
i = np.arange(n) + 0.5
phi = np.arccos(1 - 2 * i / n)
th = np.pi * (1 + 5**0.5) * i
R = 0.7
pts = R * np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])

model = gpdf.fit(pts, gpdf.KernelParams(lengthscale=0.08))
print(f"fitted {model.n} points, lengthscale {model.params.lengthscale} m, cap {model.d_max:.2f} m")

# Walk outwards along one ray: the field tracks the true distance R - |q|.
ray = np.array([1.0, 2.0, 2.0]) / 3.0
print("\n  |q|   true    field")
for r in (0.72, 0.75, 0.8, 0.9, 1.0, 1.2):
    print(f"  {r:.2f}  {r - R:.3f}   {gpdf.infer_distance(model, r * ray):.3f}")

# Random queries within two lengthscales of the surface, outside the ball.
rng = np.random.default_rng(0)
q = rng.normal(size=(2000, 3))
q = q / np.linalg.norm(q, axis=1, keepdims=True) * rng.uniform(R + 0.02, R + 0.16, (2000, 1))
d_nn = cKDTree(pts).query(q)[0]
err = np.abs(gpdf.distances(model, q) - d_nn)
print(f"\nvs nearest neighbour on {len(q)} queries: mean {err.mean():.4f} m, max {err.max():.4f} m")

# The gradient points away from the surface with unit length.
r = gpdf.infer_distance_gradient(model, 0.9 * ray)
print(f"gradient at 0.9 m along the ray: {np.round(r.gradient, 3)} (ray {np.round(ray, 3)})")
