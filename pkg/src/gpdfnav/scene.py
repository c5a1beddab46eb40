"""Dual GPDF scene representation.

``build_scene`` runs the representation pipeline: downsample the ground,
fit the 3D ground field, keep the non-ground points within the system
height of the ground, project them to the plane, fit the 2D obstacle field
and build the quadtree with its free-cell graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from functools import cached_property

import numpy as np

from . import cloud, freespace, gpdf


@dataclass(frozen=True)
class SystemModel:
    """Cylindrical ground-based system: height ``height`` and radius ``radius``."""

    name: str
    height: float
    radius: float

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError("system height must be > 0")
        if not self.radius > 0:
            raise ValueError("system radius must be > 0")

    @classmethod
    def from_dimensions(cls, name, height, width, length):
        return cls(name, height, max(width, length) / 2)


# height, width, length in metres
SYSTEM_DIMENSIONS = {
    "roomba": (0.1, 0.34, 0.35),
    "spot": (0.7, 0.19, 1.1),
    "pepper": (1.2, 0.48, 0.42),
    "human": (2.0, 0.5, 0.32),
}

PRESETS = {name: SystemModel.from_dimensions(name, *dims) for name, dims in SYSTEM_DIMENSIONS.items()}


def get_system(spec) -> SystemModel:
    """Resolve a preset name, a ``SystemModel`` or a ``"height,radius"`` string."""
    if isinstance(spec, SystemModel):
        return spec
    if spec in PRESETS:
        return PRESETS[spec]
    try:
        h, r = (float(v) for v in str(spec).split(","))
    except ValueError:
        raise ValueError(f"unknown system {spec!r}; use one of {sorted(PRESETS)} or 'height,radius'") from None
    return SystemModel(f"custom_{h:g}_{r:g}", h, r)


@dataclass(frozen=True)
class SceneConfig:
    ground_voxel: float = 0.15
    obstacle_voxel: float = 0.1
    single_voxel: float = 0.2  # single-field baseline only
    ground_lengthscale: float | None = None
    obstacle_lengthscale: float | None = None
    sigma_f2: float = 1.0
    sigma_o2: float = 1e-4
    d_max_factor: float = gpdf.DEFAULT_D_MAX_FACTOR
    max_train: int = 5000
    min_cell: float | None = None
    max_depth: int = 12

    def params_for(self, points, lengthscale):
        l = lengthscale if lengthscale is not None else gpdf.default_lengthscale(points)
        return gpdf.KernelParams(l, self.sigma_f2, self.sigma_o2)


class SceneError(ValueError):
    pass


@dataclass(eq=False)
class SceneModel:
    ground_field: gpdf.GpdfModel
    obstacle_field: gpdf.GpdfModel | None
    obstacle_points: np.ndarray  # X_o, (k, 3)
    nonground_points: np.ndarray  # downsampled non-ground, for baselines
    quadtree: freespace.Quadtree
    graph: freespace.FreeCellGraph
    system: SystemModel
    bounds: np.ndarray  # (2, 3)
    config: SceneConfig

    @property
    def bounds2(self) -> tuple:
        b = self.bounds
        return (b[0, 0], b[0, 1], b[1, 0], b[1, 1])

    @property
    def min_cell(self) -> float:
        return self.quadtree.min_cell

    def ground_distance(self, points, grad=False):
        pts = np.atleast_2d(np.asarray(points, float))
        if grad:
            return gpdf.distances_and_gradients(self.ground_field, pts)
        return gpdf.distances(self.ground_field, pts)

    def obstacle_distance(self, points, grad=False):
        """Distance to X_o in the plane; +inf with zero gradient when X_o is empty."""
        pts = np.atleast_2d(np.asarray(points, float))[:, :2]
        if self.obstacle_field is None:
            d = np.full(len(pts), np.inf)
            return (d, np.zeros((len(pts), 2))) if grad else d
        if grad:
            return gpdf.distances_and_gradients(self.obstacle_field, pts)
        return gpdf.distances(self.obstacle_field, pts)

    @cached_property
    def single_field(self) -> gpdf.GpdfModel:
        """One 3D GPDF over ground and non-ground points together."""
        pts = np.vstack([self.ground_field.train, self.nonground_points])
        pts, _ = cloud.downsample_to_cap(pts, self.config.single_voxel, self.config.max_train)
        params = self.config.params_for(pts, self.config.ground_lengthscale)
        return gpdf.fit(pts, params, d_max=self.config.d_max_factor * params.lengthscale)


def classify_obstacles(nonground, ground_field: gpdf.GpdfModel, h_r: float) -> np.ndarray:
    """Non-ground points whose ground distance is at most ``h_r``."""
    pts = cloud.as_points(nonground)
    if ground_field.dim != 3:
        raise ValueError("ground field must be 3D")
    if len(pts) == 0:
        return pts
    return pts[gpdf.distances(ground_field, pts) <= h_r]


def project_to_plane(points3) -> np.ndarray:
    pts = cloud.as_points(points3)
    return pts[:, :2].copy()


def quadtree_bounds(bounds) -> tuple:
    """Square root cell anchored at the scene's lower corner.

    Square leaves keep both sides equal; on a rectangular root the short
    side of a leaf can drop below the point spacing and open gaps in
    sampled obstacle outlines.
    """
    b = np.asarray(bounds, float)
    side = float(max(b[1, 0] - b[0, 0], b[1, 1] - b[0, 1]))
    return (b[0, 0], b[0, 1], b[0, 0] + side, b[0, 1] + side)


def build_scene(labelled: cloud.LabelledCloud, system: SystemModel, config: SceneConfig | None = None) -> SceneModel:
    config = config or SceneConfig()
    if len(labelled.ground) == 0:
        raise SceneError("ground set is empty")
    bounds = labelled.bounds

    ground, _ = cloud.downsample_to_cap(labelled.ground, config.ground_voxel, config.max_train)
    if len(ground) < 2 and config.ground_lengthscale is None:
        raise SceneError("need at least two ground points to set the lengthscale")
    gparams = config.params_for(ground, config.ground_lengthscale)
    ground_field = gpdf.fit(ground, gparams, d_max=config.d_max_factor * gparams.lengthscale)

    xo = classify_obstacles(labelled.nonground, ground_field, system.height)
    xo2 = project_to_plane(xo)
    obstacle_field = None
    if len(xo2):
        train2, _ = cloud.downsample_to_cap(xo2, config.obstacle_voxel, config.max_train)
        if len(train2) >= 2 or config.obstacle_lengthscale is not None:
            oparams = config.params_for(train2, config.obstacle_lengthscale)
        else:
            oparams = gpdf.KernelParams(2 * config.obstacle_voxel, config.sigma_f2, config.sigma_o2)
        obstacle_field = gpdf.fit(train2, oparams, d_max=config.d_max_factor * oparams.lengthscale)

    min_cell = config.min_cell if config.min_cell is not None else system.radius
    qt = freespace.build_quadtree(xo2, quadtree_bounds(bounds), min_cell, config.max_depth)
    graph = freespace.build_connectivity_graph(qt)
    nonground_ds = cloud.voxel_downsample(labelled.nonground, config.ground_voxel) if len(labelled.nonground) else np.zeros((0, 3))
    return SceneModel(ground_field, obstacle_field, xo, nonground_ds, qt, graph, system, bounds, config)


def save_scene(scene: SceneModel, path) -> None:
    """Write a scene cache (``.npz``).

    Holds both GPDF models (``ground_*``, ``obstacle_*`` arrays, see
    :func:`gpdf.save_model`), ``obstacle_points`` (X_o), ``nonground_points``,
    ``bounds`` and a JSON ``meta`` entry with the system and scene config.
    The quadtree and graph are rebuilt on load.
    """
    arrays = gpdf.model_arrays(scene.ground_field, "ground_")
    if scene.obstacle_field is not None:
        arrays.update(gpdf.model_arrays(scene.obstacle_field, "obstacle_"))
    meta = {
        "system": asdict(scene.system),
        "config": asdict(scene.config),
        "min_cell": scene.quadtree.min_cell,
        "has_obstacles": scene.obstacle_field is not None,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    arrays["obstacle_points"] = scene.obstacle_points
    arrays["nonground_points"] = scene.nonground_points
    arrays["bounds"] = scene.bounds
    np.savez(path, **arrays)


def load_scene(path) -> SceneModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        ground_field = gpdf.model_from_arrays(data, "ground_")
        obstacle_field = gpdf.model_from_arrays(data, "obstacle_") if meta["has_obstacles"] else None
        xo = np.array(data["obstacle_points"]).reshape(-1, 3)
        ng = np.array(data["nonground_points"]).reshape(-1, 3)
        bounds = np.array(data["bounds"])
    system = SystemModel(**meta["system"])
    config = SceneConfig(**meta["config"])
    qt = freespace.build_quadtree(project_to_plane(xo), quadtree_bounds(bounds), meta["min_cell"], config.max_depth)
    graph = freespace.build_connectivity_graph(qt)
    return SceneModel(ground_field, obstacle_field, xo, ng, qt, graph, system, bounds, config)

