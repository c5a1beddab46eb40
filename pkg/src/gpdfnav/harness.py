"""Monte-Carlo evaluation of planners: collision-free and feasibility rates.

Planner ids:

``ours``
    A* over the free-cell graph, lifted to follow the ground, refined with the
    dual-field objective.
``astar_offset`` / ``prm_offset``
    2D plan lifted to a constant height h_r above the ground under the start.
``chomp_single_gpdf``
    The A* seed lifted the same way, refined by vanilla CHOMP on a single 3D
    field over all points (see :class:`optimizer.SingleFieldObjective`).
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import cloud, freespace, optimizer
from .optimizer import ChompConfig, Trajectory
from .scene import SceneConfig, SceneModel, build_scene, get_system

PLANNERS = ("ours", "astar_offset", "prm_offset", "chomp_single_gpdf")


class NoFreeSpaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    chomp: ChompConfig = field(default_factory=ChompConfig)
    prm_samples: int = 300
    prm_neighbors: int = 10
    prm_clearance: float = 0.0


@dataclass
class PlanOutcome:
    planner: str
    trajectory: Trajectory | None
    failure: str | None = None
    failure_kind: str | None = None  # "blocked", "disconnected" or "error"
    converged: bool = True
    iterations: int = 0
    runtime: float = 0.0
    cost_history: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.trajectory is not None


def _as_array(traj):
    return traj.waypoints if isinstance(traj, Trajectory) else np.asarray(traj, float).reshape(-1, 3)


def check_collision_free(traj, scene: SceneModel, system=None):
    """Every waypoint at planar obstacle distance >= system radius."""
    system = system or scene.system
    X = _as_array(traj)
    d = scene.obstacle_distance(X)
    bad = np.flatnonzero(d < system.radius)
    return len(bad) == 0, [(int(i), float(d[i] - system.radius)) for i in bad]


def check_collision_free_3d(traj, scene: SceneModel, system=None):
    """Supplementary check: no non-ground point inside the cylinder under any waypoint.

    The cylinder spans [z - h_r, z] with the system radius, so a waypoint
    that passes above an obstacle is not a collision here, unlike in
    :func:`check_collision_free`.
    """
    system = system or scene.system
    X = _as_array(traj)
    pts = scene.nonground_points
    if len(pts) == 0:
        return True, []
    from scipy.spatial import cKDTree

    tree = cKDTree(pts[:, :2])
    bad = []
    for i, idx in enumerate(tree.query_ball_point(X[:, :2], system.radius)):
        z = pts[idx, 2]
        n = int(np.count_nonzero((z >= X[i, 2] - system.height) & (z <= X[i, 2])))
        if n:
            bad.append((i, n))
    return len(bad) == 0, bad


def check_feasible(traj, scene: SceneModel, system=None, margin: float = 0.10):
    """Every waypoint's ground distance within (1 +/- margin) h_r."""
    system = system or scene.system
    X = _as_array(traj)
    d = scene.ground_distance(X)
    lo = (1.0 - margin) * system.height
    hi = (1.0 + margin) * system.height
    # tiny slack so that a waypoint exactly on the band edge passes
    tol = 1e-12 * system.height
    bad = np.flatnonzero((d < lo - tol) | (d > hi + tol))
    return len(bad) == 0, [(int(i), float(d[i] - system.height)) for i in bad]


def avg_distances(traj, scene: SceneModel):
    """Mean ground and obstacle distance over waypoints; obstacle is None if X_o is empty."""
    X = _as_array(traj)
    if len(X) == 0:
        raise ValueError("empty trajectory")
    g = float(np.mean(scene.ground_distance(X)))
    if scene.obstacle_field is None:
        return g, None
    return g, float(np.mean(scene.obstacle_distance(X)))


def sample_free_start_goal(scene: SceneModel, system=None, rng=None, max_attempts: int = 10000):
    """Random start and goal in free leaves with radius clearance, lifted to h_r."""
    system = system or scene.system
    rng = np.random.default_rng(rng)
    x0, y0, x1, y1 = scene.bounds2
    qt = scene.quadtree
    min_sep = 4 * qt.min_cell
    found = []
    attempts = 0
    batch = 64
    while attempts < max_attempts and len(found) < 2:
        n = min(batch, max_attempts - attempts)
        cand = rng.uniform([x0, y0], [x1, y1], size=(n, 2))
        attempts += n
        free = ~qt.occupied[qt.locate_many(cand)]
        clear = scene.obstacle_distance(cand) >= system.radius
        for p in cand[free & clear]:
            if not found or np.linalg.norm(p - found[0]) >= min_sep:
                found.append(p)
                if len(found) == 2:
                    break
    if len(found) < 2:
        raise NoFreeSpaceError(f"no free start/goal pair found in {max_attempts} attempts")
    xy = np.array(found)
    z = freespace.clearance_height(scene.ground_field, xy, system.height)
    pts = np.column_stack([xy, z])
    return pts[0], pts[1]


def _lift_resample(points2, scene, mode, Q, dt, start=None, goal=None):
    """Resample a 2D polyline to Q points, then lift it."""
    P = np.asarray(points2, float)
    try:
        flat = optimizer.resample_waypoints(np.column_stack([P, np.zeros(len(P))]), Q, dt).waypoints[:, :2]
    except ValueError as exc:
        raise freespace.PlanningError(f"cannot resample the 2D path: {exc}") from None
    X = freespace.lift_path(flat, mode, scene.ground_field, scene.system.height)
    if mode == "follow_ground":
        X[0] = start
        X[-1] = goal
    else:
        X[0, :2] = start[:2]
        X[-1, :2] = goal[:2]
    return Trajectory(X, dt)


def run_planner(planner: str, scene: SceneModel, start, goal, config: PlannerConfig | None = None, seed=0) -> PlanOutcome:
    """Plan with one of :data:`PLANNERS`. Failures are returned, not raised."""
    config = config or PlannerConfig()
    cc = config.chomp
    start = np.asarray(start, float)
    goal = np.asarray(goal, float)
    t0 = time.perf_counter()
    try:
        if planner in ("ours", "astar_offset", "chomp_single_gpdf"):
            path = freespace.astar(scene.graph, start[:2], goal[:2])
            if planner == "astar_offset":
                traj = _lift_resample(path.points, scene, "offset_at_start", cc.Q, cc.dt, start, goal)
                return PlanOutcome(planner, traj, runtime=time.perf_counter() - t0)
            seed_path = freespace.portal_path(scene.graph, path)
            if planner == "ours":
                init = _lift_resample(seed_path.points, scene, "follow_ground", cc.Q, cc.dt, start, goal)
                res = optimizer.optimize(init, scene, cc)
            else:
                init = _lift_resample(seed_path.points, scene, "offset_at_start", cc.Q, cc.dt, start, goal)
                obj = optimizer.SingleFieldObjective(scene.single_field, scene.system, cc)
                res = optimizer.optimize(init, scene, cc, objective=obj)
            return PlanOutcome(
                planner, res.trajectory, converged=res.converged, iterations=res.iterations,
                runtime=time.perf_counter() - t0, cost_history=res.cost_history,
            )
        if planner == "prm_offset":
            path = freespace.prm_plan(
                freespace_points(scene), scene.bounds2, start[:2], goal[:2],
                n_samples=config.prm_samples, k_neighbors=config.prm_neighbors,
                clearance=config.prm_clearance, seed=seed, cell=scene.min_cell,
            )
            traj = _lift_resample(path.points, scene, "offset_at_start", cc.Q, cc.dt, start, goal)
            return PlanOutcome(planner, traj, runtime=time.perf_counter() - t0)
        raise ValueError(f"unknown planner {planner!r}")
    except freespace.BlockedEndpointError as exc:
        kind = "blocked"
        msg = str(exc)
    except freespace.DisconnectedError as exc:
        kind = "disconnected"
        msg = str(exc)
    except (freespace.PlanningError, optimizer.OptimizationError) as exc:
        kind = "error"
        msg = str(exc)
    return PlanOutcome(planner, None, f"{kind}: {msg}", kind, False, runtime=time.perf_counter() - t0)


def freespace_points(scene: SceneModel) -> np.ndarray:
    return scene.obstacle_points[:, :2]


@dataclass
class PlannerStats:
    scene: str
    system: str
    planner: str
    trials: int
    completed: int
    collision_free_rate: float
    feasible_rate: float
    collision_free_3d_rate: float
    avg_dist_ground: float | None
    avg_dist_obstacle: float | None
    mean_runtime: float


@dataclass
class EvalReport:
    rows: list
    trials: list  # per-trial records (dicts)

    CSV_FIELDS = (
        "scene", "system", "planner", "trials", "completed", "collision_free_rate",
        "feasible_rate", "collision_free_3d_rate", "avg_dist_ground", "avg_dist_obstacle",
    )

    def row(self, scene, planner) -> PlannerStats:
        """Row for a scene label (the system name unless labels were given)."""
        for r in self.rows:
            if r.scene == scene and r.planner == planner:
                return r
        raise KeyError((scene, planner))

    def to_csv(self) -> str:
        """Deterministic summary; runtimes are left to the JSON export."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.rows:
            vals = []
            for k in self.CSV_FIELDS:
                v = getattr(r, k)
                vals.append("" if v is None else (f"{v:.6f}" if isinstance(v, float) else v))
            w.writerow(vals)
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows]}

    def trial_lines(self) -> str:
        return "".join(json.dumps(t, sort_keys=True) + "\n" for t in self.trials)

    def write(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv())
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        (out / "trials.jsonl").write_text(self.trial_lines())


def trial_rng(seed: int, system_index: int, trial: int):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(system_index), int(trial)]))


def _run_trial(args):
    scene, label, planners, config, seed, sys_idx, trial = args
    rng = trial_rng(seed, sys_idx, trial)
    records = []
    try:
        start, goal = sample_free_start_goal(scene, scene.system, rng)
    except NoFreeSpaceError as exc:
        for p in planners:
            records.append({"scene": label, "system": scene.system.name, "planner": p, "trial": trial, "seed": seed,
                            "failure": f"sampling: {exc}", "collision_free": False,
                            "collision_free_3d": False, "feasible": False})
        return records
    prm_seed = int(rng.integers(2**63))
    for p in planners:
        out = run_planner(p, scene, start, goal, config, seed=prm_seed)
        rec = {
            "scene": label, "system": scene.system.name, "planner": p, "trial": trial, "seed": seed,
            "start": [round(float(v), 6) for v in start], "goal": [round(float(v), 6) for v in goal],
            "failure": out.failure, "converged": out.converged, "iterations": out.iterations,
            "runtime": out.runtime,
        }
        if out.ok:
            cf, cv = check_collision_free(out.trajectory, scene)
            c3, _ = check_collision_free_3d(out.trajectory, scene)
            fe, fv = check_feasible(out.trajectory, scene)
            g, o = avg_distances(out.trajectory, scene)
            rec.update(collision_free=cf, collision_free_3d=c3, feasible=fe, collision_violations=len(cv),
                       feasibility_violations=len(fv), avg_dist_ground=g, avg_dist_obstacle=o)
        else:
            rec.update(collision_free=False, collision_free_3d=False, feasible=False)
        records.append(rec)
    return records


def _summarise(label, system, planner, recs) -> PlannerStats:
    done = [r for r in recs if r.get("failure") is None and "avg_dist_ground" in r]
    n = len(recs)
    g = [r["avg_dist_ground"] for r in done]
    o = [r["avg_dist_obstacle"] for r in done if r["avg_dist_obstacle"] is not None]
    rt = [r["runtime"] for r in recs if "runtime" in r]
    return PlannerStats(
        scene=label, system=system, planner=planner, trials=n, completed=len(done),
        collision_free_rate=sum(r["collision_free"] for r in recs) / n,
        feasible_rate=sum(r["feasible"] for r in recs) / n,
        collision_free_3d_rate=sum(r["collision_free_3d"] for r in recs) / n,
        avg_dist_ground=float(np.mean(g)) if g else None,
        avg_dist_obstacle=float(np.mean(o)) if o else None,
        mean_runtime=float(np.mean(rt)) if rt else 0.0,
    )


def monte_carlo_eval(scenes, systems=None, planners=PLANNERS, n_trials: int = 100, seed: int = 0,
                     config: PlannerConfig | None = None, scene_config: SceneConfig | None = None,
                     workers: int = 1, labels=None) -> EvalReport:
    """Run ``n_trials`` seeded trials per (system, planner).

    ``scenes`` is a LabelledCloud (one scene is built per system), a single
    SceneModel, or a list of SceneModels. Start/goal pairs depend only on
    (seed, system index, trial), so every planner sees the same endpoints
    and results do not depend on execution order. ``labels`` name the
    scenes in the report (default: the system name).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    config = config or PlannerConfig()
    if isinstance(scenes, cloud.LabelledCloud):
        if not systems:
            raise ValueError("systems are required when passing a point cloud")
        scene_list = [build_scene(scenes, get_system(s), scene_config) for s in systems]
    elif isinstance(scenes, SceneModel):
        scene_list = [scenes]
    else:
        scene_list = list(scenes)
    for p in planners:
        if p not in PLANNERS:
            raise ValueError(f"unknown planner {p!r}")
    labels = list(labels) if labels is not None else [sc.system.name for sc in scene_list]
    if len(labels) != len(scene_list) or len(set(labels)) != len(labels):
        raise ValueError("labels must be unique, one per scene")

    jobs = [
        (sc, labels[i], tuple(planners), config, seed, i, t)
        for i, sc in enumerate(scene_list)
        for t in range(n_trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    records = [r for batch in results for r in batch]
    rows = []
    for sc, label in zip(scene_list, labels):
        for p in planners:
            recs = [r for r in records if r["scene"] == label and r["planner"] == p]
            rows.append(_summarise(label, sc.system.name, p, recs))
    order = {lab: i for i, lab in enumerate(labels)}
    records.sort(key=lambda r: (order[r["scene"]], PLANNERS.index(r["planner"]), r["trial"]))
    return EvalReport(rows, records)
