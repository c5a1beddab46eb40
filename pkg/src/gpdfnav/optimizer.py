"""CHOMP-style trajectory refinement with ground and obstacle distance fields.

The discrete objective over waypoints x_1..x_Q with forward velocities
v_i = (x_{i+1} - x_i) / dt, i = 1..Q-1, is

    C = sum_{i<Q} lambda_s * 0.5 * |v_i|^2
      + sum_{i<Q} lambda_o * c_o(d_o(x_i)) * |v_i|
      + sum_{i<=Q} lambda_g * c_g(d_g(x_i))

where d_o is the planar obstacle distance and d_g the 3D ground distance.
Interior waypoints are updated with the covariant step
x <- x - (1/eta) A^-1 grad C, with A the finite-difference smoothness metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from . import gpdf


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Trajectory:
    waypoints: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 3:
            raise ValueError(f"waypoints must be (Q, 3), got {w.shape}")
        if len(w) < 3:
            raise ValueError("a trajectory needs at least 3 waypoints")
        if not np.all(np.isfinite(w)):
            raise ValueError("waypoints must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @property
    def Q(self) -> int:
        return len(self.waypoints)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def times(self) -> np.ndarray:
        return np.arange(self.Q) * self.dt


@dataclass(frozen=True)
class ChompConfig:
    Q: int = 40
    dt: float = 1.0
    lambda_s: float = 0.005
    lambda_o: float = 1.0
    lambda_g: float = 1.0
    epsilon: float | None = None  # default: system radius + 0.1
    eta: float = 4.0
    max_iters: int = 300
    grad_tol: float = 5e-3
    backtrack: float = 0.5
    max_halvings: int = 20

    def __post_init__(self):
        if self.Q < 3:
            raise ValueError("Q must be >= 3")
        if min(self.lambda_s, self.lambda_o, self.lambda_g) < 0:
            raise ValueError("cost weights must be >= 0")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must be in (0, 1)")

    def epsilon_for(self, system) -> float:
        return self.epsilon if self.epsilon is not None else system.radius + 0.1


@dataclass
class OptimResult:
    trajectory: Trajectory
    cost_history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    reason: str = ""


def resample_waypoints(path, Q: int, dt: float = 1.0) -> Trajectory:
    """Q points equally spaced by arc length along a 3D polyline."""
    if Q < 3:
        raise ValueError("Q must be >= 3")
    P = np.asarray(path, dtype=float).reshape(-1, 3)
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    total = seg.sum()
    if len(P) < 2 or not total > 0:
        raise ValueError("path has zero length")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, Q)
    out = np.column_stack([np.interp(targets, s, P[:, k]) for k in range(3)])
    out[0] = P[0]
    out[-1] = P[-1]
    return Trajectory(out, dt)


def obstacle_cost(d, epsilon: float):
    """(d - eps)^2 / (2 eps) inside the clearance band, zero beyond it."""
    d = np.asarray(d, dtype=float)
    c = np.where(d <= epsilon, (d - epsilon) ** 2 / (2.0 * epsilon), 0.0)
    return float(c) if c.ndim == 0 else c


def obstacle_cost_deriv(d, epsilon: float):
    d = np.asarray(d, dtype=float)
    return np.where(d <= epsilon, (d - epsilon) / epsilon, 0.0)


def ground_cost(d_g, h_r: float):
    """(d_g - h_r)^2 / (2 h_r)."""
    d_g = np.asarray(d_g, dtype=float)
    c = (d_g - h_r) ** 2 / (2.0 * h_r)
    return float(c) if c.ndim == 0 else c


def ground_cost_deriv(d_g, h_r: float):
    return (np.asarray(d_g, dtype=float) - h_r) / h_r


def _waypoints(traj):
    return traj.waypoints if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)


def smoothness_cost(traj, dt: float | None = None) -> float:
    X = _waypoints(traj)
    if dt is None:
        dt = traj.dt if isinstance(traj, Trajectory) else 1.0
    v = np.diff(X, axis=0) / dt
    return float(0.5 * np.sum(v * v))


def smoothness_metric(Q: int) -> np.ndarray:
    """A = K^T K for the forward-difference operator K over interior waypoints."""
    if Q < 3:
        raise ValueError("Q must be >= 3")
    n = Q - 2
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def _metric_banded(n):
    ab = np.zeros((2, n))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    return ab


class DualFieldObjective:
    """The ground-constrained objective using the scene's two fields."""

    def __init__(self, scene, config: ChompConfig):
        self.scene = scene
        self.config = config
        self.epsilon = config.epsilon_for(scene.system)
        self.h_r = scene.system.height

    def terms(self, X):
        cfg = self.config
        dX = np.diff(X, axis=0) / cfg.dt
        speed = np.linalg.norm(dX, axis=1)
        d_o = self.scene.obstacle_distance(X[:-1, :2])
        d_g = self.scene.ground_distance(X)
        smooth = 0.5 * float(np.sum(dX * dX))
        obst = float(np.sum(obstacle_cost(d_o, self.epsilon) * speed))
        grnd = float(np.sum(ground_cost(d_g, self.h_r)))
        return smooth, obst, grnd

    def cost(self, X) -> float:
        s, o, g = self.terms(X)
        cfg = self.config
        return cfg.lambda_s * s + cfg.lambda_o * o + cfg.lambda_g * g

    def gradient(self, X) -> np.ndarray:
        return self.cost_and_gradient(X)[1]

    def cost_and_gradient(self, X):
        cfg = self.config
        dt = cfg.dt
        G = np.zeros_like(X)
        v = np.diff(X, axis=0) / dt
        speed = np.linalg.norm(v, axis=1)
        cost = cfg.lambda_s * 0.5 * float(np.sum(v * v))
        # smoothness: d/dx_j sum 0.5|v_i|^2
        G[:-1] -= cfg.lambda_s * v / dt
        G[1:] += cfg.lambda_s * v / dt
        # obstacle: c_o(x_i) |v_i| for i < Q
        if self.scene.obstacle_field is not None:
            d_o, g_o = self.scene.obstacle_distance(X[:-1, :2], grad=True)
            c = obstacle_cost(d_o, self.epsilon)
            cost += cfg.lambda_o * float(np.sum(c * speed))
            if cfg.lambda_o > 0:
                dc = obstacle_cost_deriv(d_o, self.epsilon)
                G[:-1, :2] += cfg.lambda_o * (dc * speed)[:, None] * g_o
                _add_speed_grad(G, cfg.lambda_o * c, v, speed, dt)
        d_g, g_g = self.scene.ground_distance(X, grad=True)
        cost += cfg.lambda_g * float(np.sum(ground_cost(d_g, self.h_r)))
        G += cfg.lambda_g * ground_cost_deriv(d_g, self.h_r)[:, None] * g_g
        G[0] = 0.0
        G[-1] = 0.0
        return cost, G


def _add_speed_grad(G, weights, v, speed, dt):
    """Gradient of sum_i w_i |v_i| with the weights held fixed."""
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(speed[:, None] > 0, v / speed[:, None], 0.0)
    G[:-1] -= weights[:, None] * unit / dt
    G[1:] += weights[:, None] * unit / dt


class SingleFieldObjective:
    """Vanilla CHOMP with one 3D distance field over every scene point.

    The waypoint is the top of the cylinder. The body is split into
    segments no longer than the radius, each represented by a point at its
    midpoint, so the lowest point sits above the ground. Every body point
    pays the obstacle cost; there is no ground term, so the ground itself
    acts as an obstacle.
    """

    def __init__(self, field_model: gpdf.GpdfModel, system, config: ChompConfig):
        self.field = field_model
        self.config = config
        self.epsilon = config.epsilon_for(system)
        n = int(np.ceil(system.height / system.radius))
        self.offsets = (np.arange(n) + 0.5) * system.height / n

    def _body(self, X):
        P = np.repeat(X[:, None, :], len(self.offsets), axis=1)
        P[:, :, 2] -= self.offsets[None, :]
        return P.reshape(-1, 3)

    def cost(self, X) -> float:
        cfg = self.config
        v = np.diff(X, axis=0) / cfg.dt
        speed = np.linalg.norm(v, axis=1)
        d = gpdf.distances(self.field, self._body(X[:-1])).reshape(len(X) - 1, -1)
        c = obstacle_cost(d, self.epsilon).sum(axis=1)
        return cfg.lambda_s * 0.5 * float(np.sum(v * v)) + cfg.lambda_o * float(np.sum(c * speed))

    def gradient(self, X) -> np.ndarray:
        return self.cost_and_gradient(X)[1]

    def cost_and_gradient(self, X):
        cfg = self.config
        dt = cfg.dt
        G = np.zeros_like(X)
        v = np.diff(X, axis=0) / dt
        speed = np.linalg.norm(v, axis=1)
        G[:-1] -= cfg.lambda_s * v / dt
        G[1:] += cfg.lambda_s * v / dt
        nb = len(self.offsets)
        d, g = gpdf.distances_and_gradients(self.field, self._body(X[:-1]))
        d = d.reshape(len(X) - 1, nb)
        g = g.reshape(len(X) - 1, nb, 3)
        c = obstacle_cost(d, self.epsilon)
        dc = obstacle_cost_deriv(d, self.epsilon)
        csum = c.sum(axis=1)
        cost = cfg.lambda_s * 0.5 * float(np.sum(v * v)) + cfg.lambda_o * float(np.sum(csum * speed))
        G[:-1] += cfg.lambda_o * speed[:, None] * np.einsum("ib,ibk->ik", dc, g)
        _add_speed_grad(G, cfg.lambda_o * csum, v, speed, dt)
        G[0] = 0.0
        G[-1] = 0.0
        return cost, G


def total_cost(traj, scene, config: ChompConfig) -> float:
    return DualFieldObjective(scene, config).cost(_waypoints(traj))


def cost_terms(traj, scene, config: ChompConfig):
    """(smoothness, obstacle, ground) sums before weighting."""
    return DualFieldObjective(scene, config).terms(_waypoints(traj))


def cost_gradient(traj, scene, config: ChompConfig) -> np.ndarray:
    return DualFieldObjective(scene, config).gradient(_waypoints(traj))


def optimize(initial: Trajectory, scene, config: ChompConfig, objective=None) -> OptimResult:
    """Covariant gradient descent with step halving.

    Each iteration tries the step 1/eta and halves it until the cost does not
    increase, at most ``max_halvings`` times; if no trial is accepted the run
    stops. Convergence is declared when |A^-1 grad|_inf < grad_tol.
    """
    obj = objective if objective is not None else DualFieldObjective(scene, config)
    X = np.array(initial.waypoints, dtype=float)
    Q = len(X)
    ab = _metric_banded(Q - 2)
    cost, G = obj.cost_and_gradient(X)
    if not np.isfinite(cost):
        raise OptimizationError("non-finite cost at iteration 0")
    history = [cost]
    for it in range(config.max_iters):
        if not np.all(np.isfinite(G)):
            raise OptimizationError(f"non-finite gradient at iteration {it}")
        direction = solveh_banded(ab, G[1:-1])
        if np.max(np.abs(direction)) < config.grad_tol:
            return OptimResult(Trajectory(X, initial.dt), history, True, it, "gradient tolerance")
        step = 1.0 / config.eta
        for _ in range(config.max_halvings + 1):
            trial = X.copy()
            trial[1:-1] -= step * direction
            # the trial's gradient is kept for the next iteration if it is accepted
            c, G_trial = obj.cost_and_gradient(trial)
            if not np.isfinite(c):
                raise OptimizationError(f"non-finite cost at iteration {it}")
            if c < cost:
                break
            step *= config.backtrack
        else:
            return OptimResult(Trajectory(X, initial.dt), history, True, it, "no descent step")
        X, cost, G = trial, c, G_trial
        history.append(cost)
    return OptimResult(Trajectory(X, initial.dt), history, False, config.max_iters, "max iterations")


def trajectory_diagnostics(traj: Trajectory, scene) -> dict:
    """Per-waypoint obstacle and ground distances (d_o is None without obstacles)."""
    X = traj.waypoints
    d_g = scene.ground_distance(X)
    d_o = scene.obstacle_distance(X) if scene.obstacle_field is not None else None
    return {"d_o": d_o, "d_g": d_g}


def trajectory_to_csv(traj: Trajectory, scene=None) -> str:
    """Rows ``t,x,y,z``; with a scene, ``d_o`` and ``d_g`` columns follow."""
    X = traj.waypoints
    cols = [traj.times(), X[:, 0], X[:, 1], X[:, 2]]
    head = ["t", "x", "y", "z"]
    if scene is not None:
        diag = trajectory_diagnostics(traj, scene)
        d_o = diag["d_o"] if diag["d_o"] is not None else np.full(len(X), np.nan)
        cols += [d_o, diag["d_g"]]
        head += ["d_o", "d_g"]
    lines = [",".join(head)]
    for row in zip(*cols):
        lines.append(",".join("" if not np.isfinite(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def trajectory_to_json(traj: Trajectory, scene=None, **extra) -> dict:
    doc = {
        "dt": traj.dt,
        "t": traj.times().tolist(),
        "waypoints": traj.waypoints.tolist(),
    }
    if scene is not None:
        diag = trajectory_diagnostics(traj, scene)
        doc["d_o"] = None if diag["d_o"] is None else diag["d_o"].tolist()
        doc["d_g"] = diag["d_g"].tolist()
    doc.update(extra)
    return doc
