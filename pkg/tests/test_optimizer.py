import json

import numpy as np
import pytest

from gpdfnav import cloud, harness, optimizer
from gpdfnav.cloud import SceneSpec, synth_scene
from gpdfnav.optimizer import ChompConfig, OptimizationError, Trajectory
from gpdfnav.scene import PRESETS, SceneConfig, build_scene

import scenes


def fd_cost_gradient(obj, X, h=1e-5):
    G = np.zeros_like(X)
    for i in range(1, len(X) - 1):
        for k in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, k] += h
            Xm[i, k] -= h
            G[i, k] = (obj.cost(Xp) - obj.cost(Xm)) / (2 * h)
    return G


def random_trajectory(sc, rng, Q=40, wiggle=0.3):
    start, goal = harness.sample_free_start_goal(sc, rng=rng)
    t = np.linspace(0, 1, Q)[:, None]
    X = start + t * (goal - start)
    X[1:-1] += rng.normal(0, wiggle, (Q - 2, 3)) * [1, 1, 0.3]
    return X


def assert_descent(res, initial):
    h = np.asarray(res.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert res.trajectory.waypoints[0].tobytes() == initial.waypoints[0].tobytes()
    assert res.trajectory.waypoints[-1].tobytes() == initial.waypoints[-1].tobytes()


@pytest.fixture(scope="module")
def open_field():
    return build_scene(synth_scene(SceneSpec((4.0, 4.0), 0.1, walls=False)), PRESETS["human"])


@pytest.fixture(scope="module")
def pillar():
    return scenes.scene("pillar", "human")


# --- trajectory and resampling -----------------------------------------------


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Trajectory(np.full((3, 3), np.nan))
    t = Trajectory(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        t.waypoints[0, 0] = 1.0


def test_resample_segment():
    t = optimizer.resample_waypoints([[0, 0, 0], [2, 0, 0]], 3)
    np.testing.assert_allclose(t.waypoints, [[0, 0, 0], [1, 0, 0], [2, 0, 0]])


def test_resample_l_shape():
    t = optimizer.resample_waypoints([[0, 0, 0], [2, 0, 0], [2, 2, 0]], 5)
    np.testing.assert_allclose(np.linalg.norm(np.diff(t.waypoints, axis=0), axis=1), 1.0)
    np.testing.assert_allclose(t.waypoints[2], [2, 0, 0])


def test_resample_keeps_endpoints_exactly():
    P = np.random.default_rng(0).random((7, 3))
    t = optimizer.resample_waypoints(P, 11)
    assert t.waypoints[0].tobytes() == P[0].tobytes() and t.waypoints[-1].tobytes() == P[-1].tobytes()


def test_resample_degenerate():
    with pytest.raises(ValueError, match="zero length"):
        optimizer.resample_waypoints([[1, 1, 1], [1, 1, 1]], 5)
    with pytest.raises(ValueError):
        optimizer.resample_waypoints([[0, 0, 0], [1, 0, 0]], 2)


# --- cost terms --------------------------------------------------------------


def test_obstacle_cost_examples():
    assert optimizer.obstacle_cost(0.5, 0.5) == 0.0
    assert optimizer.obstacle_cost(0.0, 0.5) == pytest.approx(0.25)
    assert optimizer.obstacle_cost(1.0, 0.5) == 0.0
    assert optimizer.obstacle_cost(0.5 - 1e-9, 0.5) < 1e-15


def test_ground_cost_examples():
    assert optimizer.ground_cost(2.0, 2.0) == 0.0
    assert optimizer.ground_cost(2.2, 2.0) == pytest.approx(0.01)
    assert optimizer.ground_cost(1.8, 2.0) == pytest.approx(0.01)


def test_smoothness_examples():
    assert optimizer.smoothness_cost(Trajectory(np.ones((5, 3)))) == 0.0
    line = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
    assert optimizer.smoothness_cost(Trajectory(line)) == pytest.approx(1.0)
    assert optimizer.smoothness_cost(Trajectory(line, dt=2.0)) == pytest.approx(0.25)


def test_metric_examples():
    np.testing.assert_array_equal(optimizer.smoothness_metric(3), [[2.0]])
    np.testing.assert_array_equal(optimizer.smoothness_metric(4), [[2, -1], [-1, 2]])
    for Q in (3, 10, 100, 500):
        A = optimizer.smoothness_metric(Q)
        assert np.allclose(A, A.T) and np.linalg.eigvalsh(A).min() > 0


def test_metric_is_forward_difference_gram():
    Q = 9
    K = (np.eye(Q, k=1) - np.eye(Q))[:-1]  # forward differences, (Q-1) x Q
    Ki = K[:, 1:-1]  # interior columns; endpoints fixed
    np.testing.assert_array_equal(Ki.T @ Ki, optimizer.smoothness_metric(Q))


def test_config_validation():
    with pytest.raises(ValueError):
        ChompConfig(Q=2)
    with pytest.raises(ValueError):
        ChompConfig(lambda_o=-1)
    with pytest.raises(ValueError):
        ChompConfig(epsilon=0)
    assert ChompConfig().epsilon_for(PRESETS["human"]) == pytest.approx(0.35)


def test_total_cost_at_target_height_is_zero(open_field):
    xy = np.column_stack([np.linspace(0.8, 3.2, 20), np.full(20, 2.0)])
    X = scenes.lifted(open_field, xy)
    cfg = ChompConfig(lambda_s=0.0)
    assert optimizer.total_cost(X, open_field, cfg) == pytest.approx(0.0, abs=1e-12)
    assert np.abs(optimizer.cost_gradient(X, open_field, cfg)).max() < 1e-5


def test_total_cost_above_target(open_field):
    Q = 20
    xy = np.column_stack([np.linspace(0.8, 3.2, Q), np.full(Q, 2.0)])
    X = scenes.lifted(open_field, xy) + [0, 0, 0.2]
    cfg = ChompConfig(lambda_s=0.0)
    # every waypoint, endpoints included, pays c_g = 0.04 / 4
    assert optimizer.total_cost(X, open_field, cfg) == pytest.approx(Q * 0.01, rel=0.02)
    G = optimizer.cost_gradient(X, open_field, cfg)
    assert np.all(G[1:-1, 2] > 0)
    assert np.all(G[0] == 0) and np.all(G[-1] == 0)


def test_total_cost_is_weighted_sum(pillar):
    X = random_trajectory(pillar, np.random.default_rng(3))
    cfg = ChompConfig(lambda_s=0.3, lambda_o=2.0, lambda_g=0.7)
    s, o, g = optimizer.cost_terms(X, pillar, cfg)
    assert s == pytest.approx(optimizer.smoothness_cost(X))
    assert optimizer.total_cost(X, pillar, cfg) == pytest.approx(0.3 * s + 2.0 * o + 0.7 * g)


def test_far_from_obstacles_only_smoothness(open_field):
    X = scenes.lifted(open_field, np.column_stack([np.linspace(1, 3, 10), np.linspace(1, 2, 10)]))
    cfg = ChompConfig()
    assert optimizer.total_cost(X, open_field, cfg) == pytest.approx(cfg.lambda_s * optimizer.smoothness_cost(X), abs=1e-12)


@pytest.mark.parametrize("preset,system", [("pillar", "human"), ("cluttered", "human"), ("cluttered", "roomba")])
def test_gradient_matches_finite_differences(preset, system):
    sc = scenes.scene(preset, system)
    cfg = ChompConfig()
    obj = optimizer.DualFieldObjective(sc, cfg)
    rng = np.random.default_rng(11)
    done = 0
    while done < 8:
        X = random_trajectory(sc, rng)
        if np.any(np.abs(sc.obstacle_distance(X[:-1]) - obj.epsilon) <= 1e-3):
            continue  # cost kink
        G = obj.gradient(X)
        fd = fd_cost_gradient(obj, X)
        assert np.linalg.norm(G - fd) <= 1e-3 * np.linalg.norm(fd)
        done += 1


def test_single_field_gradient_matches_finite_differences():
    sc = scenes.scene("pillar", "roomba")
    cfg = ChompConfig()
    obj = optimizer.SingleFieldObjective(sc.single_field, sc.system, cfg)
    rng = np.random.default_rng(2)
    X = random_trajectory(sc, rng) + [0, 0, 0.02]
    fd = fd_cost_gradient(obj, X)
    assert np.linalg.norm(obj.gradient(X) - fd) <= 1e-3 * np.linalg.norm(fd)
    c, G = obj.cost_and_gradient(X)
    assert c == obj.cost(X)


# --- optimize ----------------------------------------------------------------


def test_optimal_initial_is_returned(open_field):
    X = scenes.lifted(open_field, np.column_stack([np.linspace(0.8, 3.2, 20), np.full(20, 2.0)]))
    init = Trajectory(X)
    res = optimizer.optimize(init, open_field, ChompConfig(lambda_s=0.0))
    assert res.converged and res.iterations == 0
    np.testing.assert_array_equal(res.trajectory.waypoints, X)


def test_pillar_avoidance(pillar):
    cfg = ChompConfig()
    xy = np.column_stack([np.linspace(0.8, 4.2, cfg.Q), np.linspace(1.45, 1.55, cfg.Q)])
    init = Trajectory(scenes.lifted(pillar, xy))
    eps = cfg.epsilon_for(pillar.system)
    assert pillar.obstacle_distance(init.waypoints).min() < eps
    res = optimizer.optimize(init, pillar, cfg)
    assert_descent(res, init)
    W = res.trajectory.waypoints
    assert pillar.obstacle_distance(W).min() >= eps - 0.05
    assert np.all(np.abs(pillar.ground_distance(W) - 2.0) <= 0.2)


def test_step_profile():
    sc = scenes.scene("step", "human")
    start, goal = scenes.lifted(sc, [[1.0, 1.5], [3.7, 1.5]])
    out = harness.run_planner("ours", sc, start, goal)
    assert out.ok
    assert_descent(out, Trajectory(np.vstack([start, (start + goal) / 2, goal])))
    W = out.trajectory.waypoints
    rise = W[W[:, 0] > 3.4, 2].mean() - W[W[:, 0] < 2.8, 2].mean()
    assert 0.25 <= rise <= 0.45


def test_translation_equivariance():
    lc = scenes.labelled("pillar")
    # voxels no finer than the point spacing would regroup points under translation
    cfg_s = SceneConfig(ground_voxel=0.01, obstacle_voxel=0.01, ground_lengthscale=0.3, obstacle_lengthscale=0.2)
    sc = build_scene(lc, PRESETS["human"], cfg_s)
    cfg = ChompConfig(max_iters=100)
    xy = np.column_stack([np.linspace(0.8, 4.2, cfg.Q), np.linspace(1.45, 1.55, cfg.Q)])
    X = scenes.lifted(sc, xy)
    W = optimizer.optimize(Trajectory(X), sc, cfg).trajectory.waypoints
    off = np.array([3.0, -1.8, 0.6])
    sc2 = build_scene(cloud.LabelledCloud(lc.ground + off, lc.nonground + off), PRESETS["human"], cfg_s)
    W2 = optimizer.optimize(Trajectory(X + off), sc2, cfg).trajectory.waypoints
    assert np.abs(W2 - off - W).max() <= 1e-6


def test_non_finite_cost_raises(pillar):
    class Bad:
        def cost_and_gradient(self, X):
            return np.nan, np.zeros_like(X)

    with pytest.raises(OptimizationError, match="iteration 0"):
        optimizer.optimize(Trajectory(np.random.default_rng(0).random((5, 3))), pillar, ChompConfig(), objective=Bad())


def test_non_finite_gradient_raises(pillar):
    class Bad:
        def cost_and_gradient(self, X):
            G = np.zeros_like(X)
            G[1, 0] = np.inf
            return 1.0, G

    with pytest.raises(OptimizationError, match="gradient at iteration 0"):
        optimizer.optimize(Trajectory(np.random.default_rng(0).random((5, 3))), pillar, ChompConfig(), objective=Bad())


def test_max_iters_reports_not_converged(pillar):
    X = random_trajectory(pillar, np.random.default_rng(5))
    res = optimizer.optimize(Trajectory(X), pillar, ChompConfig(max_iters=2))
    assert not res.converged and res.iterations == 2 and res.reason == "max iterations"
    assert len(res.cost_history) == 3


@pytest.mark.parametrize("seed", range(5))
def test_descent_and_pinning_on_random_starts(pillar, seed):
    init = Trajectory(random_trajectory(pillar, np.random.default_rng(100 + seed)))
    res = optimizer.optimize(init, pillar, ChompConfig(max_iters=60))
    assert_descent(res, init)


# --- export ------------------------------------------------------------------


def test_csv_and_json_export(pillar):
    X = random_trajectory(pillar, np.random.default_rng(1), Q=5)
    t = Trajectory(X, dt=0.5)
    lines = optimizer.trajectory_to_csv(t).splitlines()
    assert lines[0] == "t,x,y,z" and len(lines) == 6
    assert [float(v) for v in lines[2].split(",")] == [0.5, *X[1]]
    rich = optimizer.trajectory_to_csv(t, pillar).splitlines()
    assert rich[0] == "t,x,y,z,d_o,d_g"
    doc = json.loads(json.dumps(optimizer.trajectory_to_json(t, pillar, planner="ours")))
    assert doc["planner"] == "ours" and len(doc["d_g"]) == 5 and doc["t"][-1] == 2.0


def test_csv_blank_when_no_obstacles(open_field):
    t = Trajectory(scenes.lifted(open_field, [[1, 1], [2, 2], [3, 3]]))
    rows = optimizer.trajectory_to_csv(t, open_field).splitlines()[1:]
    assert all(r.split(",")[4] == "" for r in rows)
