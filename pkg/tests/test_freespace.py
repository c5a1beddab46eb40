import numpy as np
import pytest

from gpdfnav import freespace, gpdf
from gpdfnav.freespace import BlockedEndpointError, DisconnectedError

import surfaces
from oracles import brute_force_edges, dijkstra_cost, flood_fill_agrees, random_tree

UNIT = (0.0, 0.0, 1.0, 1.0)


# --- quadtree ----------------------------------------------------------------


def test_no_points_single_free_leaf():
    qt = freespace.build_quadtree(np.zeros((0, 2)), UNIT, 0.1)
    assert qt.n_leaves == 1 and not qt.occupied[0]


def test_single_point_six_free_leaves():
    qt = freespace.build_quadtree([[0.1, 0.1]], UNIT, 0.25)
    free = ~qt.occupied
    assert free.sum() == 6 and qt.occupied.sum() == 1
    assert sorted(qt.depth[free].tolist()) == [1, 1, 1, 2, 2, 2]
    assert qt.depth[qt.occupied].tolist() == [2]
    graph = freespace.build_connectivity_graph(qt)
    assert {tuple(e) for e in graph.edges.tolist()} == brute_force_edges(qt)


def test_half_open_boundaries():
    qt = freespace.build_quadtree([[0.5, 0.5]], UNIT, 0.5)
    occ = qt.boxes()[qt.occupied]
    np.testing.assert_allclose(occ, [[0.5, 0.5, 1.0, 1.0]])
    qt = freespace.build_quadtree([[1.0, 1.0]], UNIT, 0.5)  # top-level upper edges closed
    np.testing.assert_allclose(qt.boxes()[qt.occupied], [[0.5, 0.5, 1.0, 1.0]])
    qt = freespace.build_quadtree([[0.5, 0.2]], UNIT, 0.5)
    np.testing.assert_allclose(qt.boxes()[qt.occupied], [[0.5, 0.0, 1.0, 0.5]])


def test_locate_matches_boxes():
    qt = random_tree(3)
    b = qt.boxes()
    pts = np.random.default_rng(0).uniform(0, 8, (300, 2))
    for p, leaf in zip(pts, qt.locate_many(pts)):
        x0, y0, x1, y1 = b[leaf]
        assert x0 <= p[0] < x1 and y0 <= p[1] < y1


def test_point_outside_bounds_rejected():
    with pytest.raises(ValueError, match="outside"):
        freespace.build_quadtree([[1.5, 0.5]], UNIT, 0.1)


@pytest.mark.parametrize("kw", [dict(min_cell=0), dict(min_cell=0.1, max_depth=0)])
def test_bad_parameters(kw):
    with pytest.raises(ValueError):
        freespace.build_quadtree([[0.5, 0.5]], UNIT, **kw)


@pytest.mark.parametrize("seed", range(10))
def test_partition_and_emptiness(seed):
    qt = random_tree(seed)
    b = qt.boxes()
    area = np.prod(b[:, 2:] - b[:, :2], axis=1).sum()
    assert abs(area - 64.0) <= 1e-9 * 64.0
    n = 1 << qt.max_depth
    cover = np.zeros((n, n), int)
    for x0, y0, x1, y1 in qt.int_boxes():
        cover[y0:y1, x0:x1] += 1
    assert np.all(cover == 1)
    rng = np.random.default_rng(seed)
    pts = np.clip(rng.uniform(0, 8, (50, 2)), 0, 8)
    qt = freespace.build_quadtree(pts, (0, 0, 8, 8), 0.25, 6)
    for x0, y0, x1, y1 in qt.boxes()[~qt.occupied]:
        inside = (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 1] > y0) & (pts[:, 1] < y1)
        assert not inside.any()


def test_deterministic():
    a, b = random_tree(7), random_tree(7)
    assert np.array_equal(a.int_boxes(), b.int_boxes()) and np.array_equal(a.occupied, b.occupied)


# --- connectivity graph ------------------------------------------------------


def test_corner_contact_gives_no_edge():
    qt = freespace.build_quadtree([[0.1, 0.1]], UNIT, 0.5)
    g = freespace.build_connectivity_graph(qt)
    centers = {tuple(np.round(c, 6)) for c in g.centers}
    assert centers == {(0.75, 0.25), (0.25, 0.75), (0.75, 0.75)}
    assert len(g.edges) == 2  # SE-NE and NW-NE, not SE-NW


@pytest.mark.parametrize("seed", range(20))
def test_edges_match_brute_force(seed):
    qt = random_tree(seed)
    g = freespace.build_connectivity_graph(qt)
    assert {tuple(e) for e in g.edges.tolist()} == brute_force_edges(qt)
    assert np.all(g.weights > 0)


@pytest.mark.parametrize("seed", range(20))
def test_connectivity_matches_flood_fill(seed):
    assert flood_fill_agrees(random_tree(seed))


def test_portal_on_shared_boundary():
    qt = freespace.build_quadtree([[0.1, 0.1]], UNIT, 0.25)
    g = freespace.build_connectivity_graph(qt)
    for u, v in g.edges:
        p = g.portal(u, v)
        for w in (u, v):
            assert np.all(np.abs(p - g.centers[w]) <= g.half_sizes[w] + 1e-12)


# --- A* ----------------------------------------------------------------------


def test_astar_same_leaf():
    g = freespace.build_connectivity_graph(freespace.build_quadtree(np.zeros((0, 2)), UNIT, 0.1))
    p = freespace.astar(g, (0.1, 0.2), (0.8, 0.9))
    np.testing.assert_array_equal(p.points, [[0.1, 0.2], [0.8, 0.9]])


def test_astar_adjacent_cells():
    g = freespace.build_connectivity_graph(freespace.build_quadtree([[0.1, 0.9]], UNIT, 0.5))
    p = freespace.astar(g, (0.2, 0.3), (0.8, 0.3))
    np.testing.assert_allclose(p.points, [[0.2, 0.3], [0.25, 0.25], [0.75, 0.25], [0.8, 0.3]])


def test_astar_blocked_endpoint():
    g = freespace.build_connectivity_graph(freespace.build_quadtree([[0.1, 0.1]], UNIT, 0.5))
    with pytest.raises(BlockedEndpointError):
        freespace.astar(g, (0.2, 0.2), (0.8, 0.8))
    with pytest.raises(BlockedEndpointError, match="outside"):
        freespace.astar(g, (0.8, 0.8), (1.5, 0.8))


def test_astar_disconnected():
    wall = np.column_stack([np.full(40, 0.55), np.linspace(0, 1, 40)])
    g = freespace.build_connectivity_graph(freespace.build_quadtree(wall, UNIT, 1 / 16))
    with pytest.raises(DisconnectedError):
        freespace.astar(g, (0.1, 0.5), (0.9, 0.5))


def _maze_points(seed, n=20):
    """Random 20x20 block maze; blocked cells carry a point at their centre."""
    rng = np.random.default_rng(seed)
    blocked = rng.random((n, n)) < 0.3
    blocked[0, 0] = blocked[-1, -1] = False
    jj, ii = np.nonzero(blocked)
    return np.column_stack([ii + 0.5, jj + 0.5])


def test_maze_astar_equals_dijkstra():
    for seed in range(50):
        qt = freespace.build_quadtree(_maze_points(seed), (0, 0, 32, 32), 1.0, 5)
        g = freespace.build_connectivity_graph(qt)
        s = g.vertex_of_leaf(qt.locate((0.5, 0.5)))
        t = g.vertex_of_leaf(qt.locate((19.5, 19.5)))
        want = dijkstra_cost(g, s, t)
        if not np.isfinite(want):
            with pytest.raises(DisconnectedError):
                freespace.graph_search(g, s, t)
            continue
        _, cost = freespace.graph_search(g, s, t)
        assert cost == pytest.approx(want, rel=1e-12)
        path = freespace.astar(g, (0.5, 0.5), (19.5, 19.5))
        centres = freespace.Path2D(g.centers[list(path.cells)])
        assert centres.length == pytest.approx(want, rel=1e-12)


def test_astar_path_cells_adjacent():
    qt = random_tree(11)
    g = freespace.build_connectivity_graph(qt)
    edges = {tuple(e) for e in g.edges.tolist()}
    free = g.centers
    p = freespace.astar(g, free[0], free[-1]) if dijkstra_cost(g, 0, g.n_vertices - 1) < np.inf else None
    if p is not None:
        for a, b in zip(p.cells[:-1], p.cells[1:]):
            assert (min(a, b), max(a, b)) in edges


# --- PRM ---------------------------------------------------------------------


def test_prm_empty_map_near_straight():
    p = freespace.prm_plan(np.zeros((0, 2)), (0, 0, 5, 5), (0.5, 0.5), (4.5, 4.5), seed=0)
    straight = np.hypot(4, 4)
    assert p.length <= 1.05 * straight
    np.testing.assert_array_equal(p.points[0], [0.5, 0.5])
    np.testing.assert_array_equal(p.points[-1], [4.5, 4.5])


def _wall_with_gap():
    y = np.arange(0.05, 5.0, 0.1)
    y = y[(y < 2.0) | (y > 3.0)]
    return np.column_stack([np.full(len(y), 2.6), y])


def test_prm_goes_through_gap():
    p = freespace.prm_plan(_wall_with_gap(), (0, 0, 5, 5), (0.5, 0.5), (4.5, 0.5), n_samples=400, seed=1)
    pts = p.points
    for a, b in zip(pts[:-1], pts[1:]):
        if (a[0] - 2.6) * (b[0] - 2.6) < 0:
            y = a[1] + (2.6 - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
            assert 2.0 <= y <= 3.0


def test_prm_walled_off_goal():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    ring = np.column_stack([4 + 0.6 * np.cos(t), 4 + 0.6 * np.sin(t)])
    with pytest.raises(DisconnectedError):
        freespace.prm_plan(ring, (0, 0, 5, 5), (0.5, 0.5), (4.0, 4.0), seed=0)


def test_prm_blocked_start():
    with pytest.raises(BlockedEndpointError):
        freespace.prm_plan([[0.55, 0.55]], (0, 0, 5, 5), (0.6, 0.6), (4.0, 4.0))


def test_prm_deterministic_per_seed():
    a = freespace.prm_plan(_wall_with_gap(), (0, 0, 5, 5), (0.5, 0.5), (4.5, 0.5), seed=3)
    b = freespace.prm_plan(_wall_with_gap(), (0, 0, 5, 5), (0.5, 0.5), (4.5, 0.5), seed=3)
    np.testing.assert_array_equal(a.points, b.points)


def test_prm_bad_arguments():
    with pytest.raises(ValueError):
        freespace.prm_plan([], (0, 0, 1, 1), (0.1, 0.1), (0.9, 0.9), n_samples=1)
    with pytest.raises(ValueError):
        freespace.prm_plan([], (0, 0, 1, 1), (0.1, 0.1), (0.9, 0.9), clearance=-1)


# --- lifting -----------------------------------------------------------------


@pytest.fixture(scope="module")
def flat_field():
    return gpdf.fit(surfaces.plane(0.1, half=3.0), gpdf.KernelParams(0.2))


@pytest.fixture(scope="module")
def step_field():
    floor = surfaces.plane(0.1, half=3.0)
    outer = floor[np.max(np.abs(floor[:, :2]), axis=1) > 1.0 + 1e-9]
    pts = np.vstack([surfaces.step(0.1), outer])
    return gpdf.fit(pts, gpdf.KernelParams(0.2))


def test_lift_offset_flat(flat_field):
    path = np.array([[-1.0, -1.0], [0.0, 0.3], [1.0, 1.2]])
    traj = freespace.lift_path(path, "offset_at_start", flat_field, 2.0)
    assert np.all(traj[:, 2] == traj[0, 2])
    assert traj[0, 2] == pytest.approx(2.0, abs=0.02)


def test_lift_follow_ground_over_step(step_field):
    xs = np.linspace(-1.5, 0.0, 16)
    path = np.column_stack([xs, np.zeros_like(xs)])
    traj = freespace.lift_path(path, "follow_ground", step_field, 0.5)
    d = gpdf.distances(step_field, traj)
    np.testing.assert_allclose(d, 0.5, atol=1e-6)
    assert traj[-1, 2] - traj[0, 2] == pytest.approx(0.35, abs=0.05)


def test_lift_single_waypoint(flat_field):
    for mode in ("offset_at_start", "follow_ground"):
        out = freespace.lift_path(np.array([[0.2, 0.1]]), mode, flat_field, 1.0)
        assert out.shape == (1, 3)


def test_lift_rejects_bad_input(flat_field):
    with pytest.raises(ValueError):
        freespace.lift_path(np.zeros((0, 2)), "offset_at_start", flat_field, 1.0)
    with pytest.raises(ValueError):
        freespace.lift_path(np.zeros((1, 2)), "sideways", flat_field, 1.0)


def test_freespace_json_dump(tmp_path):
    import json

    g = freespace.build_connectivity_graph(freespace.build_quadtree([[0.1, 0.1]], UNIT, 0.25))
    freespace.dump_freespace_json(g, tmp_path / "fs.json")
    doc = json.loads((tmp_path / "fs.json").read_text())
    assert len(doc["quadtree"]["leaves"]) == 7 and len(doc["graph"]["vertices"]) == 6
