"""Quadtree free space, connectivity graph, A* and a PRM baseline.

Quadtree cells are addressed by integer coordinates on the finest grid
(``2**max_depth`` cells per side) so that adjacency tests are exact. Cells
are half-open, ``[lo, hi)``, except along the upper edges of the root, which
are closed.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from . import gpdf


class PlanningError(RuntimeError):
    pass


class BlockedEndpointError(PlanningError):
    pass


class DisconnectedError(PlanningError):
    pass


@dataclass(frozen=True, eq=False)
class Quadtree:
    bounds: tuple  # (xmin, ymin, xmax, ymax)
    min_cell: float
    max_depth: int
    depth: np.ndarray  # (L,) per leaf
    ix: np.ndarray  # (L,) cell index at that depth
    iy: np.ndarray
    occupied: np.ndarray  # (L,) bool

    @property
    def n_leaves(self) -> int:
        return len(self.depth)

    def int_boxes(self) -> np.ndarray:
        """Leaf extents on the finest integer grid, (L, 4): x0, y0, x1, y1."""
        scale = np.left_shift(1, self.max_depth - self.depth)
        return np.column_stack([self.ix * scale, self.iy * scale, (self.ix + 1) * scale, (self.iy + 1) * scale])

    def boxes(self) -> np.ndarray:
        """Leaf extents in metres, (L, 4): x0, y0, x1, y1."""
        x0, y0, x1, y1 = self.bounds
        n = float(1 << self.max_depth)
        ib = self.int_boxes().astype(float)
        return np.column_stack([
            x0 + (x1 - x0) * (ib[:, 0] / n),
            y0 + (y1 - y0) * (ib[:, 1] / n),
            x0 + (x1 - x0) * (ib[:, 2] / n),
            y0 + (y1 - y0) * (ib[:, 3] / n),
        ])

    def locate(self, point) -> int:
        """Index of the leaf containing ``point`` (half-open convention)."""
        return int(self.locate_many(np.atleast_2d(point))[0])

    def locate_many(self, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        x0, y0, x1, y1 = self.bounds
        inside = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
        if not np.all(inside):
            raise ValueError("point outside quadtree bounds")
        n = 1 << self.max_depth
        fx = np.minimum(_fine_index(pts[:, 0], x0, x1, self.max_depth), n - 1)
        fy = np.minimum(_fine_index(pts[:, 1], y0, y1, self.max_depth), n - 1)
        lookup = self._lookup
        out = np.empty(len(pts), dtype=int)
        for k, (a, b) in enumerate(zip(fx, fy)):
            for d in range(self.max_depth + 1):
                key = (d, int(a) >> (self.max_depth - d), int(b) >> (self.max_depth - d))
                leaf = lookup.get(key)
                if leaf is not None:
                    out[k] = leaf
                    break
            else:  # pragma: no cover - leaves partition the root
                raise AssertionError("leaf lookup failed")
        return out

    @property
    def _lookup(self):
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {(int(d), int(i), int(j)): k for k, (d, i, j) in enumerate(zip(self.depth, self.ix, self.iy))}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def to_json(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "min_cell": self.min_cell,
            "max_depth": self.max_depth,
            "leaves": [
                {"box": [float(v) for v in b], "depth": int(d), "occupied": bool(o)}
                for b, d, o in zip(self.boxes(), self.depth, self.occupied)
            ],
        }


def _fine_index(v, lo, hi, depth):
    """Integer cell index on the finest grid, consistent with the cell bounds."""
    n = 1 << depth
    k = np.floor((v - lo) / (hi - lo) * n).astype(np.int64)
    k = np.clip(k, 0, n)
    # repair rounding so that lo + (hi-lo)*k/n <= v < lo + (hi-lo)*(k+1)/n
    edge_lo = lo + (hi - lo) * (k / n)
    k = np.where(edge_lo > v, k - 1, k)
    edge_hi = lo + (hi - lo) * ((k + 1) / n)
    k = np.where((edge_hi <= v) & (k + 1 < n + 1), k + 1, k)
    return np.clip(k, 0, n)


def build_quadtree(points2, bounds, min_cell: float, max_depth: int = 12) -> Quadtree:
    """Subdivide cells holding obstacle points until ``min_cell`` or ``max_depth``.

    A cell is split while it is occupied, deeper than ``max_depth`` is not
    reached, and its longer side exceeds ``min_cell``.
    """
    if not min_cell > 0:
        raise ValueError("min_cell must be > 0")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    x0, y0, x1, y1 = (float(b) for b in bounds)
    if not (x1 > x0 and y1 > y0):
        raise ValueError("bounds must have positive extent")
    pts = np.asarray(points2, float).reshape(-1, 2)
    if len(pts):
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        bad = (pts[:, 0] < x0) | (pts[:, 0] > x1) | (pts[:, 1] < y0) | (pts[:, 1] > y1)
        if np.any(bad):
            raise ValueError(f"{int(bad.sum())} point(s) outside quadtree bounds, e.g. {pts[bad][0].tolist()}")
    n = 1 << max_depth
    fx = np.minimum(_fine_index(pts[:, 0], x0, x1, max_depth), n - 1) if len(pts) else np.zeros(0, np.int64)
    fy = np.minimum(_fine_index(pts[:, 1], y0, y1, max_depth), n - 1) if len(pts) else np.zeros(0, np.int64)
    side = max(x1 - x0, y1 - y0)

    depth, ix, iy, occ = [], [], [], []
    # DFS in child order SW, SE, NW, NE; stack holds (depth, i, j, point indices)
    stack = [(0, 0, 0, np.arange(len(pts)))]
    while stack:
        d, i, j, idx = stack.pop()
        size = side / (1 << d)
        if len(idx) == 0 or d >= max_depth or size <= min_cell * (1 + 1e-12):
            depth.append(d)
            ix.append(i)
            iy.append(j)
            occ.append(len(idx) > 0)
            continue
        shift = max_depth - d - 1
        bx = (fx[idx] >> shift) & 1
        by = (fy[idx] >> shift) & 1
        children = []
        for cy in (0, 1):
            for cx in (0, 1):
                sel = idx[(bx == cx) & (by == cy)]
                children.append((d + 1, 2 * i + cx, 2 * j + cy, sel))
        stack.extend(reversed(children))
    return Quadtree(
        bounds=(x0, y0, x1, y1),
        min_cell=float(min_cell),
        max_depth=int(max_depth),
        depth=np.array(depth, dtype=np.int64),
        ix=np.array(ix, dtype=np.int64),
        iy=np.array(iy, dtype=np.int64),
        occupied=np.array(occ, dtype=bool),
    )


@dataclass(frozen=True, eq=False)
class FreeCellGraph:
    quadtree: Quadtree
    leaf_ids: np.ndarray  # vertex -> leaf index
    centers: np.ndarray  # (V, 2)
    half_sizes: np.ndarray  # (V, 2)
    edges: np.ndarray  # (E, 2), i < j
    weights: np.ndarray  # (E,)
    neighbors: list = field(repr=False)  # per vertex: list of (nbr, weight)

    @property
    def n_vertices(self) -> int:
        return len(self.leaf_ids)

    def vertex_of_leaf(self, leaf: int) -> int | None:
        pos = np.searchsorted(self.leaf_ids, leaf)
        if pos < len(self.leaf_ids) and self.leaf_ids[pos] == leaf:
            return int(pos)
        return None

    def portal(self, u: int, v: int) -> np.ndarray:
        """Midpoint of the boundary segment shared by vertices u and v."""
        bu = self.centers[u] - self.half_sizes[u], self.centers[u] + self.half_sizes[u]
        bv = self.centers[v] - self.half_sizes[v], self.centers[v] + self.half_sizes[v]
        lo = np.maximum(bu[0], bv[0])
        hi = np.minimum(bu[1], bv[1])
        return (lo + hi) / 2

    def to_json(self) -> dict:
        return {
            "vertices": [{"center": c.tolist(), "half_size": h.tolist()} for c, h in zip(self.centers, self.half_sizes)],
            "edges": [[int(a), int(b), float(w)] for (a, b), w in zip(self.edges, self.weights)],
        }


def _touching(a_lo, a_hi, b_lo, b_hi):
    return min(a_hi, b_hi) - max(a_lo, b_lo) > 0


def build_connectivity_graph(quadtree: Quadtree) -> FreeCellGraph:
    """Connect free leaves that share a boundary segment of positive length."""
    free = np.flatnonzero(~quadtree.occupied)
    ib = quadtree.int_boxes()[free]
    boxes = quadtree.boxes()[free]
    centers = np.column_stack([(boxes[:, 0] + boxes[:, 2]) / 2, (boxes[:, 1] + boxes[:, 3]) / 2])
    half = np.column_stack([(boxes[:, 2] - boxes[:, 0]) / 2, (boxes[:, 3] - boxes[:, 1]) / 2])

    pairs = set()
    for axis in (0, 1):
        other = 1 - axis
        by_low = {}
        for v, b in enumerate(ib):
            by_low.setdefault(int(b[axis]), []).append(v)
        for v, b in enumerate(ib):
            for u in by_low.get(int(b[axis + 2]), ()):
                c = ib[u]
                if _touching(b[other], b[other + 2], c[other], c[other + 2]):
                    pairs.add((min(u, v), max(u, v)))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    weights = np.linalg.norm(centers[edges[:, 0]] - centers[edges[:, 1]], axis=1) if len(edges) else np.zeros(0)
    neighbors = [[] for _ in range(len(free))]
    for (a, b), w in zip(edges, weights):
        neighbors[a].append((int(b), float(w)))
        neighbors[b].append((int(a), float(w)))
    for lst in neighbors:
        lst.sort()
    return FreeCellGraph(quadtree, free, centers, half, edges, weights, neighbors)


@dataclass(frozen=True)
class Path2D:
    points: np.ndarray  # (k, 2)
    cells: tuple = ()  # graph vertices visited, if any

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


def _dedupe(points):
    pts = np.asarray(points, float)
    keep = [0]
    for i in range(1, len(pts)):
        if not np.array_equal(pts[i], pts[keep[-1]]):
            keep.append(i)
    return pts[keep]


def _endpoint_vertex(graph: FreeCellGraph, point, which: str) -> int:
    try:
        leaf = graph.quadtree.locate(point)
    except ValueError:
        raise BlockedEndpointError(f"{which} {[float(v) for v in point]} is outside the map") from None
    v = graph.vertex_of_leaf(leaf)
    if v is None:
        raise BlockedEndpointError(f"{which} {[float(v) for v in point]} lies in an occupied cell")
    return v


def graph_search(graph: FreeCellGraph, s: int, g: int) -> tuple[list, float]:
    """A* over free cells with the Euclidean centre distance as heuristic."""
    c = graph.centers
    goal_c = c[g]

    def h(v):
        return math.hypot(c[v, 0] - goal_c[0], c[v, 1] - goal_c[1])

    best = {s: 0.0}
    parent = {s: -1}
    closed = set()
    heap = [(h(s), s)]
    while heap:
        f, v = heapq.heappop(heap)
        if v in closed:
            continue
        if v == g:
            break
        closed.add(v)
        gv = best[v]
        for u, w in graph.neighbors[v]:
            if u in closed:
                continue
            cand = gv + w
            if cand < best.get(u, math.inf):
                best[u] = cand
                parent[u] = v
                heapq.heappush(heap, (cand + h(u), u))
    if g not in best:
        raise DisconnectedError("no path between start and goal cells")
    seq = [g]
    while parent[seq[-1]] != -1:
        seq.append(parent[seq[-1]])
    return seq[::-1], best[g]


def astar(graph: FreeCellGraph, start, goal) -> Path2D:
    """Shortest centre-to-centre path through free cells, with the endpoints attached."""
    start = np.asarray(start, float)[:2]
    goal = np.asarray(goal, float)[:2]
    s = _endpoint_vertex(graph, start, "start")
    g = _endpoint_vertex(graph, goal, "goal")
    if s == g:
        return Path2D(_dedupe([start, goal]), (s,))
    seq, _ = graph_search(graph, s, g)
    pts = [start, *graph.centers[seq], goal]
    return Path2D(_dedupe(pts), tuple(seq))


def portal_path(graph: FreeCellGraph, path: Path2D) -> Path2D:
    """Insert the shared-boundary midpoint between consecutive cells of an A* path.

    Segments centre -> portal -> centre stay inside the two free cells, which
    a direct centre-to-centre segment between cells of different sizes does
    not guarantee.
    """
    if len(path.cells) < 2:
        return path
    pts = [path.points[0]]
    seq = path.cells
    for a, b in zip(seq[:-1], seq[1:]):
        pts.append(graph.centers[a])
        pts.append(graph.portal(a, b))
    pts.append(graph.centers[seq[-1]])
    pts.append(path.points[-1])
    return Path2D(_dedupe(pts), seq)


# ---------------------------------------------------------------------------
# PRM baseline


def occupancy_grid(points2, bounds, cell: float, clearance: float = 0.0):
    """Binary occupancy raster; returns (occ[ny, nx], origin, cell)."""
    x0, y0, x1, y1 = bounds
    nx = max(1, int(math.ceil((x1 - x0) / cell - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / cell - 1e-9)))
    occ = np.zeros((ny, nx), dtype=bool)
    pts = np.asarray(points2, float).reshape(-1, 2)
    if len(pts):
        i = np.clip(np.floor((pts[:, 0] - x0) / cell).astype(int), 0, nx - 1)
        j = np.clip(np.floor((pts[:, 1] - y0) / cell).astype(int), 0, ny - 1)
        occ[j, i] = True
    if clearance > 0 and occ.any():
        dist = ndimage.distance_transform_edt(~occ) * cell
        occ = dist <= clearance
    return occ, np.array([x0, y0]), cell


def _grid_free(occ, origin, cell, pts):
    ny, nx = occ.shape
    i = np.floor((pts[:, 0] - origin[0]) / cell).astype(int)
    j = np.floor((pts[:, 1] - origin[1]) / cell).astype(int)
    inside = (i >= 0) & (j >= 0) & (i < nx + 1) & (j < ny + 1)
    i = np.clip(i, 0, nx - 1)
    j = np.clip(j, 0, ny - 1)
    return inside & ~occ[j, i]


def _segment_free(occ, origin, cell, a, b):
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / (cell / 4))) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return bool(np.all(_grid_free(occ, origin, cell, a + t * (b - a))))


def prm_plan(points2, bounds, start, goal, n_samples=300, k_neighbors=10, clearance=0.0, seed=0, cell=0.25) -> Path2D:
    """Probabilistic roadmap on a binary occupancy grid of resolution ``cell``."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if clearance < 0:
        raise ValueError("clearance must be >= 0")
    start = np.asarray(start, float)[:2]
    goal = np.asarray(goal, float)[:2]
    occ, origin, cell = occupancy_grid(points2, bounds, cell, clearance)
    for name, p in (("start", start), ("goal", goal)):
        if not _grid_free(occ, origin, cell, p[None])[0]:
            raise BlockedEndpointError(f"{name} {p.tolist()} lies in an occupied PRM cell")
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = bounds
    samples = []
    need = n_samples
    for _ in range(1000):
        cand = rng.uniform([x0, y0], [x1, y1], size=(max(need * 2, 16), 2))
        cand = cand[_grid_free(occ, origin, cell, cand)]
        samples.append(cand[:need])
        need -= len(cand[:need])
        if need <= 0:
            break
    nodes = np.vstack([start[None], goal[None], *samples])
    tree = cKDTree(nodes)
    k = min(k_neighbors + 1, len(nodes))
    _, nbrs = tree.query(nodes, k=k)
    rows, cols, vals = [], [], []
    seen = set()
    for a in range(len(nodes)):
        for b in np.atleast_1d(nbrs[a])[1:]:
            b = int(b)
            key = (min(a, b), max(a, b))
            if key in seen:
                continue
            seen.add(key)
            if _segment_free(occ, origin, cell, nodes[a], nodes[b]):
                w = float(np.linalg.norm(nodes[a] - nodes[b]))
                rows += [a, b]
                cols += [b, a]
                vals += [w, w]
    graph = csr_matrix((vals, (rows, cols)), shape=(len(nodes), len(nodes)))
    dist, pred = dijkstra(graph, directed=False, indices=0, return_predecessors=True)
    if not np.isfinite(dist[1]):
        raise DisconnectedError("PRM roadmap does not connect start and goal")
    seq = [1]
    while seq[-1] != 0:
        seq.append(int(pred[seq[-1]]))
    return Path2D(_dedupe(nodes[seq[::-1]]))


# ---------------------------------------------------------------------------
# lifting 2D paths into 3D


def clearance_height(ground_field: gpdf.GpdfModel, xy, h_r: float) -> np.ndarray:
    """For each (x, y), the height z above the ground where d_g(x, y, z) = h_r.

    Scans down from above the highest ground point and refines the first
    crossing by bisection.
    """
    xy = np.asarray(xy, float).reshape(-1, 2)
    if len(xy) == 0:
        return np.zeros(0)
    train = ground_field.train
    l = ground_field.params.lengthscale
    dz = min(l / 2, h_r / 4)
    z_top = train[:, 2].max() + h_r + 2 * l
    z_bot = train[:, 2].min() - dz
    zs = np.arange(z_top, z_bot, -dz)
    m = len(xy)
    hi = np.full(m, np.nan)
    lo = np.full(m, np.nan)
    prev = np.full(m, z_top)
    for z in zs[1:]:
        todo = np.isnan(hi)
        if not todo.any():
            break
        q = np.column_stack([xy[todo], np.full(todo.sum(), z)])
        below = gpdf.distances(ground_field, q) < h_r
        idx = np.flatnonzero(todo)[below]
        hi[idx] = prev[idx]
        lo[idx] = z
        prev[todo] = z
    missing = np.isnan(hi)
    if missing.any():
        # no crossing: ground too far below; fall back to the lowest scan
        hi[missing] = lo[missing] = zs[-1]
    for _ in range(50):
        mid = (lo + hi) / 2
        d = gpdf.distances(ground_field, np.column_stack([xy, mid]))
        above = d >= h_r
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return (lo + hi) / 2


def lift_path(path2, mode: str, ground_field: gpdf.GpdfModel, h_r: float) -> np.ndarray:
    """Lift a 2D path to 3D.

    ``offset_at_start``: constant height h_r above the ground under the first
    waypoint. ``follow_ground``: every waypoint at distance h_r from the
    ground, found by a vertical search.
    """
    pts = path2.points if isinstance(path2, Path2D) else np.asarray(path2, float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("path is empty")
    if mode == "offset_at_start":
        z0 = clearance_height(ground_field, pts[:1], h_r)[0]
        z = np.full(len(pts), z0)
    elif mode == "follow_ground":
        z = clearance_height(ground_field, pts, h_r)
    else:
        raise ValueError(f"unknown lift mode {mode!r}")
    return np.column_stack([pts, z])


def dump_freespace_json(graph: FreeCellGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump({"quadtree": graph.quadtree.to_json(), "graph": graph.to_json()}, fh)
