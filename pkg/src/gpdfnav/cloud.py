"""Point-cloud ingestion, synthesis and preprocessing.

Points are plain ``(n, 3)`` float arrays throughout. A :class:`LabelledCloud`
pairs the ground set with the non-ground set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# PLY scalar type name -> numpy little-endian dtype string
_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
}


class PlyError(ValueError):
    pass


class PlyParseError(PlyError):
    def __init__(self, lineno, line, reason):
        self.lineno = lineno
        super().__init__(f"PLY header line {lineno}: {reason}: {line!r}")


class PlyTruncatedError(PlyError):
    pass


def as_points(points, dim=3) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros((0, dim))
    pts = np.atleast_2d(pts)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"expected an (n, {dim}) array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True, eq=False)
class LabelledCloud:
    ground: np.ndarray
    nonground: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ground", as_points(self.ground))
        object.__setattr__(self, "nonground", as_points(self.nonground))
        for name in ("ground", "nonground"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} points must be finite")

    @property
    def bounds(self) -> np.ndarray:
        """``[[xmin, ymin, zmin], [xmax, ymax, zmax]]`` over both sets."""
        allp = np.vstack([self.ground, self.nonground])
        if len(allp) == 0:
            raise ValueError("empty cloud has no bounds")
        return np.array([allp.min(axis=0), allp.max(axis=0)])


# ---------------------------------------------------------------------------
# PLY


def _parse_header(fh):
    lines = []
    first = fh.readline()
    if first.strip() != b"ply":
        raise PlyParseError(1, first.decode("latin-1").rstrip(), "missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype or ('list', cnt, item))])
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise PlyParseError(lineno, "", "header ended without 'end_header'")
        line = raw.decode("latin-1").strip()
        lines.append(line)
        if not line or line.startswith(("comment", "obj_info")):
            continue
        tok = line.split()
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(lineno, line, "unsupported format")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyParseError(lineno, line, "bad element declaration")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise PlyParseError(lineno, line, "property before any element")
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise PlyParseError(lineno, line, "unknown list type")
                elements[-1][2].append((tok[4], ("list", tok[2], tok[3])))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise PlyParseError(lineno, line, "bad property declaration")
        else:
            raise PlyParseError(lineno, line, "unknown header keyword")
    if fmt is None:
        raise PlyParseError(lineno, "end_header", "no format line")
    vertex = [e for e in elements if e[0] == "vertex"]
    if not vertex:
        raise PlyParseError(lineno, "end_header", "no vertex element")
    names = [p[0] for p in vertex[0][2]]
    for axis in "xyz":
        if axis not in names:
            raise PlyParseError(lineno, "end_header", f"vertex element lacks property {axis}")
    return fmt, elements


def load_ply(path) -> np.ndarray:
    """Read vertex x, y, z from an ASCII or binary little-endian PLY file.

    Other vertex properties are skipped. Elements declared before ``vertex``
    may only hold fixed-size properties in binary files.
    """
    with open(path, "rb") as fh:
        fmt, elements = _parse_header(fh)
        if fmt == "ascii":
            text = fh.read().decode("latin-1").split("\n")
            rows = iter(ln for ln in text if ln.strip())
            for name, count, props in elements:
                if name != "vertex":
                    for _ in range(count):
                        if next(rows, None) is None:
                            raise PlyTruncatedError(f"element {name!r} truncated")
                    continue
                if any(isinstance(p[1], tuple) for p in props):
                    raise PlyError("list properties on vertex are not supported")
                cols = [p[0] for p in props]
                ix = [cols.index(a) for a in "xyz"]
                out = np.empty((count, 3))
                for i in range(count):
                    row = next(rows, None)
                    if row is None:
                        raise PlyTruncatedError(f"expected {count} vertices, found {i}")
                    vals = row.split()
                    if len(vals) < len(cols):
                        raise PlyTruncatedError(f"vertex {i} has {len(vals)} values, expected {len(cols)}")
                    out[i] = [float(vals[k]) for k in ix]
                return out
        for name, count, props in elements:
            if any(isinstance(p[1], tuple) for p in props):
                if name == "vertex":
                    raise PlyError("list properties on vertex are not supported")
                raise PlyError(f"cannot skip list element {name!r} before vertex data")
            dtype = np.dtype([(p[0], p[1]) for p in props])
            nbytes = dtype.itemsize * count
            buf = fh.read(nbytes)
            if len(buf) < nbytes:
                raise PlyTruncatedError(
                    f"element {name!r}: expected {count} records ({nbytes} bytes), got {len(buf)} bytes"
                )
            if name == "vertex":
                data = np.frombuffer(buf, dtype=dtype, count=count)
                return np.column_stack([data[a].astype(float) for a in "xyz"])
    raise PlyError("no vertex element")  # unreachable: header checks this


def save_ply(points, path, encoding: str = "binary_le") -> None:
    """Write points as float32 x, y, z. ``encoding`` is 'ascii' or 'binary_le'."""
    pts = as_points(points)
    if len(pts) == 0:
        raise ValueError("cannot write an empty point list")
    if encoding not in ("ascii", "binary_le"):
        raise ValueError(f"unknown encoding {encoding!r}")
    fmt = "ascii" if encoding == "ascii" else "binary_little_endian"
    header = (
        f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n"
    )
    p32 = pts.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if encoding == "ascii":
            # repr of float32 round-trips exactly
            fh.write("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in p32.tolist()).encode("ascii"))
        else:
            fh.write(p32.tobytes())


# ---------------------------------------------------------------------------
# preprocessing


def add_gaussian_noise(points, sigma: float, seed=None) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    pts = as_points(points)
    if sigma == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    return pts + rng.normal(0.0, sigma, size=pts.shape)


def voxel_downsample(points, cell: float) -> np.ndarray:
    """Replace the points of each occupied voxel by their centroid.

    Voxels are anchored at the origin; output is ordered by voxel index.
    Works for any dimension.
    """
    if not cell > 0:
        raise ValueError("cell must be > 0")
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 3)
    keys = np.floor(pts / cell).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    sums = np.zeros((len(counts), pts.shape[1]))
    np.add.at(sums, inverse, pts)
    return sums / counts[:, None]


def downsample_to_cap(points, cell: float, cap: int) -> tuple[np.ndarray, float]:
    """Voxel-downsample, growing the cell until at most ``cap`` points remain."""
    out = voxel_downsample(points, cell)
    while len(out) > cap:
        cell *= 1.25
        out = voxel_downsample(points, cell)
    return out, cell


def segment_ground_by_height(points, z_threshold: float) -> LabelledCloud:
    pts = as_points(points)
    low = pts[:, 2] <= z_threshold
    return LabelledCloud(pts[low], pts[~low])


# ---------------------------------------------------------------------------
# synthetic scenes


class SceneSpecError(ValueError):
    pass


SCENE_SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["room", "spacing"],
    "additionalProperties": False,
    "properties": {
        "room": {
            "type": "object",
            "required": ["size"],
            "additionalProperties": False,
            "properties": {
                "size": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
                "wall_height": {"type": "number", "exclusiveMinimum": 0},
                "walls": {"type": "boolean"},
            },
        },
        "spacing": {"type": "number", "exclusiveMinimum": 0},
        "boxes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["center", "size"],
                "additionalProperties": False,
                "properties": {
                    "center": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                    "size": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                },
            },
        },
        "spheres": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["center", "radius"],
                "additionalProperties": False,
                "properties": {
                    "center": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
                    "radius": {"type": "number"},
                },
            },
        },
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["min", "max", "height"],
                "additionalProperties": False,
                "properties": {
                    "min": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "max": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "height": {"type": "number"},
                },
            },
        },
        "ground": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["type"],
                    "additionalProperties": False,
                    "properties": {"type": {"enum": ["flat", "stepped"]}},
                },
                {
                    "type": "object",
                    "required": ["type", "cell", "heights"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "heightmap"},
                        "cell": {"type": "number", "exclusiveMinimum": 0},
                        "heights": {
                            "type": "array",
                            "minItems": 2,
                            "items": {"type": "array", "minItems": 2, "items": {"type": "number"}},
                        },
                    },
                },
            ]
        },
        "omit_steps": {"type": "boolean"},
        "jitter": {"type": "number", "minimum": 0, "maximum": 1},
    },
}


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple

    @property
    def lo(self):
        return np.asarray(self.center, float) - np.asarray(self.size, float) / 2

    @property
    def hi(self):
        return np.asarray(self.center, float) + np.asarray(self.size, float) / 2


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Step:
    min: tuple
    max: tuple
    height: float


@dataclass(frozen=True)
class SceneSpec:
    """Room-scale synthetic scene.

    The room spans ``[0, size_x] x [0, size_y]``. Ground is flat at z = 0
    unless a heightmap is given (``heightmap`` rows index y, columns index
    x, sample spacing ``heightmap_cell``, bilinear in between). Steps are
    raised traversable platforms; their tops and risers are ground.
    """

    room_size: tuple
    spacing: float
    wall_height: float = 2.5
    walls: bool = True
    boxes: tuple = ()
    spheres: tuple = ()
    steps: tuple = ()
    heightmap: tuple | None = None
    heightmap_cell: float = 1.0
    omit_steps: bool = False
    jitter: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        sx, sy = self.room_size
        if not self.spacing > 0:
            raise SceneSpecError("spacing must be > 0")
        if not (sx > 0 and sy > 0):
            raise SceneSpecError("room size must be positive")

        def inside(lo, hi, what):
            if lo[0] < -1e-9 or lo[1] < -1e-9 or hi[0] > sx + 1e-9 or hi[1] > sy + 1e-9:
                raise SceneSpecError(f"{what} extends outside the room")

        for i, b in enumerate(self.boxes):
            if min(b.size) <= 0:
                raise SceneSpecError(f"box {i} has non-positive size {b.size}")
            inside(b.lo, b.hi, f"box {i}")
        for i, s in enumerate(self.spheres):
            if not s.radius > 0:
                raise SceneSpecError(f"sphere {i} has non-positive radius")
            c = np.asarray(s.center, float)
            inside(c - s.radius, c + s.radius, f"sphere {i}")
        for i, st in enumerate(self.steps):
            if not (st.max[0] > st.min[0] and st.max[1] > st.min[1] and st.height > 0):
                raise SceneSpecError(f"step {i} is degenerate")
            inside(st.min, st.max, f"step {i}")
        if self.heightmap is not None:
            h = np.asarray(self.heightmap, float)
            if h.ndim != 2 or min(h.shape) < 2:
                raise SceneSpecError("heightmap must be a 2D grid of at least 2x2")
            if (h.shape[1] - 1) * self.heightmap_cell < sx - 1e-9 or (h.shape[0] - 1) * self.heightmap_cell < sy - 1e-9:
                raise SceneSpecError("heightmap does not cover the room")

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        import jsonschema

        try:
            jsonschema.validate(doc, SCENE_SPEC_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "$" + "".join(f"[{p!r}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
            raise SceneSpecError(f"{path}: {exc.message}") from None
        room = doc["room"]
        ground = doc.get("ground", {"type": "flat"})
        kw = {}
        if ground["type"] == "heightmap":
            kw["heightmap"] = tuple(tuple(r) for r in ground["heights"])
            kw["heightmap_cell"] = ground["cell"]
        return cls(
            room_size=tuple(room["size"]),
            spacing=doc["spacing"],
            wall_height=room.get("wall_height", 2.5),
            walls=room.get("walls", True),
            boxes=tuple(Box(tuple(b["center"]), tuple(b["size"])) for b in doc.get("boxes", [])),
            spheres=tuple(Sphere(tuple(s["center"]), s["radius"]) for s in doc.get("spheres", [])),
            steps=tuple(Step(tuple(s["min"]), tuple(s["max"]), s["height"]) for s in doc.get("steps", [])),
            omit_steps=doc.get("omit_steps", False),
            jitter=doc.get("jitter", 0.0),
            **kw,
        )

    @classmethod
    def from_json(cls, path) -> "SceneSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = {
            "room": {"size": list(self.room_size), "wall_height": self.wall_height, "walls": self.walls},
            "spacing": self.spacing,
            "boxes": [{"center": list(b.center), "size": list(b.size)} for b in self.boxes],
            "spheres": [{"center": list(s.center), "radius": s.radius} for s in self.spheres],
            "steps": [{"min": list(s.min), "max": list(s.max), "height": s.height} for s in self.steps],
            "omit_steps": self.omit_steps,
            "jitter": self.jitter,
        }
        if self.heightmap is not None:
            doc["ground"] = {"type": "heightmap", "cell": self.heightmap_cell, "heights": [list(r) for r in self.heightmap]}
        else:
            doc["ground"] = {"type": "stepped" if self.steps else "flat"}
        return doc

    def active_steps(self):
        return () if self.omit_steps else self.steps

    def terrain_height(self, x, y):
        """Base terrain height (heightmap or 0), ignoring steps."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.heightmap is None:
            return np.zeros(np.broadcast(x, y).shape)
        h = np.asarray(self.heightmap, float)
        c = self.heightmap_cell
        fx = np.clip(x / c, 0, h.shape[1] - 1 - 1e-12)
        fy = np.clip(y / c, 0, h.shape[0] - 1 - 1e-12)
        i0 = np.floor(fx).astype(int)
        j0 = np.floor(fy).astype(int)
        tx = fx - i0
        ty = fy - j0
        return (
            h[j0, i0] * (1 - tx) * (1 - ty)
            + h[j0, i0 + 1] * tx * (1 - ty)
            + h[j0 + 1, i0] * (1 - tx) * ty
            + h[j0 + 1, i0 + 1] * tx * ty
        )

    def surface_height(self, x, y):
        """Traversable surface height including step tops."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        z = self.terrain_height(x, y)
        for st in self.active_steps():
            on = (x >= st.min[0]) & (x <= st.max[0]) & (y >= st.min[1]) & (y <= st.max[1])
            z = np.where(on, self.terrain_height(x, y) + st.height, z)
        return z


def _axis_samples(lo, hi, s):
    n = max(1, int(math.ceil((hi - lo) / s - 1e-9)))
    return np.linspace(lo, hi, n + 1)


def _rect_grid(lo, hi, s):
    """Grid on the axis-aligned rectangle [lo, hi] in 2D with spacing <= s."""
    gx = _axis_samples(lo[0], hi[0], s)
    gy = _axis_samples(lo[1], hi[1], s)
    X, Y = np.meshgrid(gx, gy)
    return np.column_stack([X.ravel(), Y.ravel()])


def _perimeter(lo, hi, s):
    gx = _axis_samples(lo[0], hi[0], s)
    gy = _axis_samples(lo[1], hi[1], s)[1:-1]
    pts = [np.column_stack([gx, np.full_like(gx, lo[1])]), np.column_stack([gx, np.full_like(gx, hi[1])])]
    if len(gy):
        pts += [np.column_stack([np.full_like(gy, lo[0]), gy]), np.column_stack([np.full_like(gy, hi[0]), gy])]
    return np.vstack(pts)


def _fibonacci_sphere(center, radius, s):
    n = max(8, int(math.ceil(4 * math.pi * radius**2 / s**2)))
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5**0.5) * i
    unit = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    return np.asarray(center, float) + radius * unit


def synth_scene(spec: SceneSpec, seed=0) -> LabelledCloud:
    """Sample a labelled point cloud of the scene surfaces.

    Ground: the floor grid (minus what lies under steps and grounded boxes),
    step tops and step risers. Non-ground: walls, boxes and spheres. Vertical
    surfaces start half a spacing above the terrain so no non-ground sample
    coincides with a ground sample.
    """
    rng = np.random.default_rng(seed)
    s = spec.spacing
    sx, sy = spec.room_size
    j = spec.jitter * s / 2

    def jit2(xy):
        if j == 0:
            return xy
        return xy + rng.uniform(-j, j, size=xy.shape)

    steps = spec.active_steps()
    ground = []
    nonground = []

    floor = _rect_grid((0.0, 0.0), (sx, sy), s)
    keep = np.ones(len(floor), bool)
    for st in steps:
        keep &= ~((floor[:, 0] > st.min[0]) & (floor[:, 0] < st.max[0]) & (floor[:, 1] > st.min[1]) & (floor[:, 1] < st.max[1]))
    for b in spec.boxes:
        lo, hi = b.lo, b.hi
        base = spec.terrain_height(b.center[0], b.center[1])
        if lo[2] <= base + s / 2:
            keep &= ~((floor[:, 0] > lo[0]) & (floor[:, 0] < hi[0]) & (floor[:, 1] > lo[1]) & (floor[:, 1] < hi[1]))
    floor = np.clip(jit2(floor[keep]), [0, 0], [sx, sy])
    ground.append(np.column_stack([floor, spec.terrain_height(floor[:, 0], floor[:, 1])]))

    for st in steps:
        top = np.clip(jit2(_rect_grid(st.min, st.max, s)), st.min, st.max)
        base = spec.terrain_height(top[:, 0], top[:, 1])
        ground.append(np.column_stack([top, base + st.height]))
        rim = _perimeter(st.min, st.max, s)
        rb = spec.terrain_height(rim[:, 0], rim[:, 1])
        levels = np.arange(s / 2, st.height - s / 4, s)
        for dz in levels:
            ground.append(np.column_stack([rim, rb + dz]))

    if spec.walls:
        rim = _perimeter((0.0, 0.0), (sx, sy), s)
        base = spec.terrain_height(rim[:, 0], rim[:, 1])
        for dz in np.arange(s / 2, spec.wall_height - base.min() + 1e-9, s):
            row = np.column_stack([rim, base + dz])
            nonground.append(row[row[:, 2] <= spec.wall_height + 1e-9])

    for b in spec.boxes:
        lo, hi = b.lo, b.hi
        base = float(spec.terrain_height(b.center[0], b.center[1]))
        grounded = lo[2] <= base + s / 2
        z0 = base + s / 2 if grounded else lo[2]
        top = _rect_grid(lo[:2], hi[:2], s)
        nonground.append(np.column_stack([top, np.full(len(top), hi[2])]))
        if not grounded:
            nonground.append(np.column_stack([top, np.full(len(top), lo[2])]))
        rim = _perimeter(lo[:2], hi[:2], s)
        zs = np.arange(z0, hi[2] - s / 4, s) if grounded else _axis_samples(lo[2], hi[2], s)[1:-1]
        for z in zs:
            nonground.append(np.column_stack([rim, np.full(len(rim), z)]))

    for sp in spec.spheres:
        nonground.append(_fibonacci_sphere(sp.center, sp.radius, s))

    g = np.vstack(ground) if ground else np.zeros((0, 3))
    ng = np.vstack(nonground) if nonground else np.zeros((0, 3))
    return LabelledCloud(g, ng)


def load_labelled(ground_path, nonground_path=None) -> LabelledCloud:
    """Load ground and non-ground PLY files. A missing non-ground file is empty."""
    g = load_ply(ground_path)
    ng = load_ply(nonground_path) if nonground_path is not None else np.zeros((0, 3))
    return LabelledCloud(g, ng)


# Named scenes used by the tests, demos and ``synth --preset``.
_STEP = Step((6.4, 3.2), (7.4, 4.4), 0.35)  # 1 x 1.2 x 0.35 m platform

PRESETS = {
    # room with four grounded obstacles, a ball at 0.7 m and a step
    "cluttered": dict(
        room_size=(8.0, 6.0),
        spacing=0.1,
        boxes=(
            Box((1.6, 1.6, 0.4), (0.6, 0.6, 0.8)),
            Box((5.6, 1.3, 0.6), (0.5, 1.0, 1.2)),
            Box((2.6, 4.4, 1.25), (0.4, 0.4, 2.5)),
            Box((4.6, 4.6, 0.25), (0.8, 0.5, 0.5)),
        ),
        spheres=(Sphere((3.8, 2.8, 0.7), 0.25),),
        steps=(_STEP,),
    ),
    "step": dict(room_size=(5.0, 3.0), spacing=0.1, steps=(Step((3.2, 0.9), (4.2, 2.1), 0.35),)),
    "pillar": dict(room_size=(5.0, 3.0), spacing=0.1, boxes=(Box((2.5, 1.5, 1.25), (0.4, 0.4, 2.5)),)),
    # horizontal slab with its underside 0.5 m above the floor
    "slab": dict(room_size=(5.0, 3.0), spacing=0.1, boxes=(Box((2.5, 1.5, 0.55), (1.2, 1.0, 0.1)),)),
}


def preset_spec(name: str, **overrides) -> SceneSpec:
    """A named synthetic scene; keyword overrides replace SceneSpec fields."""
    if name not in PRESETS:
        raise KeyError(f"unknown scene preset {name!r}; choose from {sorted(PRESETS)}")
    return SceneSpec(**{**PRESETS[name], **overrides})
