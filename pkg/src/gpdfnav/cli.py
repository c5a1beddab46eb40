"""Command-line interface: ``gpdfnav {synth,build,plan,eval}``.

Exit codes: 0 ok, 2 invalid input, 3 blocked endpoint, 4 disconnected,
5 optimizer did not converge, 6 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cloud, harness, optimizer, scene
from .optimizer import ChompConfig
from .scene import SceneConfig

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BLOCKED = 3
EXIT_DISCONNECTED = 4
EXIT_NOT_CONVERGED = 5
EXIT_IO = 6


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {"type": "string"},
        "systems": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "noise_sigma": _nonneg,
        "trials": {"type": "integer", "minimum": 1},
        "planners": {"type": "array", "items": {"enum": list(harness.PLANNERS)}, "minItems": 1},
        "workers": {"type": "integer", "minimum": 1},
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ground_voxel": _pos,
                "obstacle_voxel": _pos,
                "single_voxel": _pos,
                "ground_lengthscale": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "obstacle_lengthscale": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "sigma_f2": _pos,
                "sigma_o2": _nonneg,
                "d_max_factor": _pos,
                "max_train": {"type": "integer", "minimum": 2},
                "min_cell": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_depth": {"type": "integer", "minimum": 1, "maximum": 30},
            },
        },
        "chomp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "Q": {"type": "integer", "minimum": 3},
                "dt": _pos,
                "lambda_s": _nonneg,
                "lambda_o": _nonneg,
                "lambda_g": _nonneg,
                "epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "eta": _pos,
                "max_iters": {"type": "integer", "minimum": 0},
                "grad_tol": _nonneg,
                "backtrack": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_halvings": {"type": "integer", "minimum": 0},
            },
        },
        "prm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 2},
                "neighbors": {"type": "integer", "minimum": 1},
                "clearance": _nonneg,
            },
        },
    },
}


@dataclass
class RunConfig:
    """Merged configuration: defaults, then the --config file, then flags."""

    system: str = "human"
    systems: list = field(default_factory=lambda: ["human", "roomba"])
    seed: int = 0
    noise_sigma: float = 0.0
    trials: int = 100
    planners: list = field(default_factory=lambda: list(harness.PLANNERS))
    workers: int = 1
    scene: SceneConfig = field(default_factory=SceneConfig)
    chomp: ChompConfig = field(default_factory=ChompConfig)
    prm: dict = field(default_factory=lambda: {"samples": 300, "neighbors": 10, "clearance": 0.0})

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        import jsonschema

        try:
            jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
            raise CliError(f"config {path}: {exc.message}") from None
        cfg = cls()
        for k in ("system", "systems", "seed", "noise_sigma", "trials", "planners", "workers"):
            if k in doc:
                setattr(cfg, k, doc[k])
        cfg.scene = replace(cfg.scene, **doc.get("scene", {}))
        try:
            cfg.chomp = replace(cfg.chomp, **doc.get("chomp", {}))
        except ValueError as exc:
            raise CliError(f"config $.chomp: {exc}") from None
        cfg.prm = {**cfg.prm, **doc.get("prm", {})}
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def planner_config(self) -> harness.PlannerConfig:
        return harness.PlannerConfig(
            chomp=self.chomp,
            prm_samples=self.prm["samples"],
            prm_neighbors=self.prm["neighbors"],
            prm_clearance=self.prm["clearance"],
        )


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_IO) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config is not valid JSON: {exc}") from None
        cfg = RunConfig.from_dict(doc)
    else:
        cfg = RunConfig()
    # flags override the file
    if getattr(args, "system", None):
        names = _split_systems(args.system)
        cfg.system = names[0]
        cfg.systems = names
    for flag, attr in (("seed", "seed"), ("noise_sigma", "noise_sigma"), ("trials", "trials"), ("workers", "workers")):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "planner", None):
        cfg.planners = [p.strip() for p in args.planner.split(",") if p.strip()]
    sc = {}
    if getattr(args, "lengthscale", None) is not None:
        sc["ground_lengthscale"] = args.lengthscale
        sc["obstacle_lengthscale"] = args.lengthscale
    if getattr(args, "min_cell", None) is not None:
        sc["min_cell"] = args.min_cell
    cfg.scene = replace(cfg.scene, **sc)
    ch = {}
    for flag, attr in (("epsilon", "epsilon"), ("lambda_s", "lambda_s"), ("lambda_o", "lambda_o"),
                       ("lambda_g", "lambda_g"), ("q", "Q")):
        v = getattr(args, flag, None)
        if v is not None:
            ch[attr] = v
    try:
        cfg.chomp = replace(cfg.chomp, **ch)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    for p in cfg.planners:
        if p not in harness.PLANNERS:
            raise CliError(f"unknown planner {p!r}; choose from {', '.join(harness.PLANNERS)}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise CliError("seed must be an unsigned 64-bit integer")
    if cfg.noise_sigma < 0:
        raise CliError("--noise-sigma must be >= 0")
    return cfg


def _split_systems(text):
    """Split 'human,roomba' into names but keep a 'height,radius' pair whole."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        [float(p) for p in parts]
        return [text]
    except ValueError:
        return parts


def _resolve_system(name):
    try:
        return scene.get_system(name)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _parse_point(text, what):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"{what} must be 'x,y' or 'x,y,z', got {text!r}") from None
    if len(vals) not in (2, 3) or not all(np.isfinite(vals)):
        raise CliError(f"{what} must be 'x,y' or 'x,y,z', got {text!r}")
    return np.array(vals)


def _noisy(labelled: cloud.LabelledCloud, sigma, seed) -> cloud.LabelledCloud:
    if sigma == 0:
        return labelled
    sg, sn = np.random.SeedSequence([int(seed), 1]).spawn(2)
    return cloud.LabelledCloud(
        cloud.add_gaussian_noise(labelled.ground, sigma, np.random.default_rng(sg)),
        cloud.add_gaussian_noise(labelled.nonground, sigma, np.random.default_rng(sn)),
    )


def _spec_from_args(args) -> cloud.SceneSpec:
    if args.spec and args.preset:
        raise CliError("give either --spec or --preset, not both")
    if args.spec:
        try:
            text = Path(args.spec).read_text()
        except OSError as exc:
            raise CliError(f"cannot read scene spec: {exc}", EXIT_IO) from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"scene spec is not valid JSON: {exc}") from None
        spec = cloud.SceneSpec.from_dict(doc)
    elif args.preset:
        try:
            spec = cloud.preset_spec(args.preset)
        except KeyError as exc:
            raise CliError(exc.args[0]) from None
    else:
        raise CliError("a scene spec (--spec) or preset (--preset) is required")
    if getattr(args, "omit_steps", False):
        spec = replace(spec, omit_steps=True)
    return spec


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    spec = _spec_from_args(args)
    lc = cloud.synth_scene(spec, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    enc = "ascii" if args.ascii else "binary_le"
    cloud.save_ply(lc.ground, out / "ground.ply", enc)
    if len(lc.nonground):
        cloud.save_ply(lc.nonground, out / "nonground.ply", enc)
    print(f"ground: {len(lc.ground)} points -> {out / 'ground.ply'}")
    print(f"nonground: {len(lc.nonground)} points -> {out / 'nonground.ply' if len(lc.nonground) else '(none)'}")
    return EXIT_OK


def _labelled_from_args(args, cfg) -> cloud.LabelledCloud:
    if getattr(args, "ground", None):
        lc = cloud.load_labelled(args.ground, args.nonground)
    elif getattr(args, "spec", None) or getattr(args, "preset", None):
        lc = cloud.synth_scene(_spec_from_args(args), cfg.seed)
    else:
        raise CliError("--ground (with optional --nonground) or a scene spec is required")
    if len(lc.ground) == 0:
        raise CliError("ground set is empty")
    return _noisy(lc, cfg.noise_sigma, cfg.seed)


def _describe(sc: scene.SceneModel) -> str:
    lines = [
        f"system: {sc.system.name} (height {sc.system.height:g} m, radius {sc.system.radius:g} m)",
        f"ground field: {sc.ground_field.n} training points, lengthscale {sc.ground_field.params.lengthscale:.4f} m",
    ]
    if sc.obstacle_field is None:
        lines.append("obstacle field: none (no obstacle points within the system height)")
    else:
        lines.append(
            f"obstacle field: {sc.obstacle_field.n} training points, "
            f"lengthscale {sc.obstacle_field.params.lengthscale:.4f} m ({len(sc.obstacle_points)} obstacle points)"
        )
    lines.append(f"quadtree: {len(sc.quadtree.depth)} leaves, {len(sc.graph.leaf_ids)} free, min cell {sc.min_cell:g} m")
    return "\n".join(lines)


def cmd_build(args) -> int:
    cfg = _load_run_config(args)
    lc = _labelled_from_args(args, cfg)
    sc = scene.build_scene(lc, _resolve_system(cfg.system), cfg.scene)
    scene.save_scene(sc, args.out)
    print(_describe(sc))
    print(f"scene cache -> {args.out}")
    return EXIT_OK


def _load_cache(path) -> scene.SceneModel:
    try:
        return scene.load_scene(path)
    except OSError as exc:
        raise CliError(f"cannot read scene cache: {exc}", EXIT_IO) from None
    except (KeyError, ValueError) as exc:
        raise CliError(f"{path} is not a scene cache: {exc}") from None


def _endpoint(sc, text, what):
    p = _parse_point(text, what)
    x0, y0, x1, y1 = sc.bounds2
    if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
        raise CliError(f"{what} {p[:2].tolist()} is outside the scene bounds [{x0:g}, {x1:g}] x [{y0:g}, {y1:g}]")
    if len(p) == 2:
        from .freespace import clearance_height

        z = clearance_height(sc.ground_field, p[None], sc.system.height)[0]
        p = np.array([p[0], p[1], z])
    return p


def cmd_plan(args) -> int:
    cfg = _load_run_config(args)
    sc = _load_cache(args.scene)
    if args.system and _resolve_system(cfg.system) != sc.system:
        print(f"note: using the cache's system {sc.system.name}; rebuild to change it", file=sys.stderr)
    start = _endpoint(sc, args.start, "start")
    goal = _endpoint(sc, args.goal, "goal")
    planner = cfg.planners[0] if args.planner else "ours"
    if args.planner and len(cfg.planners) != 1:
        raise CliError("plan takes a single --planner")
    out = harness.run_planner(planner, sc, start, goal, cfg.planner_config(), seed=cfg.seed)
    if not out.ok:
        code = {"blocked": EXIT_BLOCKED, "disconnected": EXIT_DISCONNECTED}.get(out.failure_kind, EXIT_INVALID)
        raise CliError(out.failure, code)
    traj = out.trajectory
    target = Path(args.out) if args.out else None
    if target is not None and target.suffix.lower() == ".json":
        cf, cv = harness.check_collision_free(traj, sc)
        fe, fv = harness.check_feasible(traj, sc)
        doc = optimizer.trajectory_to_json(
            traj, sc, planner=planner, system=asdict(sc.system), converged=out.converged,
            iterations=out.iterations, collision_free=cf, feasible=fe,
        )
        text = json.dumps(doc, indent=2)
    else:
        text = optimizer.trajectory_to_csv(traj, sc)
    if target is None:
        sys.stdout.write(text)
    else:
        target.write_text(text)
        print(f"{planner}: {traj.Q} waypoints -> {target}", file=sys.stderr)
    if not out.converged:
        print(f"optimizer stopped after {out.iterations} iterations without converging", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    if args.scene:
        scenes = [_load_cache(p) for p in args.scene]
    else:
        lc = _labelled_from_args(args, cfg)
        scenes = [scene.build_scene(lc, _resolve_system(s), cfg.scene) for s in cfg.systems]
    labels = [sc.system.name for sc in scenes]
    if len(set(labels)) != len(labels):
        labels = [f"{name}_{i}" for i, name in enumerate(labels)]
    report = harness.monte_carlo_eval(
        scenes, planners=cfg.planners, n_trials=cfg.trials, seed=cfg.seed,
        config=cfg.planner_config(), workers=cfg.workers, labels=labels,
    )
    report.write(args.out)
    sys.stdout.write(report.to_csv())
    print(f"report -> {Path(args.out) / 'report.csv'}", file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _common(p, system=True):
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (default 0)")
    if system:
        p.add_argument(
            "--system",
            help="preset name (roomba, spot, pepper, human) or 'height,radius' in metres (default human)",
        )


def _model_flags(p):
    p.add_argument("--noise-sigma", type=float, help="Gaussian noise added to every point before fitting, metres (default 0)")
    p.add_argument("--lengthscale", type=float, help="kernel lengthscale for both fields, metres (default 2x mean NN spacing)")
    p.add_argument("--min-cell", type=float, help="smallest quadtree cell, metres (default system radius)")


def _chomp_flags(p):
    p.add_argument("--epsilon", type=float, help="obstacle clearance, metres (default radius + 0.1)")
    p.add_argument("--lambda-s", type=float, help="smoothness weight (default 0.005)")
    p.add_argument("--lambda-o", type=float, help="obstacle weight (default 1.0)")
    p.add_argument("--lambda-g", type=float, help="ground weight (default 1.0)")
    p.add_argument("--q", type=int, help="number of waypoints (default 40)")


def _cloud_inputs(p):
    p.add_argument("--ground", help="ground PLY file")
    p.add_argument("--nonground", help="non-ground PLY file (optional)")
    p.add_argument("--spec", help="SceneSpec JSON to synthesise instead of reading PLY files")
    p.add_argument("--preset", help=f"named synthetic scene: {', '.join(sorted(cloud.PRESETS))}")
    p.add_argument("--omit-steps", action="store_true", help="drop step platforms from a synthetic scene")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gpdfnav",
        description="Ground-aware trajectory planning with dual GP distance fields.",
        epilog="exit codes: 0 ok, 2 invalid input, 3 blocked endpoint, 4 disconnected, "
        "5 not converged, 6 I/O error",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labelled point cloud as two PLY files")
    p.add_argument("--spec", help="SceneSpec JSON file")
    p.add_argument("--preset", help=f"named scene: {', '.join(sorted(cloud.PRESETS))}")
    p.add_argument("--omit-steps", action="store_true", help="drop step platforms")
    p.add_argument("--ascii", action="store_true", help="write ASCII PLY (default binary little-endian)")
    p.add_argument("--out", required=True, help="output directory for ground.ply and nonground.ply")
    _common(p, system=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="fit both fields and the quadtree, save a scene cache (.npz)")
    _cloud_inputs(p)
    _model_flags(p)
    p.add_argument("--out", required=True, help="scene cache path (.npz)")
    _common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("plan", help="plan one trajectory on a scene cache")
    p.add_argument("--scene", required=True, help="scene cache from 'build'")
    p.add_argument("--start", required=True, help="x,y or x,y,z; z defaults to the system height above ground")
    p.add_argument("--goal", required=True, help="x,y or x,y,z")
    p.add_argument("--planner", help=f"one of {', '.join(harness.PLANNERS)} (default ours)")
    p.add_argument("--out", help="output file; .json for JSON, anything else CSV (default CSV on stdout)")
    _chomp_flags(p)
    _common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="Monte-Carlo evaluation of planners")
    p.add_argument("--scene", action="append", help="scene cache; repeat for several (overrides cloud inputs)")
    _cloud_inputs(p)
    _model_flags(p)
    _chomp_flags(p)
    p.add_argument("--planner", help=f"comma-separated planners (default all: {','.join(harness.PLANNERS)})")
    p.add_argument("--trials", type=int, help="trials per system and planner (default 100)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--out", required=True, help="output directory for report.csv, report.json, trials.jsonl")
    _common(p)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (cloud.SceneSpecError, cloud.PlyError, scene.SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
