"""Command line entry point: ``baseplace <subcommand> ...``.

Exit codes: 0 success, 1 other failure, 2 bad configuration or input,
3 no favoured placement survived filtering, 4 reachability map does not
match the robot or grid.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from baseplace import __version__
from baseplace.config import POLICIES, load_config
from baseplace.errors import BasePlaceError, ConfigError, InputError, MapMismatchError, NoPlacementsError, SizingError
from baseplace.finetune import FineTuneConfig, PlacementRules, local_search
from baseplace.nsga2 import read_front_csv, run, write_front_csv, write_stats_csv
from baseplace.objectives import EvalContext, ObjectiveParams
from baseplace.pipeline import default_workers, prepare, run_pipeline, select_solution
from baseplace.placement import filter_fbps, read_placements_csv, sample_candidates, write_placements_csv
from baseplace.reachmap import build_map, load_map, query
from baseplace.robots import desk_arm_4dof, load_robot, save_robot
from baseplace.scene import load_scene, save_scene, washbasin_scene
from baseplace.sld import SLD, decompose_surface, read_slds_csv, write_slds_csv

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NO_FBPS, EXIT_MAP_MISMATCH = 0, 1, 2, 3, 4

log = logging.getLogger("baseplace")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, MapMismatchError):
        return EXIT_MAP_MISMATCH
    if isinstance(exc, NoPlacementsError):
        return EXIT_NO_FBPS
    if isinstance(exc, (ConfigError, InputError, SizingError)):
        return EXIT_CONFIG
    return EXIT_FAILURE


def _slds_for(args, scene) -> list[SLD]:
    if getattr(args, "slds", None):
        return read_slds_csv(args.slds)
    return decompose_surface(scene.surface, args.radius)


# -- subcommands ------------------------------------------------------------------


def cmd_build_rm(args) -> int:
    model = load_robot(args.robot)
    rmap = build_map(model, args.steps, args.delta, max_records=args.max_records, workers=args.workers)
    rmap.save(args.out)
    print(f"{len(rmap)} records in {rmap.n_cells} cells ({rmap.self_colliding} self-colliding dropped) -> {args.out}")
    return EXIT_OK


def cmd_query_rm(args) -> int:
    model = load_robot(args.robot)
    rmap = load_map(args.map, model)
    sld = SLD(id=0, center=np.array(args.center), normal=np.array(args.normal), radius=0.0)
    sol = query(rmap, sld, k=args.k, max_angle=math.radians(args.max_angle_deg))
    if sol is None:
        print("unreachable")
        return EXIT_OK
    r = sol.record
    print(json.dumps({
        "q": r.q.tolist(),
        "position": r.p.tolist(),
        "approach": r.n.tolist(),
        "manipulability": r.W,
        "angular_error_deg": math.degrees(sol.angular_error),
    }, indent=2))
    return EXIT_OK


def cmd_decompose(args) -> int:
    scene = load_scene(args.scene)
    slds = decompose_surface(scene.surface, args.radius)
    write_slds_csv(slds, args.out)
    print(f"{len(slds)} discs from {len(scene.surface)} points -> {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    scene = load_scene(args.scene)
    model = load_robot(args.robot)
    slds = _slds_for(args, scene)
    candidates = sample_candidates(scene.region)
    fbps = filter_fbps(candidates, model, scene.obstacles, slds, scene.reach_min, scene.reach_max)
    if not fbps:
        raise NoPlacementsError(f"none of {len(candidates)} candidates is favoured")
    write_placements_csv(fbps, args.out)
    print(f"{len(fbps)} of {len(candidates)} candidates favoured -> {args.out}")
    return EXIT_OK


_GA_FLAGS = {
    "population_size": int,
    "generations": int,
    "genes_per_chromosome": int,
    "mutation_probability": float,
    "mutation_genes": int,
    "tournament_size": int,
    "min_spacing": float,
}


def _apply_ga_overrides(cfg, args):
    changes = {k: getattr(args, k) for k in _GA_FLAGS if getattr(args, k) is not None}
    if args.seed is not None:
        cfg.seed = args.seed
        changes["rng_seed"] = args.seed
    if changes:
        try:
            cfg.ga = replace(cfg.ga, **changes)
        except BasePlaceError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def cmd_optimize(args) -> int:
    cfg = _apply_ga_overrides(load_config(args.config), args)
    out = Path(args.out_dir) if args.out_dir else cfg.output_dir
    prep = prepare(cfg, args.workers)
    res = run(cfg.ga, prep.fbps, prep.ctx.evaluate_genes,
              callback=lambda g, pop: log.info("generation %d done", g))
    out.mkdir(parents=True, exist_ok=True)
    write_slds_csv(prep.slds, out / "slds.csv")
    write_placements_csv(prep.fbps, out / "fbps.csv")
    write_stats_csv(res.stats, out / "stats.csv")
    write_front_csv(res.front, out / "front.csv")
    last = res.stats[-1]
    print(f"front of {len(res.front)}; final mean f1 {last.mean[0]:.4f}, f2 {last.mean[1]:.2f} s -> {out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    model = load_robot(args.robot)
    scene = load_scene(args.scene)
    rmap = load_map(args.map, model)
    slds = _slds_for(args, scene)
    Z = read_placements_csv(args.solution)
    if not Z:
        raise InputError("solution file lists no placements")
    ctx = EvalContext(model, rmap, slds, scene.obstacle_points, ObjectiveParams(t_nav=args.t_nav))
    reach_max = scene.reach_max if scene.reach_max is not None else model.max_stretch
    rules = PlacementRules(scene.obstacles, scene.reach_min, reach_max, args.min_spacing)
    config = FineTuneConfig(
        radius=args.search_radius,
        xy_step=args.xy_step,
        theta_step=math.radians(args.theta_step_deg),
        theta_window=math.radians(args.theta_window_deg),
    )
    res = local_search(Z, ctx, rules, config)
    write_placements_csv(res.placements, args.out)
    a, b = res.initial, res.objectives
    print(f"f1 {a.f1:.4f} -> {b.f1:.4f}, f2 {a.f2:.2f} -> {b.f2:.2f}, f3 {a.f3:.3f} -> {b.f3:.3f} "
          f"({res.moves} moves) -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run_pipeline(cfg, args.workers)
    final = res.tuned.objectives if res.tuned else res.selected.objectives
    print(f"selected {len(res.solution)} placements: f1 {final.f1:.4f}, f2 {final.f2:.2f} s, f3 {final.f3:.3f}")
    print(f"artifacts in {cfg.output_dir}")
    return EXIT_OK


def cmd_select(args) -> int:
    front = read_front_csv(args.front)
    best = select_solution(front, args.policy)
    o = best.objectives
    print(json.dumps({"genes": list(best.genes), "f1": o.f1, "f2": o.f2, "f3": o.f3}))
    if args.out:
        if not args.fbps:
            raise InputError("--out needs --fbps to turn genes into placements")
        by_id = {bp.id: bp for bp in read_placements_csv(args.fbps)}
        missing = [g for g in best.genes if g and g not in by_id]
        if missing:
            raise InputError(f"genes {missing} are not in {args.fbps}")
        write_placements_csv([by_id[g] for g in best.genes if g], args.out)
    return EXIT_OK


DEMO_SCENARIO = """\
# Desk-scale demo. Same parameters as configs/reference.yaml except the
# coarser 0.05 m voxels, which keep the map build under a minute.
robot: desk_arm.yaml
scene: washbasin.yaml
output_dir: out
seed: 0
map: {delta: 0.05, steps_per_joint: 20, cache_dir: .rm-cache}
sld: {radius: 0.04}
ga:
  population_size: 40
  generations: 80
  genes_per_chromosome: 3
  mutation_probability: 0.6
  mutation_genes: 1
  tournament_size: 20
  min_spacing: 0.2
objectives: {v_ee: 0.1, base_velocity: 0.2, t_nav: 10.0}
finetune: {enabled: true, radius: 0.15, xy_step: 0.025, theta_step_deg: 15, theta_window_deg: 15}
select: {policy: max-coverage}
"""


def cmd_make_demo(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_robot(desk_arm_4dof(), out / "desk_arm.yaml")
    save_scene(washbasin_scene(), out / "washbasin.yaml")
    (out / "scenario.yaml").write_text(DEMO_SCENARIO)
    print(f"demo robot, scene and scenario written to {out}; try: baseplace run --config {out / 'scenario.yaml'}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="baseplace", description="Multi-placement base optimisation for surface coverage.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-rm", help="build a reachability map")
    s.add_argument("--robot", required=True)
    s.add_argument("--steps", type=int, default=20, help="samples per joint")
    s.add_argument("--delta", "--voxel", type=float, default=0.03, dest="delta", help="voxel size in metres")
    s.add_argument("--max-records", type=int, default=5_000_000)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_rm)

    s = sub.add_parser("query-rm", help="best stored pose for one disc given in the arm-root frame")
    s.add_argument("--map", required=True)
    s.add_argument("--robot", required=True)
    s.add_argument("--center", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    s.add_argument("--normal", type=float, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--max-angle-deg", type=float, default=30.0)
    s.set_defaults(func=cmd_query_rm)

    s = sub.add_parser("decompose", help="tile a scene surface with discs")
    s.add_argument("--scene", required=True)
    s.add_argument("--radius", type=float, default=0.04)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("sample", help="sample candidates and keep the favoured ones")
    s.add_argument("--scene", required=True)
    s.add_argument("--robot", required=True)
    s.add_argument("--slds", help="disc CSV; decomposed from the scene when omitted")
    s.add_argument("--radius", type=float, default=0.04)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("optimize", help="run the genetic search only")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=None)
    for name, typ in _GA_FLAGS.items():
        s.add_argument("--" + name.replace("_", "-"), type=typ, dest=name)
    s.add_argument("--genes", type=int, dest="genes_per_chromosome", help="alias of --genes-per-chromosome")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("finetune", help="locally refine a placement set")
    s.add_argument("--solution", required=True)
    s.add_argument("--scene", required=True)
    s.add_argument("--map", required=True)
    s.add_argument("--robot", required=True)
    s.add_argument("--slds")
    s.add_argument("--radius", type=float, default=0.04, help="disc radius when decomposing")
    s.add_argument("--t-nav", type=float, default=10.0)
    s.add_argument("--min-spacing", type=float, default=0.2)
    s.add_argument("--search-radius", type=float, default=0.15)
    s.add_argument("--xy-step", type=float, default=0.025)
    s.add_argument("--theta-step-deg", type=float, default=15.0)
    s.add_argument("--theta-window-deg", type=float, default=15.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("run", help="full pipeline from a scenario file")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("select", help="pick one solution from a front CSV")
    s.add_argument("--front", required=True)
    s.add_argument("--policy", choices=POLICIES, default="max-coverage")
    s.add_argument("--fbps", help="placement CSV used to resolve gene ids")
    s.add_argument("--out", help="write the chosen placements here")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("make-demo", help="write the demo robot, scene and scenario")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", "unset") is None:
        try:
            args.workers = default_workers()
        except InputError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except BasePlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
