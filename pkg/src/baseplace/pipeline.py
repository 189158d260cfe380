"""End-to-end run: map, discs, placements, search, selection, fine-tuning.

Artifacts land in the scenario's output directory only after every stage
has succeeded, so a failed run leaves nothing half-written there. The
reachability map is the exception: it is cached under a name derived from
the robot, voxel size and grid resolution and reused by later runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from baseplace import __version__
from baseplace.config import ScenarioConfig
from baseplace.errors import InputError, MapMismatchError, NoPlacementsError
from baseplace.finetune import FineTuneResult, PlacementRules, local_search
from baseplace.kinematics import RobotModel
from baseplace.nsga2 import Individual, RunResult, run, write_front_csv, write_stats_csv
from baseplace.objectives import EvalContext, ObjectiveVector
from baseplace.placement import BasePlacement, filter_fbps, sample_candidates, write_placements_csv
from baseplace.reachmap import ReachMap, build_map, load_map
from baseplace.robots import load_robot
from baseplace.scene import Scene, load_scene
from baseplace.sld import SLD, decompose_surface, write_slds_csv

logger = logging.getLogger(__name__)

WORKERS_ENV = "BASEPLACE_WORKERS"


def default_workers() -> int:
    """Parallelism for map building, from ``BASEPLACE_WORKERS`` (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def map_cache_key(model: RobotModel, delta: float, steps_per_joint: int) -> str:
    text = f"{model.fingerprint()}|{float(delta)!r}|{int(steps_per_joint)}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def check_map(rmap: ReachMap, model: RobotModel, delta: float, steps_per_joint: int) -> None:
    rmap.check_robot(model)
    if rmap.delta != float(delta) or rmap.steps_per_joint != int(steps_per_joint):
        raise MapMismatchError(
            f"map grid (delta={rmap.delta}, steps={rmap.steps_per_joint}) differs from the requested "
            f"(delta={delta}, steps={steps_per_joint})"
        )


def obtain_map(cfg: ScenarioConfig, model: RobotModel, workers: int = 1) -> tuple[ReachMap, Path, bool]:
    """Load the cached map for this robot and grid, building it if absent.

    Returns the map, its file and whether it was built just now.
    """
    s = cfg.map
    path = s.path or (s.cache_dir / f"rm_{map_cache_key(model, s.delta, s.steps_per_joint)}.bprm")
    if path.is_file():
        rmap = load_map(path, model)
        check_map(rmap, model, s.delta, s.steps_per_joint)
        logger.info("reusing reachability map %s", path)
        return rmap, path, False
    logger.info("building reachability map (%d steps, delta %.3f)", s.steps_per_joint, s.delta)
    rmap = build_map(model, s.steps_per_joint, s.delta, workers=workers)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    rmap.save(tmp)
    tmp.replace(path)
    return rmap, path, True


@dataclass
class Prepared:
    model: RobotModel
    scene: Scene
    rmap: ReachMap
    map_path: Path
    map_built: bool
    slds: list[SLD]
    candidates: list[BasePlacement]
    fbps: list[BasePlacement]
    ctx: EvalContext

    @property
    def reach_max(self) -> float:
        return self.scene.reach_max if self.scene.reach_max is not None else self.model.max_stretch

    def rules(self, min_spacing: float) -> PlacementRules:
        return PlacementRules(self.scene.obstacles, self.scene.reach_min, self.reach_max, min_spacing)


def prepare(cfg: ScenarioConfig, workers: int = 1) -> Prepared:
    """Everything the search needs; raises before any output is written."""
    model = load_robot(cfg.robot)
    scene = load_scene(cfg.scene)
    rmap, map_path, built = obtain_map(cfg, model, workers)
    slds = decompose_surface(scene.surface, cfg.sld_radius)
    candidates = sample_candidates(scene.region)
    fbps = filter_fbps(candidates, model, scene.obstacles, slds, scene.reach_min, scene.reach_max)
    if not fbps:
        raise NoPlacementsError(f"none of {len(candidates)} candidate placements is favoured")
    ctx = EvalContext(model, rmap, slds, scene.obstacle_points, cfg.objectives, fbps=fbps)
    return Prepared(model, scene, rmap, map_path, built, slds, candidates, fbps, ctx)


def _knee_value(ind: Individual) -> float:
    o = ind.objectives
    if o.f2 > 0:
        return o.f1 / o.f2
    return math.inf if o.f1 > 0 else 0.0


def select_solution(front: Sequence[Individual], policy: str = "max-coverage") -> Individual:
    """Pick one member of a Pareto front.

    ``max-coverage`` takes the largest f1, ``min-time`` the smallest f2 and
    ``knee`` the largest coverage per second (f1 / f2). Ties go to fewer
    placements, then to the lower f2.
    """
    if not front:
        raise InputError("cannot select from an empty front")
    primary = {
        "max-coverage": lambda i: -i.objectives.f1,
        "min-time": lambda i: i.objectives.f2,
        "knee": lambda i: -_knee_value(i),
    }
    if policy not in primary:
        raise InputError(f"unknown selection policy {policy!r}")
    key = primary[policy]
    return min(front, key=lambda i: (key(i), i.placement_count, i.objectives.f2, i.key))


@dataclass
class PipelineResult:
    prepared: Prepared
    search: RunResult
    selected: Individual
    tuned: FineTuneResult | None
    solution: list[BasePlacement]
    artifacts: dict[str, Path]


def _objectives_dict(v: ObjectiveVector) -> dict:
    return {"f1": v.f1, "f2": v.f2, "f3": v.f3, "approximate": v.approximate}


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_pipeline(cfg: ScenarioConfig, workers: int | None = None) -> PipelineResult:
    workers = default_workers() if workers is None else workers
    prep = prepare(cfg, workers)
    search = run(cfg.ga, prep.fbps, prep.ctx.evaluate_genes)
    selected = select_solution(search.front, cfg.policy)
    placements = prep.ctx.placements(selected.genes)
    tuned = None
    if cfg.finetune_enabled and placements:
        tuned = local_search(placements, prep.ctx, prep.rules(cfg.ga.min_spacing), cfg.finetune)
        placements = tuned.placements

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "slds": out / "slds.csv",
        "fbps": out / "fbps.csv",
        "stats": out / "stats.csv",
        "front": out / "front.csv",
        "solution": out / "solution.csv",
        "manifest": out / "manifest.json",
    }
    write_slds_csv(prep.slds, artifacts["slds"])
    write_placements_csv(prep.fbps, artifacts["fbps"])
    write_stats_csv(search.stats, artifacts["stats"])
    write_front_csv(search.front, artifacts["front"])
    write_placements_csv(placements, artifacts["solution"])
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "robot_fingerprint": prep.model.fingerprint(),
        "scene_sha256": _sha256(cfg.scene),
        "map": {
            "file": str(prep.map_path),
            "records": len(prep.rmap),
            "cells": prep.rmap.n_cells,
            "built_this_run": prep.map_built,
        },
        "counts": {"slds": len(prep.slds), "candidates": len(prep.candidates), "fbps": len(prep.fbps)},
        "front_size": len(search.front),
        "selected": {"genes": list(selected.genes), "objectives": _objectives_dict(selected.objectives)},
        "finetuned": None
        if tuned is None
        else {"objectives": _objectives_dict(tuned.objectives), "sweeps": tuned.sweeps, "moves": tuned.moves},
        "artifacts": {k: p.name for k, p in artifacts.items()},
    }
    artifacts["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return PipelineResult(prep, search, selected, tuned, placements, artifacts)
