"""Scenario files tying a robot, a scene and every tuning knob together.

A scenario is YAML; relative paths resolve against the scenario file's
directory. Every key except ``robot`` and ``scene`` is optional and falls
back to the defaults below (see ``configs/reference.yaml`` for an annotated
copy)::

    robot: desk_arm.yaml
    scene: washbasin.yaml
    output_dir: out
    seed: 0
    map: {delta: 0.03, steps_per_joint: 20, cache_dir: .rm-cache}
    sld: {radius: 0.04}
    ga: {population_size: 40, generations: 80, genes_per_chromosome: 3,
         mutation_probability: 0.6, mutation_genes: 1, tournament_size: 20,
         min_spacing: 0.2}
    objectives: {v_ee: 0.1, base_velocity: 0.2, t_nav: 10.0,
                 nav_mode: constant, k: 8, max_angle_deg: 30,
                 held_karp_max: 18}
    finetune: {enabled: true, radius: 0.15, xy_step: 0.025,
               theta_step_deg: 15, theta_window_deg: 15}
    select: {policy: max-coverage}

``seed`` drives the genetic search; ``map.path`` may name an explicit map
file instead of the cache directory.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from baseplace.errors import BasePlaceError, ConfigError
from baseplace.finetune import FineTuneConfig
from baseplace.nsga2 import GAConfig
from baseplace.objectives import ObjectiveParams

POLICIES = ("max-coverage", "min-time", "knee")


@dataclass
class MapSettings:
    delta: float = 0.03
    steps_per_joint: int = 20
    cache_dir: Path | None = None
    path: Path | None = None


@dataclass
class ScenarioConfig:
    robot: Path
    scene: Path
    output_dir: Path
    seed: int = 0
    map: MapSettings = field(default_factory=MapSettings)
    sld_radius: float = 0.04
    ga: GAConfig = field(default_factory=GAConfig)
    objectives: ObjectiveParams = field(default_factory=ObjectiveParams)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    finetune_enabled: bool = True
    policy: str = "max-coverage"

    def to_dict(self) -> dict:
        """Plain, JSON-ready view of every parameter."""
        obj = dataclasses.asdict(self.objectives)
        obj["max_angle_deg"] = round(math.degrees(obj.pop("max_angle")), 9)
        ft = dataclasses.asdict(self.finetune)
        ft["theta_step_deg"] = round(math.degrees(ft.pop("theta_step")), 9)
        ft["theta_window_deg"] = round(math.degrees(ft.pop("theta_window")), 9)
        ft["enabled"] = self.finetune_enabled
        return {
            "robot": str(self.robot),
            "scene": str(self.scene),
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "map": {
                "delta": self.map.delta,
                "steps_per_joint": self.map.steps_per_joint,
                "cache_dir": None if self.map.cache_dir is None else str(self.map.cache_dir),
                "path": None if self.map.path is None else str(self.map.path),
            },
            "sld": {"radius": self.sld_radius},
            "ga": dataclasses.asdict(self.ga),
            "objectives": obj,
            "finetune": ft,
            "select": {"policy": self.policy},
        }


def _section(data: dict, name: str) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    return sec


def _known(sec: dict, name: str, allowed) -> None:
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in '{name}': {sorted(extra)}")


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_config(data: dict, base: Path) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    for key in ("robot", "scene"):
        if key not in data:
            raise ConfigError(f"scenario is missing '{key}'")
    _known(data, "scenario", ["robot", "scene", "output_dir", "seed", "map", "sld", "ga", "objectives", "finetune", "select"])

    robot, scene = _resolve(base, data["robot"]), _resolve(base, data["scene"])
    for p in (robot, scene):
        if not p.is_file():
            raise ConfigError(f"referenced file does not exist: {p}")

    seed = int(data.get("seed", 0))
    m = _section(data, "map")
    _known(m, "map", ["delta", "steps_per_joint", "cache_dir", "path"])
    map_settings = MapSettings(
        delta=float(m.get("delta", 0.03)),
        steps_per_joint=int(m.get("steps_per_joint", 20)),
        cache_dir=_resolve(base, m.get("cache_dir", ".rm-cache")),
        path=None if m.get("path") is None else _resolve(base, m["path"]),
    )
    if map_settings.delta <= 0 or map_settings.steps_per_joint < 2:
        raise ConfigError("map.delta must be positive and map.steps_per_joint at least 2")

    sld = _section(data, "sld")
    _known(sld, "sld", ["radius"])
    radius = float(sld.get("radius", 0.04))
    if radius <= 0:
        raise ConfigError("sld.radius must be positive")

    ga_sec = _section(data, "ga")
    ga_fields = [f.name for f in dataclasses.fields(GAConfig) if f.name != "rng_seed"]
    _known(ga_sec, "ga", ga_fields)

    obj = dict(_section(data, "objectives"))
    _known(obj, "objectives", ["v_ee", "base_velocity", "t_nav", "nav_mode", "k", "max_angle_deg", "oppose_normal", "kmeans_seed", "held_karp_max"])
    if "max_angle_deg" in obj:
        obj["max_angle"] = math.radians(float(obj.pop("max_angle_deg")))

    ft = dict(_section(data, "finetune"))
    _known(ft, "finetune", ["enabled", "radius", "xy_step", "theta_step_deg", "theta_window_deg", "max_sweeps"])
    enabled = bool(ft.pop("enabled", True))
    for key in ("theta_step", "theta_window"):
        if f"{key}_deg" in ft:
            ft[key] = math.radians(float(ft.pop(f"{key}_deg")))

    sel = _section(data, "select")
    _known(sel, "select", ["policy"])
    policy = sel.get("policy", "max-coverage")
    if policy not in POLICIES:
        raise ConfigError(f"select.policy must be one of {POLICIES}")

    try:
        ga = GAConfig(**ga_sec, rng_seed=seed)
        params = ObjectiveParams(**obj)
        finetune = FineTuneConfig(**ft)
    except (TypeError, ValueError, BasePlaceError) as exc:
        raise ConfigError(str(exc)) from exc

    return ScenarioConfig(
        robot=robot,
        scene=scene,
        output_dir=_resolve(base, data.get("output_dir", "out")),
        seed=seed,
        map=map_settings,
        sld_radius=radius,
        ga=ga,
        objectives=params,
        finetune=finetune,
        finetune_enabled=enabled,
        policy=policy,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(data, path.parent)
