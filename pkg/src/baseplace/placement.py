"""Candidate base placements, footprint collision and frame changes.

Angles follow the right-hand rule about world +z; a placement ``(x, y,
theta)`` puts the base origin at ``(x, y)`` with its x-axis rotated by
``theta`` from world x.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from baseplace.errors import InputError
from baseplace.kinematics import RobotModel, _ccw_convex
from baseplace.sld import SLD
from baseplace.voxels import pack_points

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
CSV_HEADER = ["id", "x", "y", "theta"]


def wrap_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class BasePlacement:
    id: int
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if self.id < 1:
            raise InputError("placement ids start at 1; 0 means no placement")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def pose_key(self) -> tuple[float, float, float]:
        return (round(self.x, 9), round(self.y, 9), round(self.theta, 9))


class PlanarPolygon:
    """Convex polygon with counterclockwise vertices."""

    def __init__(self, vertices):
        self.vertices = _ccw_convex(np.asarray(vertices, dtype=float).reshape(-1, 2))

    def __repr__(self) -> str:
        return f"PlanarPolygon({self.vertices.tolist()})"

    @classmethod
    def box(cls, xmin, ymin, xmax, ymax) -> "PlanarPolygon":
        return cls([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])

    def transformed(self, x: float, y: float, theta: float) -> "PlanarPolygon":
        c, s = math.cos(theta), math.sin(theta)
        R = np.array([[c, -s], [s, c]])
        return PlanarPolygon(self.vertices @ R.T + [x, y])


@dataclass(frozen=True)
class SamplingRegion:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    xy_step: float
    theta_values: tuple[float, ...]

    def __post_init__(self):
        if self.xy_step <= 0:
            raise InputError("xy_step must be positive")
        for lo, hi in (self.x_range, self.y_range):
            if hi < lo:
                raise InputError("sampling ranges must be nonempty")


def _axis_values(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(count), 10)


def sample_candidates(region: SamplingRegion) -> list[BasePlacement]:
    """Full ``(x, y, theta)`` grid; ids run 1..N with y slowest, theta fastest."""
    xs = _axis_values(*region.x_range, region.xy_step)
    ys = _axis_values(*region.y_range, region.xy_step)
    out = []
    for y in ys:
        for x in xs:
            for theta in region.theta_values:
                out.append(BasePlacement(len(out) + 1, float(x), float(y), float(theta)))
    return out


def polygons_intersect(a: PlanarPolygon, b: PlanarPolygon, eps: float = 1e-12) -> bool:
    """Separating-axis test; touching polygons count as intersecting."""
    va, vb = a.vertices, b.vertices
    for poly in (va, vb):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        pa, pb = va @ normals.T, vb @ normals.T
        if np.any((pa.max(axis=0) < pb.min(axis=0) - eps) | (pb.max(axis=0) < pa.min(axis=0) - eps)):
            return False
    return True


def base_pose_matrix(bp: BasePlacement) -> np.ndarray:
    c, s = math.cos(bp.theta), math.sin(bp.theta)
    T = np.eye(4)
    T[:2, :2] = [[c, -s], [s, c]]
    T[0, 3], T[1, 3] = bp.x, bp.y
    return T


def root_pose_matrix(bp: BasePlacement, model: RobotModel) -> np.ndarray:
    """World transform of the arm root for a placement."""
    return base_pose_matrix(bp) @ model.mount_pose


def world_to_root(bp: BasePlacement, model: RobotModel) -> np.ndarray:
    return np.linalg.inv(root_pose_matrix(bp, model))


def footprint_at(bp: BasePlacement, model: RobotModel) -> PlanarPolygon:
    return PlanarPolygon(model.base_footprint).transformed(bp.x, bp.y, bp.theta)


def footprint_clear(bp: BasePlacement, model: RobotModel, obstacles: Sequence[PlanarPolygon]) -> bool:
    fp = footprint_at(bp, model)
    return not any(polygons_intersect(fp, ob) for ob in obstacles)


def reach_distance(bp: BasePlacement, model: RobotModel, centers_xy: np.ndarray) -> float:
    """Horizontal distance from the arm root to the nearest disc centre."""
    root = root_pose_matrix(bp, model)[:2, 3]
    return float(np.min(np.linalg.norm(centers_xy - root, axis=1)))


def is_favoured(bp, model, obstacles, centers_xy, reach_min, reach_max) -> bool:
    if not footprint_clear(bp, model, obstacles):
        return False
    return reach_min <= reach_distance(bp, model, centers_xy) <= reach_max


def filter_fbps(
    candidates: Sequence[BasePlacement],
    model: RobotModel,
    obstacles: Sequence[PlanarPolygon],
    slds: Sequence[SLD],
    reach_min: float,
    reach_max: float | None = None,
) -> list[BasePlacement]:
    """Keep candidates whose footprint is clear and whose arm root sits
    within ``[reach_min, reach_max]`` of the nearest disc (horizontally).

    ``reach_max`` defaults to the arm's full stretch. An empty result is
    logged; callers decide whether it is fatal.
    """
    if reach_max is None:
        reach_max = model.max_stretch
    if not reach_min < reach_max:
        raise InputError("reach_min must be below reach_max")
    if reach_max > model.max_stretch + 1e-9:
        raise InputError(f"reach_max {reach_max} exceeds the arm stretch {model.max_stretch:.3f}")
    centers_xy = np.array([s.center[:2] for s in slds], dtype=float)
    kept = [bp for bp in candidates if is_favoured(bp, model, obstacles, centers_xy, reach_min, reach_max)]
    if not kept:
        logger.warning("no favoured base placement survived filtering")
    return kept


def to_arm_frame(
    bp: BasePlacement,
    model: RobotModel,
    slds: Sequence[SLD],
    obstacle_points: np.ndarray,
    delta: float,
) -> tuple[list[SLD], frozenset[int]]:
    """Express discs and obstacle points in the placement's arm-root frame.

    Obstacles come back as a frozenset of packed voxel keys (see
    :mod:`baseplace.voxels`).
    """
    T = world_to_root(bp, model)
    R, t = T[:3, :3], T[:3, 3]
    moved = [SLD(id=s.id, center=R @ s.center + t, normal=R @ s.normal, radius=s.radius) for s in slds]
    return moved, obstacle_voxels(T, obstacle_points, delta)


def obstacle_voxels(world_to_root_T: np.ndarray, points, delta: float, reach: float | None = None) -> frozenset[int]:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return frozenset()
    local = pts @ world_to_root_T[:3, :3].T + world_to_root_T[:3, 3]
    if reach is not None:
        local = local[np.linalg.norm(local, axis=1) <= reach]
    return frozenset(pack_points(local, delta).tolist())


def write_placements_csv(placements, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for bp in placements:
            w.writerow([bp.id, repr(float(bp.x)), repr(float(bp.y)), repr(float(bp.theta))])


def read_placements_csv(path) -> list[BasePlacement]:
    with open(path, newline="") as fh:
        return [
            BasePlacement(int(r["id"]), float(r["x"]), float(r["y"]), float(r["theta"]))
            for r in csv.DictReader(fh)
        ]
