"""Scene files and the bundled synthetic three-basin washbasin.

A scene file is YAML; relative paths resolve against the file's directory::

    name: three-basin-washbasin
    surface: surface.xyz          # "x y z nx ny nz" rows: the task surface
    obstacle_cloud: obstacles.xyz # optional, "x y z" (extra columns ignored)
    obstacles:                    # convex floor-plan polygons, world frame
      - [[0.0, 0.0], [1.3, 0.0], [1.3, 0.45], [0.0, 0.45]]
    sampling:
      x_range: [-0.4, 1.7]
      y_range: [-1.0, 0.0]
      xy_step: 0.05
      theta_step_deg: 90          # or theta_values_deg: [0, 90, 180, 270]
    reach: {min: 0.25, max: 0.7}  # max defaults to the arm's full stretch

``surface`` may instead be an inline mapping ``{points: [[x, y, z, nx, ny,
nz], ...]}``; ``obstacle_cloud`` likewise accepts ``{points: [[x, y, z],
...]}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from baseplace.errors import ConfigError
from baseplace.placement import PlanarPolygon, SamplingRegion
from baseplace.sld import OrientedPointCloud, load_point_cloud, save_point_cloud


@dataclass
class Scene:
    name: str
    surface: OrientedPointCloud
    obstacle_points: np.ndarray
    obstacles: list[PlanarPolygon]
    region: SamplingRegion
    reach_min: float = 0.25
    reach_max: float | None = None
    meta: dict = field(default_factory=dict)


def _theta_values(sampling: dict) -> tuple[float, ...]:
    if "theta_values_deg" in sampling:
        return tuple(math.radians(float(t)) for t in sampling["theta_values_deg"])
    step = float(sampling.get("theta_step_deg", 90.0))
    if step <= 0:
        raise ConfigError("theta_step_deg must be positive")
    count = int(round(360.0 / step))
    return tuple(math.radians(step * i) for i in range(count))


def _load_cloud(spec, base: Path, oriented: bool):
    if isinstance(spec, dict):
        data = np.asarray(spec["points"], dtype=float)
    else:
        path = base / spec
        if not path.is_file():
            raise ConfigError(f"scene references a missing file: {path}")
        if oriented:
            return load_point_cloud(path)
        data = np.loadtxt(path, ndmin=2)
    if oriented:
        return OrientedPointCloud(data[:, :3], data[:, 3:6])
    return data[:, :3]


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scene file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
        base = path.parent
        surface = _load_cloud(data["surface"], base, oriented=True)
        obstacle_points = (
            _load_cloud(data["obstacle_cloud"], base, oriented=False)
            if data.get("obstacle_cloud") is not None
            else np.empty((0, 3))
        )
        sampling = data["sampling"]
        region = SamplingRegion(
            x_range=tuple(map(float, sampling["x_range"])),
            y_range=tuple(map(float, sampling["y_range"])),
            xy_step=float(sampling["xy_step"]),
            theta_values=_theta_values(sampling),
        )
        reach = data.get("reach") or {}
        return Scene(
            name=data.get("name", path.stem),
            surface=surface,
            obstacle_points=obstacle_points,
            obstacles=[PlanarPolygon(p) for p in data.get("obstacles", [])],
            region=region,
            reach_min=float(reach.get("min", 0.25)),
            reach_max=None if reach.get("max") is None else float(reach["max"]),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"invalid scene file {path}: {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    """Write ``path`` plus ``<stem>_surface.xyz`` and ``<stem>_obstacles.xyz``."""
    path = Path(path)
    surface_file = f"{path.stem}_surface.xyz"
    save_point_cloud(scene.surface, path.parent / surface_file)
    doc = {
        "name": scene.name,
        "surface": surface_file,
        "obstacles": [p.vertices.tolist() for p in scene.obstacles],
        "sampling": {
            "x_range": list(scene.region.x_range),
            "y_range": list(scene.region.y_range),
            "xy_step": scene.region.xy_step,
            "theta_values_deg": [round(math.degrees(t), 9) for t in scene.region.theta_values],
        },
        "reach": {"min": scene.reach_min, "max": scene.reach_max},
    }
    if len(scene.obstacle_points):
        obstacle_file = f"{path.stem}_obstacles.xyz"
        np.savetxt(path.parent / obstacle_file, scene.obstacle_points, fmt="%.9g")
        doc["obstacle_cloud"] = obstacle_file
    path.write_text(yaml.safe_dump(doc, sort_keys=False))


def _grid(xs, ys):
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return X.ravel(), Y.ravel()


def washbasin_scene(
    width: float = 1.3,
    depth: float = 0.45,
    height: float = 0.8,
    basin_radius: float = 0.15,
    bevel: float = 0.03,
    spacing: float = 0.01,
    xy_step: float = 0.05,
) -> Scene:
    """Counter with three round basins along x, wall behind, cabinet below.

    The task surface is the counter top (normal +z) plus a bevelled ring
    sloping into each basin; basin interiors are not cleaned. The counter
    front edge runs along y = 0 and the wall along y = depth.
    """
    centers = [(width * (2 * i + 1) / 6, depth / 2) for i in range(3)]
    xs = np.arange(spacing / 2, width, spacing)
    ys = np.arange(spacing / 2, depth, spacing)
    X, Y = _grid(xs, ys)
    dist = np.full(X.shape, np.inf)
    nearest = np.zeros(X.shape, dtype=int)
    for i, (cx, cy) in enumerate(centers):
        d = np.hypot(X - cx, Y - cy)
        closer = d < dist
        dist[closer], nearest[closer] = d[closer], i
    top = dist >= basin_radius
    ring = (dist < basin_radius) & (dist >= basin_radius - bevel)
    slope = math.radians(20.0)

    pts = [np.stack([X[top], Y[top], np.full(top.sum(), height)], axis=1)]
    nrm = [np.tile([0.0, 0.0, 1.0], (top.sum(), 1))]
    cx = np.array([c[0] for c in centers])[nearest[ring]]
    cy = np.array([c[1] for c in centers])[nearest[ring]]
    rx, ry, rd = X[ring] - cx, Y[ring] - cy, dist[ring]
    z = height - (basin_radius - rd) * math.tan(slope)
    pts.append(np.stack([X[ring], Y[ring], z], axis=1))
    # Outward normal of a cone sloping down toward the basin centre.
    nrm.append(np.stack([-rx / rd * math.sin(slope), -ry / rd * math.sin(slope), np.full(ring.sum(), math.cos(slope))], axis=1))
    surface = OrientedPointCloud(np.concatenate(pts), np.concatenate(nrm))

    obstacle = []
    # Cabinet front, stopping short of the counter top.
    fx, fz = _grid(np.arange(0.0, width + 1e-9, 0.02), np.arange(0.0, height - 0.1 + 1e-9, 0.02))
    obstacle.append(np.stack([fx, np.full(fx.shape, -0.005), fz], axis=1))
    # Wall behind the counter.
    wx, wz = _grid(np.arange(-0.4, width + 0.4 + 1e-9, 0.02), np.arange(height + 0.02, height + 0.8 + 1e-9, 0.02))
    obstacle.append(np.stack([wx, np.full(wx.shape, depth + 0.01), wz], axis=1))
    # A tap behind each basin.
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    for bx, by in centers:
        tz = np.arange(height + 0.01, height + 0.16, 0.02)
        A, Z = np.meshgrid(ang, tz)
        tx = bx + 0.015 * np.cos(A.ravel())
        ty = depth - 0.04 + 0.015 * np.sin(A.ravel())
        obstacle.append(np.stack([tx, ty, Z.ravel()], axis=1))

    x_hi = round(width + 0.4, 9)
    obstacles = [
        PlanarPolygon.box(0.0, 0.0, width, depth),
        PlanarPolygon.box(-0.4, depth, x_hi, round(depth + 0.05, 9)),
    ]
    region = SamplingRegion(
        x_range=(-0.4, x_hi),
        y_range=(-1.0, 0.0),
        xy_step=xy_step,
        theta_values=tuple(math.radians(a) for a in (0.0, 90.0, 180.0, 270.0)),
    )
    return Scene(
        name="three-basin-washbasin",
        surface=surface,
        obstacle_points=np.concatenate(obstacle),
        obstacles=obstacles,
        region=region,
        reach_min=0.25,
        reach_max=0.7,
    )
