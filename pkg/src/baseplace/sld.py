"""Scale-like discs: circular patches that tile a task surface.

A surface arrives as an oriented point cloud. Disc centres are picked by
greedy farthest-point selection until every cloud point lies within the
disc radius of some centre; each disc normal is the renormalised mean of
the cloud normals inside that radius.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from baseplace.errors import InputError

CSV_HEADER = ["id", "x", "y", "z", "nx", "ny", "nz", "r"]


@dataclass(frozen=True, eq=False)
class SLD:
    id: int
    center: np.ndarray
    normal: np.ndarray
    radius: float


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            raise InputError("point cloud is empty")
        if len(pts) != len(nrm):
            raise InputError("points and normals differ in length")
        lens = np.linalg.norm(nrm, axis=1)
        if np.any(lens == 0):
            raise InputError("normals must be nonzero")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm / lens[:, None])

    def __len__(self) -> int:
        return len(self.points)


def decompose_surface(cloud: OrientedPointCloud, r: float) -> list[SLD]:
    """Cover ``cloud`` with discs of radius ``r``.

    The first centre is point 0; each further centre is the point farthest
    from all centres chosen so far (lowest index on ties).
    """
    if r <= 0:
        raise InputError("SLD radius must be positive")
    pts, nrm = cloud.points, cloud.normals
    nearest = np.full(len(pts), np.inf)
    seeds = []
    seed = 0
    while True:
        seeds.append(seed)
        nearest = np.minimum(nearest, np.linalg.norm(pts - pts[seed], axis=1))
        seed = int(np.argmax(nearest))
        if nearest[seed] <= r:
            break
    slds = []
    for i, s in enumerate(seeds):
        inside = np.linalg.norm(pts - pts[s], axis=1) <= r
        mean = nrm[inside].sum(axis=0)
        norm = np.linalg.norm(mean)
        normal = mean / norm if norm > 1e-9 * inside.sum() else nrm[s].copy()
        slds.append(SLD(id=i, center=pts[s].copy(), normal=normal, radius=float(r)))
    return slds


def sweep_distance_matrix(slds) -> np.ndarray:
    """Pairwise Euclidean distances between disc centres."""
    if len(slds) == 0:
        raise InputError("need at least one SLD")
    c = np.array([s.center for s in slds], dtype=float)
    diff = c[:, None, :] - c[None, :, :]
    d = np.sqrt((diff**2).sum(axis=-1))
    # Exact symmetry regardless of summation order.
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d


def load_point_cloud(path) -> OrientedPointCloud:
    """Read ``x y z nx ny nz`` rows (whitespace separated, ``#`` comments)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 6:
        raise InputError(f"{path}: expected 6 columns, found {data.shape[1]}")
    return OrientedPointCloud(data[:, :3], data[:, 3:])


def save_point_cloud(cloud: OrientedPointCloud, path) -> None:
    np.savetxt(path, np.hstack([cloud.points, cloud.normals]), fmt="%.9g")


def write_slds_csv(slds, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in slds:
            w.writerow([s.id, *map(repr, map(float, s.center)), *map(repr, map(float, s.normal)), repr(s.radius)])


def read_slds_csv(path) -> list[SLD]:
    out = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                SLD(
                    id=int(row["id"]),
                    center=np.array([float(row[k]) for k in "xyz"]),
                    normal=np.array([float(row[k]) for k in ("nx", "ny", "nz")]),
                    radius=float(row["r"]),
                )
            )
    return out
