"""Offline reachability map over a discretised joint space.

Every configuration on a uniform joint grid that does not collide with the
arm itself becomes one record ``(p, q, n, W, occ)`` filed under the voxel
holding its flange position. Records are stored columnar, grouped by cell,
and inside a cell ordered by descending manipulability (ties broken by the
lexicographically smaller joint vector). Queries therefore only have to
walk a cell front to back.

Binary layout (all little endian)::

    header   magic "BPRM", u32 version, f64 delta, u32 steps_per_joint,
             u32 n_joints, u64 n_records, u64 n_cells, u64 n_occ,
             u64 enumerated, u64 self_colliding, 32-byte robot digest
    cells    i64[n_cells] packed cell keys, i64[n_cells + 1] record offsets
    records  f64[N,3] position, f64[N,n] q, f64[N,3] approach, f64[N] W,
             i64[N + 1] occupancy offsets, i64[n_occ] packed occupancy keys
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from baseplace.errors import InputError, MapMismatchError, SizingError
from baseplace.kinematics import (
    RobotModel,
    _TOOL_AXES,
    chain_frames,
    jacobian_from_frames,
    manipulability_from_jacobian,
    occupancy_batch,
)
from baseplace.voxels import pack, pack_points, to_tuples, voxel_index

logger = logging.getLogger(__name__)

MAGIC = b"BPRM"
VERSION = 1
_HEADER = struct.Struct("<4sIdIIQQQQQ32s")

DEFAULT_MAX_RECORDS = 5_000_000

__all__ = [
    "ApproachCluster",
    "ReachMap",
    "ReachRecord",
    "ReachSolution",
    "build_map",
    "kmeans_approach_clusters",
    "load_map",
    "query",
    "voxel_index",
]


@dataclass(frozen=True, eq=False)
class ReachRecord:
    p: np.ndarray
    q: np.ndarray
    n: np.ndarray
    W: float
    occ_keys: np.ndarray

    @property
    def occ(self) -> set[tuple[int, int, int]]:
        return to_tuples(self.occ_keys)


@dataclass(frozen=True, eq=False)
class ReachSolution:
    record: ReachRecord
    angular_error: float
    index: int


@dataclass(frozen=True, eq=False)
class ApproachCluster:
    centroid: np.ndarray
    members: np.ndarray


class ReachMap:
    """Immutable voxel-hashed table of reachable flange poses.

    Positions are in the arm-root frame. ``cell_range`` gives the slice of
    records filed under a packed cell key.
    """

    def __init__(
        self,
        delta,
        steps_per_joint,
        robot_hash,
        positions,
        configs,
        approaches,
        manip,
        occ_ptr,
        occ_keys,
        enumerated=0,
        self_colliding=0,
    ):
        if delta <= 0:
            raise InputError("voxel size must be positive")
        self.delta = float(delta)
        self.steps_per_joint = int(steps_per_joint)
        self.robot_hash = robot_hash
        self.positions = np.ascontiguousarray(positions, dtype=float)
        self.configs = np.ascontiguousarray(configs, dtype=float)
        self.approaches = np.ascontiguousarray(approaches, dtype=float)
        self.manip = np.ascontiguousarray(manip, dtype=float)
        self.occ_ptr = np.ascontiguousarray(occ_ptr, dtype=np.int64)
        self.occ_keys = np.ascontiguousarray(occ_keys, dtype=np.int64)
        self.enumerated = int(enumerated)
        self.self_colliding = int(self_colliding)
        for arr in (self.positions, self.configs, self.approaches, self.manip, self.occ_ptr, self.occ_keys):
            arr.setflags(write=False)

        keys = pack_points(self.positions, self.delta) if len(self.positions) else np.empty(0, np.int64)
        if np.any(np.diff(keys) < 0):
            raise InputError("records must be grouped by cell in ascending key order")
        self.cell_keys, starts = np.unique(keys, return_index=True)
        self.cell_starts = np.append(starts, len(keys)).astype(np.int64)
        self._cell_lookup = {int(k): i for i, k in enumerate(self.cell_keys)}
        self._clusters: dict = {}

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def n_joints(self) -> int:
        return self.configs.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.cell_keys)

    def cell_range(self, key: int) -> tuple[int, int] | None:
        i = self._cell_lookup.get(int(key))
        if i is None:
            return None
        return int(self.cell_starts[i]), int(self.cell_starts[i + 1])

    def occupancy(self, i: int) -> np.ndarray:
        return self.occ_keys[self.occ_ptr[i] : self.occ_ptr[i + 1]]

    def record(self, i: int) -> ReachRecord:
        return ReachRecord(
            p=self.positions[i],
            q=self.configs[i],
            n=self.approaches[i],
            W=float(self.manip[i]),
            occ_keys=self.occupancy(i),
        )

    def cell(self, abc) -> list[ReachRecord]:
        rng = self.cell_range(pack(abc))
        if rng is None:
            return []
        return [self.record(i) for i in range(*rng)]

    @property
    def cells(self) -> dict[tuple[int, int, int], list[ReachRecord]]:
        """Materialised ``{(a, b, c): [records]}``; meant for small maps."""
        out = {}
        from baseplace.voxels import unpack

        for key, (s, e) in zip(unpack(self.cell_keys), zip(self.cell_starts[:-1], self.cell_starts[1:])):
            out[tuple(int(v) for v in key)] = [self.record(i) for i in range(s, e)]
        return out

    def cell_clusters(self, key: int, k: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Cached approach clustering of one cell: ``(labels, centroids)``."""
        cache_key = (int(key), k, seed)
        hit = self._clusters.get(cache_key)
        if hit is None:
            s, e = self.cell_range(key)
            hit = _spherical_kmeans(self.approaches[s:e], k, seed)
            self._clusters[cache_key] = hit
        return hit

    def check_robot(self, model: RobotModel) -> None:
        if self.robot_hash != model.fingerprint():
            raise MapMismatchError("reachability map was built for a different robot")
        if self.n_joints != model.n_joints:
            raise MapMismatchError("reachability map joint count differs from robot")

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        digest = bytes.fromhex(self.robot_hash) if self.robot_hash else bytes(32)
        header = _HEADER.pack(
            MAGIC,
            VERSION,
            self.delta,
            self.steps_per_joint,
            self.n_joints,
            len(self),
            self.n_cells,
            len(self.occ_keys),
            self.enumerated,
            self.self_colliding,
            digest,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for arr, dt in (
                (self.cell_keys, "<i8"),
                (self.cell_starts, "<i8"),
                (self.positions, "<f8"),
                (self.configs, "<f8"),
                (self.approaches, "<f8"),
                (self.manip, "<f8"),
                (self.occ_ptr, "<i8"),
                (self.occ_keys, "<i8"),
            ):
                fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_map(path, model: RobotModel | None = None) -> ReachMap:
    """Read a map written by :meth:`ReachMap.save`.

    With ``model`` given, a map built for another robot raises
    :class:`MapMismatchError`.
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise MapMismatchError(f"{path}: not a reachability map file")
    (_, version, delta, steps, n_joints, n_rec, n_cells, n_occ, enumerated, colliding, digest) = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise MapMismatchError(f"{path}: unsupported map version {version}")
    offset = _HEADER.size

    def take(dtype, count, shape=None):
        nonlocal offset
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr.reshape(shape) if shape else arr

    cell_keys = take("<i8", n_cells)
    cell_starts = take("<i8", n_cells + 1)
    rmap = ReachMap(
        delta=delta,
        steps_per_joint=steps,
        robot_hash=digest.hex() if any(digest) else "",
        positions=take("<f8", n_rec * 3, (n_rec, 3)),
        configs=take("<f8", n_rec * n_joints, (n_rec, n_joints)),
        approaches=take("<f8", n_rec * 3, (n_rec, 3)),
        manip=take("<f8", n_rec),
        occ_ptr=take("<i8", n_rec + 1),
        occ_keys=take("<i8", n_occ),
        enumerated=enumerated,
        self_colliding=colliding,
    )
    if not (np.array_equal(rmap.cell_keys, cell_keys) and np.array_equal(rmap.cell_starts, cell_starts)):
        raise MapMismatchError(f"{path}: cell table does not match record positions")
    if model is not None:
        rmap.check_robot(model)
    return rmap


# -- construction -----------------------------------------------------------


def joint_grid(model: RobotModel, steps_per_joint: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, steps_per_joint) for lo, hi in model.joint_limits]


def _evaluate_chunk(model: RobotModel, grids, start: int, stop: int, delta: float):
    shape = tuple(len(g) for g in grids)
    idx = np.unravel_index(np.arange(start, stop), shape)
    Q = np.stack([g[i] for g, i in zip(grids, idx)], axis=1)
    frames = chain_frames(model, Q, "root")
    counts, keys, colliding = occupancy_batch(model, frames, delta)
    keep = ~colliding
    W = manipulability_from_jacobian(jacobian_from_frames(frames))
    ptr = np.concatenate([[0], np.cumsum(counts)])
    kept_rows = np.flatnonzero(keep)
    occ = [keys[ptr[r] : ptr[r + 1]] for r in kept_rows]
    tool = _TOOL_AXES[model.tool_axis]
    return (
        Q[keep],
        frames[keep, -1, :3, 3],
        frames[keep, -1, :3, tool],
        W[keep],
        counts[keep],
        np.concatenate(occ) if occ else np.empty(0, np.int64),
        int(colliding.sum()),
    )


def build_map(
    model: RobotModel,
    steps_per_joint: int,
    delta: float,
    max_records: int = DEFAULT_MAX_RECORDS,
    chunk_size: int = 20_000,
    workers: int = 1,
) -> ReachMap:
    """Enumerate the joint grid and file every self-collision-free pose.

    Joint values are ``linspace(lo, hi, steps_per_joint)`` per joint and the
    Cartesian product is walked in row-major order (joint 1 slowest).
    """
    if steps_per_joint < 2:
        raise InputError("steps_per_joint must be at least 2")
    if delta <= 0:
        raise InputError("voxel size must be positive")
    total = steps_per_joint**model.n_joints
    if total > max_records:
        raise SizingError(
            f"{steps_per_joint}^{model.n_joints} = {total} configurations exceeds the cap of {max_records}"
        )
    grids = joint_grid(model, steps_per_joint)
    bounds = [(s, min(s + chunk_size, total)) for s in range(0, total, chunk_size)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_chunk, model, grids, s, e, delta) for s, e in bounds]
            parts = [f.result() for f in futures]
    else:
        parts = [_evaluate_chunk(model, grids, s, e, delta) for s, e in bounds]

    Q = np.concatenate([p[0] for p in parts])
    P = np.concatenate([p[1] for p in parts])
    N = np.concatenate([p[2] for p in parts])
    W = np.concatenate([p[3] for p in parts])
    counts = np.concatenate([p[4] for p in parts])
    occ = np.concatenate([p[5] for p in parts])
    colliding = sum(p[6] for p in parts)

    cell = pack_points(P, delta)
    order = np.lexsort(tuple(Q[:, j] for j in range(Q.shape[1] - 1, -1, -1)) + (-W, cell))
    src_ptr = np.concatenate([[0], np.cumsum(counts)])
    new_counts = counts[order]
    occ_sorted = np.concatenate([occ[src_ptr[i] : src_ptr[i + 1]] for i in order]) if len(order) else occ
    logger.info("reachability map: %d enumerated, %d self-colliding, %d stored", total, colliding, len(order))
    return ReachMap(
        delta=delta,
        steps_per_joint=steps_per_joint,
        robot_hash=model.fingerprint(),
        positions=P[order],
        configs=Q[order],
        approaches=N[order],
        manip=W[order],
        occ_ptr=np.concatenate([[0], np.cumsum(new_counts)]),
        occ_keys=occ_sorted,
        enumerated=total,
        self_colliding=colliding,
    )


# -- approach clustering ---------------------------------------------------


def _angles(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(X @ C.T, -1.0, 1.0))


def _spherical_kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 50):
    X = np.asarray(X, dtype=float)
    m = len(X)
    if m <= k:
        return np.arange(m), X.copy()
    rng = np.random.default_rng(seed)
    centroids = [X[rng.integers(m)]]
    for _ in range(1, k):
        d2 = _angles(X, np.array(centroids)).min(axis=1) ** 2
        total = d2.sum()
        pick = rng.choice(m, p=d2 / total) if total > 0 else rng.integers(m)
        centroids.append(X[pick])
    C = np.array(centroids)
    labels = np.argmax(X @ C.T, axis=1)
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if not members.any():
                continue
            mean = X[members].sum(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 1e-12:
                C[j] = mean / norm
        new = np.argmax(X @ C.T, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
    # Final assignment against the final centroids, whatever stopped the loop.
    labels = np.argmax(X @ C.T, axis=1)
    return labels, C


def kmeans_approach_clusters(records, k: int, seed: int = 0, max_iter: int = 50) -> list[ApproachCluster]:
    """Cluster unit approach vectors by angular distance.

    ``records`` may be :class:`ReachRecord` objects or an ``(m, 3)`` array.
    Centroids are renormalised to unit length after every update; seeding is
    k-means++ with squared angular distance. Empty clusters are dropped.
    """
    if len(records) == 0:
        raise InputError("cannot cluster an empty record set")
    if k < 1:
        raise InputError("k must be at least 1")
    X = np.array([r.n for r in records]) if isinstance(records[0], ReachRecord) else np.asarray(records, float)
    labels, C = _spherical_kmeans(X, k, seed, max_iter)
    out = []
    for j in range(len(C)):
        members = np.flatnonzero(labels == j)
        if len(members):
            out.append(ApproachCluster(centroid=C[j].copy(), members=members))
    return out


# -- query -------------------------------------------------------------------


def query(
    rmap: ReachMap,
    sld_in_root,
    obstacle_voxels=frozenset(),
    k: int = 8,
    max_angle: float = math.radians(30.0),
    oppose_normal: bool = True,
    seed: int = 0,
) -> ReachSolution | None:
    """Best collision-free record for one disc already in the arm-root frame.

    The cell's records are clustered by approach direction; the cluster
    whose centroid is closest in angle to the target direction is walked in
    descending manipulability and the first record inside the admissible
    cone whose occupancy misses ``obstacle_voxels`` (packed keys) wins.
    The target direction is the reversed disc normal when
    ``oppose_normal`` is set, i.e. the tool pushes into the surface.
    """
    key = pack(voxel_index(sld_in_root.center, rmap.delta))
    rng = rmap.cell_range(key)
    if rng is None:
        return None
    start, _ = rng
    target = -np.asarray(sld_in_root.normal, float) if oppose_normal else np.asarray(sld_in_root.normal, float)
    labels, C = rmap.cell_clusters(key, k, seed)
    present = np.unique(labels)
    gaps = _angles(C[present], target[None, :])[:, 0]
    chosen = present[int(np.argmin(gaps))]
    members = np.flatnonzero(labels == chosen) + start
    errors = np.arccos(np.clip(rmap.approaches[members] @ target, -1.0, 1.0))
    for i, err in zip(members, errors):
        if err > max_angle:
            continue
        if obstacle_voxels and not obstacle_voxels.isdisjoint(rmap.occupancy(i).tolist()):
            continue
        return ReachSolution(record=rmap.record(int(i)), angular_error=float(err), index=int(i))
    return None
