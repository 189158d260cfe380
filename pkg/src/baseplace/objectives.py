"""Coverage, time and manipulability of a set of base placements.

For a placement set ``Z`` every disc is queried against the reachability
map from each placement; a disc reachable from several placements is
claimed by the one offering the highest manipulability (lower placement id
on ties) and counted once. Then

* coverage ``f1`` is the claimed fraction of discs,
* time ``f2`` is the summed shortest sweep path over each placement's
  claimed disc centres divided by the tool speed, plus ``(m - 1)``
  navigation legs,
* manipulability ``f3`` is the sum of ``W`` over all claimed solutions.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from baseplace.errors import InputError
from baseplace.kinematics import RobotModel
from baseplace.placement import BasePlacement, obstacle_voxels, world_to_root
from baseplace.reachmap import ReachMap, ReachSolution, query
from baseplace.sld import SLD, sweep_distance_matrix
from baseplace.tsp import HELD_KARP_MAX, held_karp_path


@dataclass(frozen=True)
class ObjectiveVector:
    f1: float
    f2: float
    f3: float
    approximate: bool = field(default=False, compare=False)

    @property
    def minimized(self) -> np.ndarray:
        return np.array([-self.f1, self.f2, -self.f3])


@dataclass
class ObjectiveParams:
    """Query and timing parameters shared by every evaluation.

    ``t_nav`` is the fixed time charged per navigation leg. With
    ``nav_mode="distance"`` it is replaced by the shortest open path through
    the placements divided by ``base_velocity``.
    """

    k: int = 8
    max_angle: float = math.radians(30.0)
    oppose_normal: bool = True
    kmeans_seed: int = 0
    v_ee: float = 0.1
    t_nav: float = 10.0
    base_velocity: float = 0.2
    nav_mode: str = "constant"
    held_karp_max: int = HELD_KARP_MAX

    def __post_init__(self):
        if self.v_ee <= 0 or self.base_velocity <= 0:
            raise InputError("velocities must be positive")
        if self.t_nav < 0:
            raise InputError("t_nav must be non-negative")
        if self.nav_mode not in ("constant", "distance"):
            raise InputError("nav_mode is 'constant' or 'distance'")


@dataclass
class Assignment:
    """Which placement claims each reachable disc.

    ``solutions`` maps disc id to ``(placement id, ReachSolution)``;
    ``visits`` maps every placement id of ``Z`` to its claimed disc ids.
    """

    solutions: dict[int, tuple[int, ReachSolution]]
    visits: dict[int, list[int]]
    placements: list[BasePlacement]
    centers: np.ndarray

    def reach_count(self, placement_id: int) -> int:
        return len(self.visits.get(placement_id, []))


@dataclass
class _Table:
    record: np.ndarray  # record index per disc, -1 when unreachable
    W: np.ndarray  # manipulability per disc, -inf when unreachable
    error: np.ndarray


class EvalContext:
    """Immutable scene and map plus the memo tables used during a search.

    Caches are keyed by placement pose and by the sorted placement set, so
    ``[3, 0, 12]`` and ``[12, 3, 0]`` share one evaluation.
    """

    def __init__(
        self,
        model: RobotModel,
        rmap: ReachMap,
        slds: Sequence[SLD],
        obstacle_points=None,
        params: ObjectiveParams | None = None,
        fbps: Sequence[BasePlacement] = (),
    ):
        if len(slds) == 0:
            raise InputError("need at least one SLD")
        self.model = model
        self.rmap = rmap
        self.slds = list(slds)
        self.params = params or ObjectiveParams()
        self.obstacle_points = np.empty((0, 3)) if obstacle_points is None else np.asarray(obstacle_points, float)
        self.fbps = {bp.id: bp for bp in fbps}
        self.centers = np.array([s.center for s in self.slds])
        self.normals = np.array([s.normal for s in self.slds])
        self.dist = sweep_distance_matrix(self.slds)
        self.map_reach = float(np.linalg.norm(rmap.positions, axis=1).max()) + 2 * rmap.delta if len(rmap) else 0.0
        self.arm_extent = model.max_stretch + float(model.link_radii.max()) + 2 * rmap.delta
        self._tables: dict = {}
        self._evals: dict = {}
        self._paths: dict = {}
        self._lock = threading.Lock()

    @property
    def n_slds(self) -> int:
        return len(self.slds)

    def placements(self, genes) -> list[BasePlacement]:
        return [self.fbps[g] for g in genes if g != 0]

    # -- per placement -----------------------------------------------------

    def table(self, bp: BasePlacement) -> _Table:
        key = bp.pose_key
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        T = world_to_root(bp, self.model)
        R, t = T[:3, :3], T[:3, 3]
        centers = self.centers @ R.T + t
        normals = self.normals @ R.T
        obstacles = obstacle_voxels(T, self.obstacle_points, self.rmap.delta, reach=self.arm_extent)
        C = self.n_slds
        record = np.full(C, -1, dtype=np.int64)
        W = np.full(C, -np.inf)
        error = np.full(C, np.nan)
        p = self.params
        near = np.flatnonzero(np.linalg.norm(centers, axis=1) <= self.map_reach)
        for j in near:
            sld = SLD(id=self.slds[j].id, center=centers[j], normal=normals[j], radius=self.slds[j].radius)
            sol = query(self.rmap, sld, obstacles, p.k, p.max_angle, p.oppose_normal, p.kmeans_seed)
            if sol is not None:
                record[j], W[j], error[j] = sol.index, sol.record.W, sol.angular_error
        table = _Table(record, W, error)
        with self._lock:
            self._tables.setdefault(key, table)
        return table

    # -- set evaluation -------------------------------------------------------

    def _claims(self, Z: Sequence[BasePlacement]):
        distinct = {}
        for bp in Z:
            distinct.setdefault(bp.pose_key, bp)
        ordered = sorted(distinct.values(), key=lambda bp: (bp.id, bp.pose_key))
        if not ordered:
            return ordered, np.full(self.n_slds, -1), np.full(self.n_slds, -np.inf), []
        tables = [self.table(bp) for bp in ordered]
        W = np.stack([tb.W for tb in tables])
        owner = np.argmax(W, axis=0)  # first maximum = lower id
        best = W[owner, np.arange(self.n_slds)]
        owner = np.where(np.isfinite(best), owner, -1)
        return ordered, owner, best, tables

    def _path_length(self, members: np.ndarray) -> tuple[float, bool]:
        if len(members) <= 1:
            return 0.0, True
        key = tuple(members.tolist())
        hit = self._paths.get(key)
        if hit is None:
            res = held_karp_path(self.dist[np.ix_(members, members)], self.params.held_karp_max)
            hit = (res.length, res.exact)
            with self._lock:
                self._paths.setdefault(key, hit)
        return hit

    def nav_time(self, placements: Sequence[BasePlacement]) -> float:
        m = len(placements)
        if m <= 1:
            return 0.0
        if self.params.nav_mode == "constant":
            return (m - 1) * self.params.t_nav
        xy = np.array([[bp.x, bp.y] for bp in placements])
        d = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
        return held_karp_path(d).length / self.params.base_velocity

    def evaluate(self, Z: Sequence[BasePlacement]) -> ObjectiveVector:
        ordered, owner, best, _ = self._claims(Z)
        key = tuple(bp.pose_key for bp in ordered)
        hit = self._evals.get(key)
        if hit is not None:
            return hit
        claimed = owner >= 0
        f1 = float(claimed.sum()) / self.n_slds
        f3 = float(best[claimed].sum()) if claimed.any() else 0.0
        sweep = 0.0
        exact = True
        for k in range(len(ordered)):
            length, ok = self._path_length(np.flatnonzero(owner == k))
            sweep += length
            exact &= ok
        f2 = sweep / self.params.v_ee + self.nav_time(ordered)
        result = ObjectiveVector(f1, f2, f3, approximate=not exact)
        with self._lock:
            self._evals.setdefault(key, result)
        return result

    def evaluate_genes(self, genes) -> ObjectiveVector:
        return self.evaluate(self.placements(genes))


def assign_slds(Z: Sequence[BasePlacement], ctx: EvalContext) -> Assignment:
    ordered, owner, _, tables = ctx._claims(Z)
    solutions = {}
    visits = {bp.id: [] for bp in ordered}
    for j, k in enumerate(owner):
        if k < 0:
            continue
        bp, tb = ordered[k], tables[k]
        idx = int(tb.record[j])
        sol = ReachSolution(record=ctx.rmap.record(idx), angular_error=float(tb.error[j]), index=idx)
        solutions[ctx.slds[j].id] = (bp.id, sol)
        visits[bp.id].append(ctx.slds[j].id)
    return Assignment(solutions=solutions, visits=visits, placements=ordered, centers=ctx.centers)


def coverage(assignment: Assignment, C: int) -> float:
    if C < 1:
        raise InputError("C must be at least 1")
    return len(assignment.solutions) / C


def time_cost(
    assignment: Assignment,
    v_ee: float,
    t_nav: float,
    m: int | None = None,
    held_karp_max: int = HELD_KARP_MAX,
) -> float:
    """Sweep time over every placement's claimed discs plus navigation.

    ``m`` defaults to the number of placements in the assignment, claimed
    discs or not.
    """
    if v_ee <= 0 or t_nav < 0:
        raise InputError("need v_ee > 0 and t_nav >= 0")
    if m is None:
        m = len(assignment.visits)
    sweep = 0.0
    for pid in sorted(assignment.visits):
        ids = assignment.visits[pid]
        if len(ids) <= 1:
            continue
        c = assignment.centers[ids]
        d = np.linalg.norm(c[:, None] - c[None], axis=-1)
        sweep += held_karp_path(d, held_karp_max).length
    return sweep / v_ee + max(m - 1, 0) * t_nav


def total_manipulability(assignment: Assignment) -> float:
    return float(sum(sol.record.W for _, sol in assignment.solutions.values()))


def evaluate(Z: Sequence[BasePlacement], ctx: EvalContext) -> ObjectiveVector:
    return ctx.evaluate(Z)
