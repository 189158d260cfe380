"""Greedy local refinement of an optimised placement set.

Each placement in turn is moved over a small grid around its current pose
and the best strictly improving variant is kept; sweeps repeat until a full
pass changes nothing. Variants are free to leave the candidate grid but must
pass the same footprint, reach and spacing checks as favoured placements.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from baseplace.errors import InputError
from baseplace.objectives import EvalContext, ObjectiveVector
from baseplace.placement import BasePlacement, PlanarPolygon, is_favoured

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FineTuneConfig:
    radius: float = 0.15
    xy_step: float = 0.025
    theta_step: float = math.radians(15.0)
    theta_window: float = math.radians(15.0)
    max_sweeps: int = 20

    def __post_init__(self):
        if self.xy_step <= 0 or self.theta_step <= 0:
            raise InputError("fine-tuning steps must be positive")
        if self.radius < self.xy_step:
            raise InputError("radius must be at least xy_step")
        if self.theta_window < 0 or self.max_sweeps < 1:
            raise InputError("theta_window must be >= 0 and max_sweeps >= 1")

    def offsets(self) -> list[tuple[float, float, float]]:
        """Grid of (dx, dy, dtheta), the null move first."""
        n_xy = int(math.floor(self.radius / self.xy_step + 1e-9))
        n_th = int(math.floor(self.theta_window / self.theta_step + 1e-9))
        xy = [i * self.xy_step for i in range(-n_xy, n_xy + 1)]
        th = [i * self.theta_step for i in range(-n_th, n_th + 1)]
        out = [(0.0, 0.0, 0.0)]
        out += [(dx, dy, dt) for dx in xy for dy in xy for dt in th if (dx, dy, dt) != (0.0, 0.0, 0.0)]
        return out


@dataclass
class PlacementRules:
    """Validity predicates a refined placement must keep satisfying."""

    obstacles: Sequence[PlanarPolygon]
    reach_min: float
    reach_max: float
    min_spacing: float = 0.2


@dataclass
class FineTuneResult:
    placements: list[BasePlacement]
    objectives: ObjectiveVector
    initial: ObjectiveVector
    sweeps: int
    moves: int


def score(v: ObjectiveVector) -> tuple[float, float, float]:
    """Coverage first, then manipulability, then shorter time."""
    return (v.f1, v.f3, -v.f2)


def _valid(bp: BasePlacement, others: Sequence[BasePlacement], ctx: EvalContext, rules: PlacementRules, centers_xy) -> bool:
    for o in others:
        if math.hypot(bp.x - o.x, bp.y - o.y) < rules.min_spacing:
            return False
    return is_favoured(bp, ctx.model, rules.obstacles, centers_xy, rules.reach_min, rules.reach_max)


def local_search(
    Z: Sequence[BasePlacement],
    ctx: EvalContext,
    rules: PlacementRules,
    config: FineTuneConfig | None = None,
) -> FineTuneResult:
    """Coordinate-wise hill climb on ``score``; never returns a worse set."""
    if not Z:
        raise InputError("nothing to fine-tune")
    config = config or FineTuneConfig()
    centers_xy = ctx.centers[:, :2]
    offsets = config.offsets()
    current = list(Z)
    best = ctx.evaluate(current)
    initial = best
    sweeps = moves = 0
    improved = True
    while improved and sweeps < config.max_sweeps:
        improved = False
        sweeps += 1
        for k in range(len(current)):
            base = current[k]
            others = current[:k] + current[k + 1 :]
            pick = None
            for dx, dy, dt in offsets[1:]:
                cand = BasePlacement(base.id, round(base.x + dx, 9), round(base.y + dy, 9), base.theta + dt)
                if not _valid(cand, others, ctx, rules, centers_xy):
                    continue
                v = ctx.evaluate(others[:k] + [cand] + others[k:])
                if score(v) > score(best):
                    best, pick = v, cand
            if pick is not None:
                current[k] = pick
                improved = True
                moves += 1
                logger.debug("moved placement %d to (%.3f, %.3f, %.3f)", pick.id, pick.x, pick.y, pick.theta)
    return FineTuneResult(placements=current, objectives=best, initial=initial, sweeps=sweeps, moves=moves)


def perturb(Z: Sequence[BasePlacement], rng: np.random.Generator, scale: float = 0.1) -> list[BasePlacement]:
    """Jitter every placement by up to ``scale`` metres in x and y."""
    return [
        BasePlacement(bp.id, bp.x + rng.uniform(-scale, scale), bp.y + rng.uniform(-scale, scale), bp.theta)
        for bp in Z
    ]
