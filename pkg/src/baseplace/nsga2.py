"""NSGA-II over fixed-length chromosomes of placement ids.

Each gene is a favoured placement id or 0 for "no placement", so a
chromosome of length G encodes between 0 and G placements. Objectives are
minimised as ``(-f1, f2, -f3)``. Every chromosome that enters a population
is kept free of repeated placements and of placements closer than
``min_spacing`` to each other.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from baseplace.errors import InputError, NoPlacementsError
from baseplace.objectives import ObjectiveVector
from baseplace.placement import BasePlacement

logger = logging.getLogger(__name__)

STATS_HEADER = ["generation", "mean_f1", "var_f1", "mean_f2", "var_f2", "mean_f3", "var_f3"]


@dataclass
class GAConfig:
    population_size: int = 40
    generations: int = 80
    genes_per_chromosome: int = 3
    mutation_probability: float = 0.6
    mutation_genes: int = 1
    tournament_size: int = 20
    min_spacing: float = 0.2
    rng_seed: int = 0
    init_attempts: int = 1000
    repair_attempts: int = 100

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise InputError("population_size must be even and at least 2")
        if self.generations < 1:
            raise InputError("generations must be at least 1")
        if self.genes_per_chromosome < 1:
            raise InputError("genes_per_chromosome must be at least 1")
        if not 1 <= self.tournament_size <= self.population_size:
            raise InputError("tournament_size must lie in [1, population_size]")
        if not 0.0 <= self.mutation_probability <= 1.0:
            raise InputError("mutation_probability must lie in [0, 1]")
        if self.min_spacing < 0:
            raise InputError("min_spacing must be non-negative")


@dataclass
class Individual:
    genes: tuple[int, ...]
    objectives: ObjectiveVector | None = None
    rank: int = 0
    crowding: float = 0.0

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.genes))

    @property
    def placement_count(self) -> int:
        return sum(1 for g in self.genes if g != 0)


@dataclass
class GenerationStats:
    generation: int
    mean: tuple[float, float, float]
    var: tuple[float, float, float]

    def row(self) -> list:
        return [self.generation, self.mean[0], self.var[0], self.mean[1], self.var[1], self.mean[2], self.var[2]]


@dataclass
class RunResult:
    front: list[Individual]
    stats: list[GenerationStats]
    population: list[Individual] = field(default_factory=list)


class FbpPool:
    """Favoured placements addressable by id, with the chromosome rules."""

    def __init__(self, fbps: Sequence[BasePlacement], min_spacing: float):
        if not fbps:
            raise NoPlacementsError("no favoured base placements to search over")
        self.ids = np.array([bp.id for bp in fbps], dtype=np.int64)
        if len(set(self.ids.tolist())) != len(self.ids):
            raise InputError("placement ids must be unique")
        self.xy = {bp.id: (bp.x, bp.y) for bp in fbps}
        self.min_spacing = float(min_spacing)

    def __contains__(self, gene: int) -> bool:
        return gene in self.xy

    def conflicts(self, gene: int, accepted: Sequence[int]) -> bool:
        x, y = self.xy[gene]
        for other in accepted:
            if other == gene:
                return True
            ox, oy = self.xy[other]
            if (x - ox) ** 2 + (y - oy) ** 2 < self.min_spacing**2:
                return True
        return False

    def is_valid(self, genes: Sequence[int]) -> bool:
        accepted = []
        for g in genes:
            if g == 0:
                continue
            if g not in self.xy or self.conflicts(g, accepted):
                return False
            accepted.append(g)
        return True

    def random_gene(self, rng: np.random.Generator, allow_zero: bool = True) -> int:
        if allow_zero:
            i = int(rng.integers(len(self.ids) + 1))
            return 0 if i == len(self.ids) else int(self.ids[i])
        return int(self.ids[rng.integers(len(self.ids))])


# -- dominance ---------------------------------------------------------------


def dominates(a, b) -> bool:
    """``a`` is no worse everywhere and strictly better somewhere (minimising)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return bool(np.all(a <= b) and np.any(a < b))


def _points(items) -> np.ndarray:
    if not len(items):
        return np.empty((0, 3))
    if isinstance(items[0], Individual):
        return np.array([ind.objectives.minimized for ind in items])
    return np.asarray(items, dtype=float).reshape(len(items), -1)


def non_dominated_sort(items) -> list[list[int]]:
    """Fronts of indices, best first (fast non-dominated sort).

    ``items`` are evaluated :class:`Individual` objects or rows of
    minimised objective values.
    """
    P = _points(items)
    n = len(P)
    if n == 0:
        return []
    le = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    lt = np.any(P[:, None, :] < P[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    dominated = [np.flatnonzero(row) for row in dom]
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(items) -> np.ndarray:
    """Crowding distance of each member of one front.

    Boundary members of every objective get infinity; a constant objective
    adds nothing to anyone.
    """
    P = _points(items)
    n = len(P)
    if n == 0:
        raise InputError("front is empty")
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for col in P.T:
        order = np.argsort(col, kind="stable")
        span = col[order[-1]] - col[order[0]]
        if span == 0:
            continue
        dist[order[0]] = dist[order[-1]] = np.inf
        dist[order[1:-1]] += (col[order[2:]] - col[order[:-2]]) / span
    return dist


# -- variation -----------------------------------------------------------------


def repair(genes, pool: FbpPool, rng: np.random.Generator, attempts: int = 100) -> tuple[int, ...]:
    """Resample genes that repeat or crowd an earlier placement.

    An offending gene is redrawn from the nonzero ids up to ``attempts``
    times and set to 0 if no draw fits.
    """
    accepted: list[int] = []
    out = []
    for g in genes:
        if g != 0 and (g not in pool or pool.conflicts(g, accepted)):
            g = 0
            for _ in range(attempts):
                cand = pool.random_gene(rng, allow_zero=False)
                if not pool.conflicts(cand, accepted):
                    g = cand
                    break
        if g != 0:
            accepted.append(g)
        out.append(g)
    return tuple(out)


def crossover(a, b, cut: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Single-point crossover; ``cut`` genes come from the first parent."""
    return tuple(a[:cut]) + tuple(b[cut:]), tuple(b[:cut]) + tuple(a[cut:])


def mutate(genes, pool: FbpPool, config: GAConfig, rng: np.random.Generator) -> tuple[int, ...]:
    genes = list(genes)
    if rng.random() < config.mutation_probability:
        count = min(config.mutation_genes, len(genes))
        for pos in rng.choice(len(genes), size=count, replace=False):
            genes[int(pos)] = pool.random_gene(rng)
    return tuple(genes)


def tournament(parents: Sequence[Individual], size: int, rng: np.random.Generator) -> Individual:
    picks = rng.choice(len(parents), size=size, replace=False)
    best = min(picks, key=lambda i: (parents[i].rank, -parents[i].crowding, i))
    return parents[int(best)]


def make_offspring(parents: Sequence[Individual], config: GAConfig, pool: FbpPool, rng) -> list[tuple[int, ...]]:
    G = config.genes_per_chromosome
    children: list[tuple[int, ...]] = []
    while len(children) < config.population_size:
        a = tournament(parents, config.tournament_size, rng)
        b = tournament(parents, config.tournament_size, rng)
        cut = int(rng.integers(1, G)) if G > 1 else 1
        for child in crossover(a.genes, b.genes, cut):
            child = mutate(child, pool, config, rng)
            children.append(repair(child, pool, rng, config.repair_attempts))
    return children[: config.population_size]


def random_chromosome(pool: FbpPool, config: GAConfig, rng) -> tuple[int, ...]:
    genes: tuple[int, ...] = ()
    for _ in range(config.init_attempts):
        genes = tuple(pool.random_gene(rng) for _ in range(config.genes_per_chromosome))
        if pool.is_valid(genes):
            return genes
    return repair(genes, pool, rng, config.repair_attempts)


# -- main loop -------------------------------------------------------------------


def _rank(pop: list[Individual]) -> list[list[int]]:
    fronts = non_dominated_sort(pop)
    for r, front in enumerate(fronts):
        cd = crowding_distance([pop[i] for i in front])
        for i, c in zip(front, cd):
            pop[i].rank, pop[i].crowding = r, float(c)
    return fronts


def select_survivors(merged: list[Individual], size: int) -> list[Individual]:
    """Fill ``size`` slots front by front, cutting the last by crowding."""
    chosen: list[Individual] = []
    for front in _rank(merged):
        members = [merged[i] for i in front]
        if len(chosen) + len(members) <= size:
            chosen.extend(members)
            continue
        order = sorted(range(len(members)), key=lambda i: -members[i].crowding)
        chosen.extend(members[i] for i in order[: size - len(chosen)])
        break
    return chosen


def population_stats(generation: int, pop: Sequence[Individual]) -> GenerationStats:
    F = np.array([[ind.objectives.f1, ind.objectives.f2, ind.objectives.f3] for ind in pop])
    return GenerationStats(generation, tuple(map(float, F.mean(axis=0))), tuple(map(float, F.var(axis=0))))


def run(
    config: GAConfig,
    fbps: Sequence[BasePlacement],
    evaluate: Callable[[tuple[int, ...]], ObjectiveVector],
    callback: Callable[[int, list[Individual]], None] | None = None,
) -> RunResult:
    """Evolve ``config.generations`` generations and return the final front.

    ``evaluate`` maps a gene tuple to its objectives; it must be pure, and
    it never sees the random stream. ``callback(generation, population)``
    runs after initialisation (generation 0) and after every generation.
    """
    pool = FbpPool(fbps, config.min_spacing)
    rng = np.random.default_rng(config.rng_seed)

    def evaluated(genes_list):
        return [Individual(g, evaluate(g)) for g in genes_list]

    pop = evaluated([random_chromosome(pool, config, rng) for _ in range(config.population_size)])
    _rank(pop)
    stats = [population_stats(0, pop)]
    if callback:
        callback(0, pop)
    for gen in range(1, config.generations + 1):
        children = evaluated(make_offspring(pop, config, pool, rng))
        pop = select_survivors(pop + children, config.population_size)
        _rank(pop)
        stats.append(population_stats(gen, pop))
        if callback:
            callback(gen, pop)
        logger.debug("generation %d: mean f1 %.4f", gen, stats[-1].mean[0])

    front, seen = [], set()
    for ind in sorted((i for i in pop if i.rank == 0), key=lambda i: (-i.objectives.f1, i.objectives.f2, i.key)):
        if ind.key not in seen:
            seen.add(ind.key)
            front.append(ind)
    return RunResult(front=front, stats=stats, population=pop)


# -- CSV -----------------------------------------------------------------------------


def write_stats_csv(stats: Sequence[GenerationStats], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_HEADER)
        for s in stats:
            w.writerow([s.generation, *(repr(float(v)) for v in s.row()[1:])])


def read_stats_csv(path) -> list[GenerationStats]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append(
                GenerationStats(
                    int(r["generation"]),
                    (float(r["mean_f1"]), float(r["mean_f2"]), float(r["mean_f3"])),
                    (float(r["var_f1"]), float(r["var_f2"]), float(r["var_f3"])),
                )
            )
    return out


def write_front_csv(front: Sequence[Individual], path) -> None:
    G = max((len(ind.genes) for ind in front), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"gene_{i}" for i in range(G)] + ["f1", "f2", "f3"])
        for ind in front:
            o = ind.objectives
            w.writerow([*ind.genes, repr(float(o.f1)), repr(float(o.f2)), repr(float(o.f3))])


def read_front_csv(path) -> list[Individual]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            genes = tuple(int(v) for k, v in r.items() if k.startswith("gene_"))
            out.append(Individual(genes, ObjectiveVector(float(r["f1"]), float(r["f2"]), float(r["f3"]))))
    return out
