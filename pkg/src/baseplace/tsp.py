"""Shortest open Hamiltonian path through a set of points.

The sweep over a placement's discs starts and ends anywhere, so there is no
return leg. Exact solutions come from Held-Karp subset dynamic programming
with a virtual depot joined to every node at zero cost; larger instances
fall back to nearest-neighbour construction improved by 2-opt.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from baseplace.errors import InputError

HELD_KARP_MAX = 18


class PathResult(NamedTuple):
    order: list[int]
    length: float
    exact: bool


def path_length(dist, order) -> float:
    """Left-to-right sum of consecutive edge lengths, starting from 0.0."""
    total = 0.0
    for a, b in zip(order[:-1], order[1:]):
        total += dist[a][b]
    return float(total)


def _check(dist) -> np.ndarray:
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InputError("distance matrix must be square")
    if d.shape[0] == 0:
        raise InputError("need at least one node")
    return d


def held_karp_path(dist, max_exact: int = HELD_KARP_MAX) -> PathResult:
    """Minimum-length open path visiting every node once.

    Exact for ``n <= max_exact``; otherwise nearest neighbour + 2-opt with
    ``exact=False`` on the result.
    """
    d = _check(dist)
    n = len(d)
    if n == 1:
        return PathResult([0], 0.0, True)
    if n > max_exact:
        return two_opt_path(d)

    full = 1 << n
    cost = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int64)
    singles = 1 << np.arange(n)
    cost[singles, np.arange(n)] = 0.0

    masks = np.arange(full)
    popcount = np.zeros(full, dtype=np.int64)
    for j in range(n):
        popcount += (masks >> j) & 1
    for size in range(2, n + 1):
        layer = masks[popcount == size]
        for j in range(n):
            with_j = layer[(layer >> j) & 1 == 1]
            prev = with_j ^ (1 << j)
            cand = cost[prev] + d[:, j]
            best = np.argmin(cand, axis=1)
            cost[with_j, j] = cand[np.arange(len(with_j)), best]
            parent[with_j, j] = best

    last = int(np.argmin(cost[full - 1]))
    length = float(cost[full - 1, last])
    order = []
    mask = full - 1
    while last != -1:
        order.append(last)
        nxt = int(parent[mask, last])
        mask ^= 1 << last
        last = nxt
    order.reverse()
    return PathResult(order, length, True)


def two_opt_path(dist) -> PathResult:
    """Nearest-neighbour path from node 0, then best-improvement 2-opt."""
    d = _check(dist)
    n = len(d)
    if n == 1:
        return PathResult([0], 0.0, False)

    order = [0]
    free = np.ones(n, dtype=bool)
    free[0] = False
    for _ in range(n - 1):
        row = np.where(free, d[order[-1]], np.inf)
        nxt = int(np.argmin(row))
        order.append(nxt)
        free[nxt] = False

    # A zero-cost depot at both ends turns the open path into a fixed-end
    # path, so plain segment reversal covers endpoint moves too.
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = d
    path = np.array([n] + order + [n])
    iu = np.triu_indices(n + 1, k=1)
    while True:
        a, b = path[:-1], path[1:]
        edge = aug[a, b]
        gain = aug[a[:, None], a[None, :]] + aug[b[:, None], b[None, :]] - edge[:, None] - edge[None, :]
        vals = gain[iu]
        k = int(np.argmin(vals))
        if vals[k] >= -1e-12:
            break
        i, j = iu[0][k], iu[1][k]
        path[i + 1 : j + 1] = path[i + 1 : j + 1][::-1].copy()
    order = [int(v) for v in path[1:-1]]
    return PathResult(order, path_length(d, order), False)
