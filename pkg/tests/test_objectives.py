import itertools
import math

import numpy as np
import pytest

from baseplace.errors import InputError
from baseplace.kinematics import manipulability
from baseplace.objectives import (
    Assignment,
    EvalContext,
    ObjectiveParams,
    assign_slds,
    coverage,
    evaluate,
    time_cost,
    total_manipulability,
)
from baseplace.placement import BasePlacement, to_arm_frame
from baseplace.reachmap import ReachMap, ReachSolution, query
from baseplace.robots import planar_arm
from baseplace.sld import SLD
from baseplace.tsp import held_karp_path
from baseplace.voxels import pack_points

DELTA = 0.1
UP = np.array([0.0, 0.0, 1.0])


def make_map(entries):
    """ReachMap from ``(position, approach, W)`` triples, sorted like build_map."""
    P = np.array([e[0] for e in entries], float)
    N = np.array([e[1] for e in entries], float)
    W = np.array([e[2] for e in entries], float)
    Q = np.arange(len(entries), dtype=float)[:, None].repeat(2, axis=1)
    order = np.lexsort((Q[:, 1], Q[:, 0], -W, pack_points(P, DELTA)))
    return ReachMap(DELTA, 2, "", P[order], Q[order], N[order], W[order], np.zeros(len(W) + 1, np.int64), np.empty(0, np.int64))


def make_ctx(entries, slds, fbps=(), **params):
    return EvalContext(planar_arm([0.5, 0.5]), make_map(entries), slds, None, ObjectiveParams(**params), fbps=fbps)


def disc(i, x, y=0.05, z=0.05):
    return SLD(i, np.array([x, y, z]), UP, 0.04)


DOWN = (0.0, 0.0, -1.0)


def test_unreachable_disc_is_unassigned():
    ctx = make_ctx([((0.05, 0.05, 0.05), DOWN, 0.5)], [disc(0, 0.05), disc(1, 3.05)])
    a = assign_slds([BasePlacement(1, 0, 0, 0)], ctx)
    assert set(a.solutions) == {0}
    v = ctx.evaluate([BasePlacement(1, 0, 0, 0)])
    assert v.f1 == 0.5 and v.f3 == 0.5 and v.f2 == 0.0


def test_highest_manipulability_claims_the_disc():
    # Disc at world x=0.05 is in cell 0 from z1 and cell 10 from z2.
    entries = [((0.05, 0.05, 0.05), DOWN, 0.1), ((1.05, 0.05, 0.05), DOWN, 0.3)]
    ctx = make_ctx(entries, [disc(0, 0.05)])
    z1, z2 = BasePlacement(1, 0, 0, 0), BasePlacement(2, -1, 0, 0)
    a = assign_slds([z1, z2], ctx)
    assert a.solutions[0][0] == 2 and a.visits == {1: [], 2: [0]}
    assert ctx.evaluate([z1, z2]).f3 == pytest.approx(0.3)


def test_tie_goes_to_lower_id():
    entries = [((0.05, 0.05, 0.05), DOWN, 0.3), ((1.05, 0.05, 0.05), DOWN, 0.3)]
    ctx = make_ctx(entries, [disc(0, 0.05)])
    a = assign_slds([BasePlacement(7, -1, 0, 0), BasePlacement(3, 0, 0, 0)], ctx)
    assert a.solutions[0][0] == 3


def test_two_sided_scene_partitions_reachable_discs():
    # Each placement reaches discs within its own 0.3 m half only.
    entries = [((x + 0.05, 0.05, 0.05), DOWN, 0.2) for x in (0.0, 0.1, 0.2)]
    slds = [disc(i, x) for i, x in enumerate([0.05, 0.15, 0.25, 1.05, 1.15, 1.25, 5.0])]
    ctx = make_ctx(entries, slds)
    a = assign_slds([BasePlacement(1, 0, 0, 0), BasePlacement(2, 1.0, 0, 0)], ctx)
    assert a.visits == {1: [0, 1, 2], 2: [3, 4, 5]}
    reached = set(a.visits[1]) | set(a.visits[2])
    assert reached == set(a.solutions) and not set(a.visits[1]) & set(a.visits[2])


def _assignment(visits, centers, W=()):
    sols = {}
    for k, (sid, w) in enumerate(W):
        sols[sid] = (1, ReachSolution(record=type("R", (), {"W": w})(), angular_error=0.0, index=k))
    return Assignment(solutions=sols, visits=visits, placements=[], centers=np.asarray(centers, float))


def test_coverage_examples():
    assert coverage(_assignment({}, np.zeros((0, 3))), 10) == 0.0
    assert coverage(_assignment({1: [0, 1]}, np.zeros((2, 3)), [(0, 1.0), (1, 1.0)]), 2) == 1.0
    with pytest.raises(InputError):
        coverage(_assignment({}, np.zeros((0, 3))), 0)


def test_time_cost_examples():
    a = _assignment({1: [0, 1]}, [[0, 0, 0], [1, 0, 0]])
    assert time_cost(a, v_ee=0.1, t_nav=10.0) == pytest.approx(10.0)
    assert time_cost(_assignment({1: [], 2: []}, np.zeros((0, 3))), 0.1, 5.0) == 5.0
    with pytest.raises(InputError):
        time_cost(a, 0.0, 1.0)


def test_total_manipulability_examples():
    assert total_manipulability(_assignment({}, np.zeros((0, 3)))) == 0
    assert total_manipulability(_assignment({1: [0, 1]}, np.zeros((2, 3)), [(0, 0.2), (1, 0.3)])) == pytest.approx(0.5)


def test_placement_reaching_nothing():
    ctx = make_ctx([((0.05, 0.05, 0.05), DOWN, 0.5)], [disc(0, 4.0)])
    v = ctx.evaluate([BasePlacement(1, 0, 0, 0)])
    assert (v.f1, v.f2, v.f3) == (0.0, 0.0, 0.0)


def test_navigation_modes():
    slds = [disc(0, 9.0)]
    Z = [BasePlacement(1, 0, 0, 0), BasePlacement(2, 3, 4, 0)]
    assert make_ctx([((0.05, 0.05, 0.05), DOWN, 0.5)], slds, t_nav=7.0).evaluate(Z).f2 == 7.0
    dist = make_ctx([((0.05, 0.05, 0.05), DOWN, 0.5)], slds, nav_mode="distance", base_velocity=0.5)
    assert dist.evaluate(Z).f2 == pytest.approx(10.0)


# -- on the washbasin scene ------------------------------------------------------


def test_evaluation_is_deterministic_and_order_free(scene_ctx, six_fbps):
    ids = [bp.id for bp in six_fbps[:3]]
    a = scene_ctx.evaluate_genes((ids[0], 0, ids[2]))
    b = scene_ctx.evaluate_genes((ids[2], ids[0], 0))
    assert a == b
    fresh = EvalContext(scene_ctx.model, scene_ctx.rmap, scene_ctx.slds, scene_ctx.obstacle_points, fbps=six_fbps)
    assert fresh.evaluate_genes((ids[0], ids[2], 0)) == a


def _direct(Z, ctx):
    """Recompute the objectives from scratch with the public building blocks."""
    p = ctx.params
    best = {}
    for bp in sorted(Z, key=lambda b: b.id):
        moved, obstacles = to_arm_frame(bp, ctx.model, ctx.slds, ctx.obstacle_points, ctx.rmap.delta)
        for s in moved:
            sol = query(ctx.rmap, s, obstacles, p.k, p.max_angle, p.oppose_normal, p.kmeans_seed)
            if sol is not None and (s.id not in best or sol.record.W > best[s.id][1]):
                best[s.id] = (bp.id, sol.record.W)
    f1 = len(best) / len(ctx.slds)
    f3 = sum(w for _, w in best.values())
    sweep = 0.0
    for bp in Z:
        ids = [sid for sid, (pid, _) in sorted(best.items()) if pid == bp.id]
        if len(ids) > 1:
            c = ctx.centers[ids]
            sweep += held_karp_path(np.linalg.norm(c[:, None] - c[None], axis=-1)).length
    return f1, sweep / p.v_ee + max(len(Z) - 1, 0) * p.t_nav, f3


def test_exhaustive_small_instance_matches_direct_recomputation(scene_ctx, six_fbps):
    for size in (1, 2):
        for Z in itertools.combinations(six_fbps, size):
            v = scene_ctx.evaluate(list(Z))
            f1, f2, f3 = _direct(list(Z), scene_ctx)
            assert v.f1 == f1
            assert v.f2 == pytest.approx(f2, rel=1e-12)
            assert v.f3 == pytest.approx(f3, rel=1e-12)


def test_f3_matches_recomputed_manipulability(scene_ctx, six_fbps):
    a = assign_slds(six_fbps[:3], scene_ctx)
    recomputed = sum(manipulability(scene_ctx.model, sol.record.q) for _, sol in a.solutions.values())
    assert total_manipulability(a) == pytest.approx(recomputed, abs=1e-9)
    assert scene_ctx.evaluate(six_fbps[:3]).f3 == pytest.approx(recomputed, abs=1e-9)


def test_assignment_invariants(scene_ctx, six_fbps):
    Z = six_fbps[:3]
    a = assign_slds(Z, scene_ctx)
    ids = {bp.id for bp in Z}
    assert all(pid in ids for pid, _ in a.solutions.values())
    flat = [sid for v in a.visits.values() for sid in v]
    assert sorted(flat) == sorted(a.solutions)
    for sol in (s for _, s in a.solutions.values()):
        assert 0 <= sol.angular_error <= scene_ctx.params.max_angle


def test_f2_decomposition(scene_ctx, six_fbps):
    m = scene_ctx.model
    Z = six_fbps[:3]
    base = scene_ctx.evaluate(Z)
    no_nav = EvalContext(m, scene_ctx.rmap, scene_ctx.slds, scene_ctx.obstacle_points, ObjectiveParams(t_nav=0.0))
    fast = EvalContext(m, scene_ctx.rmap, scene_ctx.slds, scene_ctx.obstacle_points, ObjectiveParams(v_ee=1e12))
    sweep = no_nav.evaluate(Z).f2
    assert base.f2 == pytest.approx(sweep + 2 * scene_ctx.params.t_nav)
    assert fast.evaluate(Z).f2 == pytest.approx(2 * scene_ctx.params.t_nav)


def test_coverage_is_monotone(scene_ctx, scene_fbps, rng):
    for _ in range(30):
        Z = [scene_fbps[i] for i in rng.choice(len(scene_fbps), size=int(rng.integers(0, 4)), replace=False)]
        z = scene_fbps[int(rng.integers(len(scene_fbps)))]
        assert scene_ctx.evaluate(Z + [z]).f1 >= scene_ctx.evaluate(Z).f1


def test_params_validation():
    with pytest.raises(InputError):
        ObjectiveParams(v_ee=0)
    with pytest.raises(InputError):
        ObjectiveParams(t_nav=-1)
    with pytest.raises(InputError):
        ObjectiveParams(nav_mode="teleport")
    assert evaluate([], make_ctx([((0.05, 0.05, 0.05), DOWN, 0.5)], [disc(0, 0.05)])).f1 == 0.0
    assert math.isclose(ObjectiveParams().max_angle, math.radians(30))
