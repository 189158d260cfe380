"""Shared fixtures: the desk arm, its reachability map and the washbasin scene.

The 20-step desk map takes a while to enumerate, so it is written to the
pytest cache directory and reused by later sessions when the robot and grid
are unchanged.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from baseplace.objectives import EvalContext, ObjectiveParams
from baseplace.pipeline import map_cache_key
from baseplace.placement import filter_fbps, sample_candidates
from baseplace.reachmap import build_map, load_map
from baseplace.robots import desk_arm_4dof
from baseplace.scene import washbasin_scene
from baseplace.sld import decompose_surface

DESK_STEPS = 20
DESK_DELTA = 0.05
SLD_RADIUS = 0.04


def _cached_map(cache_dir, model, steps, delta):
    path = cache_dir / f"rm_{map_cache_key(model, delta, steps)}.bprm"
    if path.is_file():
        return load_map(path, model), path
    workers = int(os.environ.get("BASEPLACE_WORKERS", "1"))
    rmap = build_map(model, steps, delta, workers=workers)
    rmap.save(path)
    return rmap, path


@pytest.fixture(scope="session")
def map_cache_dir(request, tmp_path_factory):
    cache = getattr(request.config, "cache", None)
    if cache is None:
        return tmp_path_factory.mktemp("maps")
    return cache.mkdir("baseplace-maps")


@pytest.fixture(scope="session")
def desk_model():
    return desk_arm_4dof()


@pytest.fixture(scope="session")
def desk_map_and_path(map_cache_dir, desk_model):
    return _cached_map(map_cache_dir, desk_model, DESK_STEPS, DESK_DELTA)


@pytest.fixture(scope="session")
def desk_map(desk_map_and_path):
    return desk_map_and_path[0]


@pytest.fixture(scope="session")
def scene():
    return washbasin_scene()


@pytest.fixture(scope="session")
def scene_slds(scene):
    return decompose_surface(scene.surface, SLD_RADIUS)


@pytest.fixture(scope="session")
def scene_fbps(scene, scene_slds, desk_model):
    candidates = sample_candidates(scene.region)
    return filter_fbps(candidates, desk_model, scene.obstacles, scene_slds, scene.reach_min, scene.reach_max)


@pytest.fixture(scope="session")
def scene_ctx(desk_model, desk_map, scene, scene_slds, scene_fbps):
    """Evaluation context shared by every test on the washbasin scene.

    Its caches only ever hold pure function values, so sharing is safe.
    """
    return EvalContext(desk_model, desk_map, scene_slds, scene.obstacle_points, ObjectiveParams(), fbps=scene_fbps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def six_fbps(scene_ctx, scene_fbps):
    """Six well-separated placements that each reach a fair share of discs.

    Greedy by single-placement coverage, skipping anything within 0.3 m of
    an earlier pick.
    """
    cov = [(-float(np.isfinite(scene_ctx.table(bp).W).mean()), bp.id, bp) for bp in scene_fbps]
    picked = []
    for _, _, bp in sorted(cov, key=lambda t: t[:2]):
        if all(np.hypot(bp.x - o.x, bp.y - o.y) >= 0.3 for o in picked):
            picked.append(bp)
        if len(picked) == 6:
            break
    return picked
