import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baseplace.errors import InputError
from baseplace.kinematics import RobotModel, pose_matrix
from baseplace.placement import (
    BasePlacement,
    PlanarPolygon,
    SamplingRegion,
    filter_fbps,
    footprint_at,
    polygons_intersect,
    read_placements_csv,
    reach_distance,
    root_pose_matrix,
    sample_candidates,
    to_arm_frame,
    wrap_angle,
    write_placements_csv,
)
from baseplace.robots import desk_arm_4dof, planar_arm, square_footprint
from baseplace.sld import SLD
from baseplace.voxels import pack, voxel_index


def _square(x, y, side=1.0):
    return PlanarPolygon.box(x, y, x + side, y + side)


def test_sample_candidates_examples():
    got = sample_candidates(SamplingRegion((0, 0.1), (0, 0), 0.05, (0.0,)))
    assert [(bp.id, bp.x) for bp in got] == [(1, 0.0), (2, 0.05), (3, 0.1)]
    assert sample_candidates(SamplingRegion((0, 0.1), (0, 0), 0.05, ())) == []


def test_sample_candidates_order():
    got = sample_candidates(SamplingRegion((0, 0.05), (0, 0.05), 0.05, (0.0, math.pi)))
    assert [(bp.x, bp.y, bp.theta) for bp in got[:3]] == [(0.0, 0.0, 0.0), (0.0, 0.0, math.pi), (0.05, 0.0, 0.0)]
    assert [bp.id for bp in got] == list(range(1, 9))


def test_region_validation():
    with pytest.raises(InputError):
        SamplingRegion((0, 1), (0, 1), 0.0, (0.0,))
    with pytest.raises(InputError):
        SamplingRegion((1, 0), (0, 1), 0.1, (0.0,))


def test_placement_id_and_theta():
    with pytest.raises(InputError):
        BasePlacement(0, 0, 0, 0)
    assert BasePlacement(1, 0, 0, -math.pi / 2).theta == pytest.approx(3 * math.pi / 2)
    assert 0 <= wrap_angle(2 * math.pi) < 2 * math.pi


def test_polygon_examples():
    assert not polygons_intersect(_square(0, 0), _square(3, 0))
    assert polygons_intersect(_square(0, 0), _square(0.5, 0.5))
    assert polygons_intersect(_square(0, 0), _square(1, 0))  # shared edge


def _point_in(poly, p):
    v = poly.vertices
    e = np.roll(v, -1, axis=0) - v
    rel = p - v
    return bool(np.all(e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0] >= -1e-12))


def test_shared_edge_midpoints_lie_in_both():
    a, b = _square(0, 0), _square(1, 0)
    mid = np.array([1.0, 0.5])
    assert _point_in(a, mid) and _point_in(b, mid)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * math.pi),
    st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * math.pi),
)
def test_sat_symmetric_and_agrees_with_sampling(x1, y1, t1, x2, y2, t2):
    base = PlanarPolygon([[-0.5, -0.3], [0.5, -0.3], [0.6, 0.2], [-0.4, 0.4]])
    a, b = base.transformed(x1, y1, t1), base.transformed(x2, y2, t2)
    hit = polygons_intersect(a, b)
    assert hit == polygons_intersect(b, a)
    # A vertex of one inside the other proves an intersection.
    if any(_point_in(a, v) for v in b.vertices) or any(_point_in(b, v) for v in a.vertices):
        assert hit


def test_filter_rules(scene, scene_slds, desk_model):
    model = desk_model
    centers = np.array([s.center[:2] for s in scene_slds])
    inside = BasePlacement(1, 0.6, 0.2, 0.0)  # on the counter
    far = BasePlacement(2, 0.6, -10.0, 0.0)
    kept = filter_fbps([inside, far], model, scene.obstacles, scene_slds, 0.25, 0.7)
    assert kept == []
    cands = sample_candidates(scene.region)
    fbps = filter_fbps(cands, model, scene.obstacles, scene_slds, scene.reach_min, scene.reach_max)
    ids = {bp.id for bp in fbps}
    assert ids <= {bp.id for bp in cands}
    assert [bp.id for bp in fbps] == sorted(ids)
    for bp in fbps:
        fp = footprint_at(bp, model)
        assert not any(polygons_intersect(fp, ob) for ob in scene.obstacles)
        assert 0.25 <= reach_distance(bp, model, centers) <= 0.7


def test_filter_rejects_reach_beyond_stretch(scene, scene_slds, desk_model):
    with pytest.raises(InputError):
        filter_fbps([], desk_model, [], scene_slds, 0.25, desk_model.max_stretch + 1)
    with pytest.raises(InputError):
        filter_fbps([], desk_model, [], scene_slds, 0.5, 0.4)


def test_empty_filter_logs_warning(caplog, desk_model, scene_slds):
    far = BasePlacement(1, 50.0, 50.0, 0.0)
    assert filter_fbps([far], desk_model, [], scene_slds, 0.25, 0.7) == []
    assert "no favoured" in caplog.text


def _bare_arm():
    return planar_arm([0.5, 0.5])


def test_to_arm_frame_identity():
    s = SLD(0, np.array([0.3, 0.2, 0.1]), np.array([0.0, 0.0, 1.0]), 0.04)
    moved, _ = to_arm_frame(BasePlacement(1, 0, 0, 0), _bare_arm(), [s], np.empty((0, 3)), 0.05)
    assert np.allclose(moved[0].center, s.center) and np.allclose(moved[0].normal, s.normal)


def test_to_arm_frame_translation():
    _, occ = to_arm_frame(BasePlacement(1, 1, 0, 0), _bare_arm(), [], np.array([[1.0, 0.0, 0.0]]), 0.05)
    assert occ == frozenset({pack((0, 0, 0))})


def test_to_arm_frame_rotation():
    s = SLD(0, np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.04)
    moved, _ = to_arm_frame(BasePlacement(1, 0, 0, math.pi / 2), _bare_arm(), [s], np.empty((0, 3)), 0.05)
    assert np.allclose(moved[0].center, [0, -1, 0], atol=1e-12)
    assert np.allclose(moved[0].normal, [0, -1, 0], atol=1e-12)


def test_to_arm_frame_inverse_restores(rng):
    model = desk_arm_4dof()
    slds = [SLD(i, rng.random(3), np.array([0, 0, 1.0]), 0.04) for i in range(10)]
    bp = BasePlacement(5, 0.3, -0.4, 1.1)
    moved, _ = to_arm_frame(bp, model, slds, np.empty((0, 3)), 0.05)
    T = root_pose_matrix(bp, model)
    for a, b in zip(slds, moved):
        assert np.allclose(T[:3, :3] @ b.center + T[:3, 3], a.center, atol=1e-9)


def test_to_arm_frame_obstacles_match_voxel_index(rng):
    model = desk_arm_4dof()
    bp = BasePlacement(3, 0.1, 0.2, 0.7)
    pts = rng.random((30, 3))
    _, occ = to_arm_frame(bp, model, [], pts, 0.05)
    Tinv = np.linalg.inv(root_pose_matrix(bp, model))
    expected = {pack(voxel_index(Tinv[:3, :3] @ p + Tinv[:3, 3], 0.05)) for p in pts}
    assert occ == expected


def test_placements_csv_roundtrip(tmp_path):
    ps = [BasePlacement(i + 1, 0.05 * i, -0.1 * i, 0.3 * i) for i in range(5)]
    write_placements_csv(ps, tmp_path / "p.csv")
    assert read_placements_csv(tmp_path / "p.csv") == ps
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "id,x,y,theta"


def test_footprint_follows_placement():
    model = RobotModel(
        dh=[[0.1, 0, 0, 0]], joint_limits=[(-1, 1)], link_radii=[0.01],
        base_footprint=square_footprint(0.2), mount_pose=pose_matrix((0.2, 0, 0)),
    )
    fp = footprint_at(BasePlacement(1, 1.0, 2.0, math.pi / 2), model)
    assert np.allclose(fp.vertices.mean(axis=0), [1.0, 2.0])
    assert np.allclose(root_pose_matrix(BasePlacement(1, 1.0, 2.0, math.pi / 2), model)[:2, 3], [1.0, 2.2])
