import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapfuse.exceptions import (
    DegenerateGeometryError,
    InsufficientMatchesError,
    InvalidTransformError,
)
from mapfuse.geometry import (
    WORLD_INDEX,
    FrameId,
    PointCloud,
    Rotation,
    SE3Transform,
    Sim3Transform,
    as_sim3,
    compose,
    compose_all,
    concat_clouds,
    inverse,
    project_to_so3,
    relative,
    rigid_alignment,
    scale_translation,
    skew,
    transform_cloud,
    transform_point,
    transform_points,
    umeyama_alignment,
)

TOL = 1e-8


def random_sim3(rng, scale_range=(0.2, 5.0)):
    return Sim3Transform(
        float(rng.uniform(*scale_range)), Rotation.random(rng), rng.normal(scale=3.0, size=3)
    )


def random_se3(rng):
    return SE3Transform(Rotation.random(rng), rng.normal(scale=3.0, size=3))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_randomized_group_laws_against_matrix_products():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        a, b, c = random_sim3(rng), random_sim3(rng), random_sim3(rng)
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=TOL * 10)
        assert compose(a, inverse(a)).allclose(Sim3Transform.identity(), atol=TOL)
        assert compose(a, b).allclose(Sim3Transform.from_matrix(a.matrix @ b.matrix), atol=TOL * 10)
        p = rng.normal(size=3)
        expected = (a.matrix @ np.append(p, 1.0))[:3]
        np.testing.assert_allclose(transform_point(a, p), expected, atol=TOL * 10)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_se3_closed_under_compose_and_inverse(seed):
    rng = np.random.default_rng(seed)
    a, b = random_se3(rng), random_se3(rng)
    ab = compose(a, b)
    assert isinstance(ab, SE3Transform)
    assert isinstance(inverse(a), SE3Transform)
    assert ab.scale == 1.0
    assert compose(inverse(a), a).allclose(SE3Transform.identity(), atol=TOL)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_mixed_compose_promotes_to_sim3(seed):
    rng = np.random.default_rng(seed)
    a, s = random_se3(rng), random_sim3(rng)
    out = compose(a, s)
    assert isinstance(out, Sim3Transform)
    assert out.scale == pytest.approx(s.scale)
    assert (a @ s).allclose(out)
    assert (s @ a).allclose(compose(s, a))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_relative_and_row_major_round_trip(seed):
    rng = np.random.default_rng(seed)
    a, b = random_sim3(rng), random_sim3(rng)
    assert compose(a, relative(a, b)).allclose(b, atol=TOL * 10)
    back = Sim3Transform.from_row_major(a.to_row_major())
    assert back.allclose(a, atol=TOL)
    assert back.scale == pytest.approx(a.scale, rel=1e-12)


def test_compose_all_order_and_empty():
    rng = np.random.default_rng(1)
    ts = [random_sim3(rng) for _ in range(4)]
    expected = ts[0].matrix @ ts[1].matrix @ ts[2].matrix @ ts[3].matrix
    np.testing.assert_allclose(compose_all(ts).matrix, expected, atol=1e-9)
    assert compose_all([]).allclose(SE3Transform.identity())


def test_transform_points_matches_single_point():
    rng = np.random.default_rng(5)
    t = random_sim3(rng)
    pts = rng.normal(size=(20, 3))
    batch = transform_points(t, pts)
    for p, q in zip(pts, batch):
        np.testing.assert_allclose(transform_point(t, p), q, atol=1e-12)
    cloud = transform_cloud(t, PointCloud(pts))
    np.testing.assert_allclose(cloud.points, batch)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_sim3_scales_distances_by_sigma(seed):
    rng = np.random.default_rng(seed)
    t = random_sim3(rng)
    p, q = rng.normal(scale=4.0, size=(2, 3))
    moved = np.linalg.norm(transform_point(t, p) - transform_point(t, q))
    assert moved == pytest.approx(t.scale * np.linalg.norm(p - q), rel=1e-9, abs=1e-12)


def test_chained_rotations_stay_proper():
    rng = np.random.default_rng(17)
    r = Rotation.identity()
    for _ in range(100):
        r = (r @ Rotation.random(rng)).renormalized()
        assert np.linalg.det(r.matrix) >= 1.0 - 1e-6
    raw = np.eye(3)
    for _ in range(100):
        raw = project_to_so3(raw @ Rotation.random(rng).matrix)
    assert np.linalg.det(raw) >= 1.0 - 1e-6


def test_scale_translation_lifts_units():
    t = SE3Transform.from_rotvec([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
    lifted = scale_translation(t, 2.5)
    np.testing.assert_allclose(lifted.translation, [2.5, 5.0, 7.5])
    assert lifted.rotation.allclose(t.rotation)


def test_pure_scale_and_rigid_part():
    s = Sim3Transform.pure_scale(3.0)
    np.testing.assert_allclose(transform_point(s, [1.0, 2.0, 3.0]), [3.0, 6.0, 9.0])
    t = Sim3Transform(2.0, Rotation.about_z(0.5), np.array([1.0, 0.0, 0.0]))
    assert t.rigid().scale == 1.0
    assert t.rigid().rotation.allclose(t.rotation)
    assert as_sim3(t) is t
    assert isinstance(as_sim3(SE3Transform.identity()), Sim3Transform)


@pytest.mark.parametrize("scale", [0.0, -1.0, float("nan"), float("inf")])
def test_sim3_rejects_bad_scale(scale):
    with pytest.raises(InvalidTransformError):
        Sim3Transform(scale, Rotation.identity(), np.zeros(3))


def test_rotation_rejects_non_orthonormal_and_reflection():
    with pytest.raises(InvalidTransformError):
        Rotation(np.diag([1.0, 1.0, 1.01]))
    with pytest.raises(InvalidTransformError):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidTransformError):
        Rotation(np.eye(2))
    with pytest.raises(InvalidTransformError):
        SE3Transform(Rotation.identity(), np.array([np.nan, 0.0, 0.0]))


def test_from_matrix_renormalize_and_reflection_guard():
    m = np.eye(4)
    m[:3, :3] = Rotation.about_z(0.3).matrix + 1e-7
    assert SE3Transform.from_matrix(m).rotation.allclose(Rotation.about_z(0.3), atol=1e-6)
    with pytest.raises(InvalidTransformError):
        SE3Transform.from_matrix(m, renormalize=False)
    bad = np.eye(4)
    bad[2, 2] = -1.0
    with pytest.raises(InvalidTransformError):
        Sim3Transform.from_matrix(bad)
    with pytest.raises(InvalidTransformError):
        Sim3Transform.from_row_major([1.0] * 15)


def test_rotation_quat_rotvec_and_helpers():
    r = Rotation.from_rotvec([0.0, 0.0, np.pi / 2])
    np.testing.assert_allclose(r.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)
    assert r.angle() == pytest.approx(np.pi / 2)
    assert Rotation.from_quat(r.as_quat()).allclose(r)
    assert (r @ r.inverse()).allclose(Rotation.identity())
    a, b = np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))
    noisy = r.matrix + 1e-4
    projected = project_to_so3(noisy)
    np.testing.assert_allclose(projected.T @ projected, np.eye(3), atol=1e-12)


def test_frame_id_world_and_validation():
    w = FrameId.world("a")
    assert w.is_world and w.index == WORLD_INDEX
    assert str(w) == "a:world"
    assert str(FrameId("b", 4)) == "b:4"
    assert FrameId("a", 3).shifted(1) == FrameId("a", 4)
    assert FrameId("a", 1) < FrameId("b", 0)
    with pytest.raises(InvalidTransformError):
        FrameId("a", -2)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_umeyama_recovers_similarity(seed):
    rng = np.random.default_rng(seed)
    truth = random_sim3(rng)
    src = rng.normal(size=(30, 3))
    dst = transform_points(truth, src)
    est = umeyama_alignment(src, dst)
    assert est.allclose(truth, atol=1e-7)
    rigid = rigid_alignment(src, transform_points(truth.rigid(), src))
    assert rigid.allclose(truth.rigid(), atol=1e-7)


def test_umeyama_degenerate_inputs():
    with pytest.raises(InsufficientMatchesError):
        umeyama_alignment(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(DegenerateGeometryError):
        umeyama_alignment(np.ones((5, 3)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        umeyama_alignment(np.zeros((5, 3)), np.zeros((4, 3)))


def test_point_cloud_properties():
    pts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.5]])
    c = PointCloud(pts)
    assert len(c) == 3
    np.testing.assert_allclose(c.extent, [2.0, 1.0, 0.5])
    assert c.bbox_volume == pytest.approx(1.0)
    assert c.diameter == pytest.approx(np.sqrt(5.25))
    assert len(PointCloud.empty()) == 0
    assert len(concat_clouds([c, c])) == 6
    assert len(concat_clouds([])) == 0
    with pytest.raises(InvalidTransformError):
        PointCloud.empty().centroid
    with pytest.raises(InvalidTransformError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0


def test_voxel_downsample_averages_per_voxel():
    pts = np.array([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3], [1.5, 0.0, 0.0]])
    down = PointCloud(pts).voxel_downsample(1.0)
    assert len(down) == 2
    rows = sorted(map(tuple, np.round(down.points, 9)))
    assert rows == [(0.2, 0.2, 0.2), (1.5, 0.0, 0.0)]
    with pytest.raises(ValueError):
        PointCloud(pts).voxel_downsample(0.0)
