import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapfuse.evaluation import (
    AlignmentMode,
    ErrorStats,
    MapError,
    associate,
    associated_poses,
    format_tum,
    merged_positions_error,
    metric_rmse,
    parse_tum,
    read_tum,
    trajectory_extent,
    write_tum,
)
from mapfuse.exceptions import LengthMismatchError
from mapfuse.geometry import Rotation, SE3Transform, Sim3Transform, compose, transform_points

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_trajectory(rng, n=20):
    poses = []
    pose = SE3Transform.identity()
    for _ in range(n):
        step = SE3Transform.from_rotvec(rng.normal(0, 0.05, 3), [0.5, 0.0, 0.0] + rng.normal(0, 0.05, 3))
        pose = compose(pose, step)
        poses.append(pose)
    return poses


def random_rigid(rng):
    return SE3Transform(Rotation.random(rng), rng.normal(0, 5.0, 3))


def test_identical_trajectories_have_zero_error(rng):
    traj = random_trajectory(rng)
    m = metric_rmse(traj, traj)
    assert m.rmse == pytest.approx(0.0, abs=1e-12)
    assert m.rpe_translation.max == pytest.approx(0.0, abs=1e-12)
    assert m.rpe_rotation.max == pytest.approx(0.0, abs=1e-6)
    assert m.alignment_used is AlignmentMode.Unaligned


def test_constant_offset_without_alignment(rng):
    ref = random_trajectory(rng)
    shifted = [SE3Transform(p.rotation, p.translation + [1.0, 0.0, 0.0]) for p in ref]
    m = metric_rmse(shifted, ref, AlignmentMode.Unaligned)
    assert m.rmse == pytest.approx(1.0, rel=1e-12)
    assert m.rpe_translation.max == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_se3_alignment_removes_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    est = random_trajectory(rng)
    motion = random_rigid(rng)
    ref = [compose(motion, p) for p in est]
    m = metric_rmse(est, ref, AlignmentMode.SE3)
    assert m.rmse < 1e-9
    assert m.rpe_rotation.max < 1e-6
    assert m.alignment.allclose(motion.as_sim3(), atol=1e-8)


def test_sim3_alignment_recovers_scale(rng):
    est = random_trajectory(rng)
    similarity = Sim3Transform(2.5, Rotation.random(rng), rng.normal(size=3))
    ref = [SE3Transform(compose(similarity, p).rotation, compose(similarity, p).translation) for p in est]
    m = metric_rmse(est, ref, AlignmentMode.Sim3)
    assert m.rmse < 1e-9
    assert m.alignment.scale == pytest.approx(2.5, rel=1e-9)
    assert m.to_dict()["alignment"] == "sim3"
    assert metric_rmse(est, ref, AlignmentMode.SE3).rmse > 0.1


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_rmse_invariant_under_common_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    est, ref = random_trajectory(rng), random_trajectory(rng)
    motion = random_rigid(rng)
    moved = metric_rmse([compose(motion, p) for p in est], [compose(motion, p) for p in ref])
    assert moved.rmse == pytest.approx(metric_rmse(est, ref).rmse, rel=1e-9)


def test_length_mismatch(rng, caplog):
    traj = random_trajectory(rng, 5)
    with pytest.raises(LengthMismatchError):
        metric_rmse(traj, traj[:4])
    assert "lengths differ" in caplog.text


@pytest.mark.parametrize("mode", [AlignmentMode.SE3, AlignmentMode.Sim3])
def test_short_trajectories_align_by_centroid(mode):
    step = SE3Transform.from_rotvec([0.0, 0.0, 0.3], [1.0, 0.0, 0.0])
    pair = [SE3Transform.identity(), step]
    assert metric_rmse(pair, pair, mode).rmse == pytest.approx(0.0, abs=1e-12)

    shifted = [SE3Transform(p.rotation, p.translation + [0.5, -2.0, 1.0]) for p in pair]
    m = metric_rmse(pair, shifted, mode)
    assert m.rmse == pytest.approx(0.0, abs=1e-12)
    assert m.rpe_translation.max == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(m.alignment.translation, [0.5, -2.0, 1.0])
    assert m.alignment.scale == 1.0

    single = metric_rmse([step], [shifted[1]], mode)
    assert single.rmse == pytest.approx(0.0, abs=1e-12)
    assert single.rpe_translation.to_dict()["max"] == 0.0
    assert metric_rmse([], [], mode).rmse == 0.0


def test_alignment_mode_parse():
    assert AlignmentMode.parse("SIM3") is AlignmentMode.Sim3
    assert AlignmentMode.parse("none") is AlignmentMode.Unaligned
    assert AlignmentMode.parse("unaligned") is AlignmentMode.Unaligned
    with pytest.raises(ValueError):
        AlignmentMode.parse("affine")


def test_error_stats_and_extent():
    stats = ErrorStats.of(np.array([3.0, -4.0]))
    assert (stats.mean, stats.median, stats.max) == (3.5, 3.5, 4.0)
    assert stats.rmse == pytest.approx(np.sqrt(12.5))
    assert ErrorStats.of(np.zeros(0)).to_dict() == {"mean": 0.0, "median": 0.0, "max": 0.0, "rmse": 0.0}
    corners = np.array([[0, 0, 0], [1, 1, 1], [0.5, 0.2, 0.9]], dtype=float)
    assert trajectory_extent(corners) == pytest.approx(np.sqrt(3))
    assert trajectory_extent(np.zeros((0, 3))) == 0.0
    assert MapError(1.0, 0.0).relative == 0.0
    assert MapError(1.0, 50.0).relative == pytest.approx(0.02)


def test_merged_positions_error(rng):
    truth = {"a": rng.normal(size=(10, 3)), "b": rng.normal(size=(8, 3)) + 5.0}
    similarity = Sim3Transform(0.3, Rotation.random(rng), rng.normal(size=3))
    merged = {a: transform_points(similarity, p) for a, p in truth.items()}
    err = merged_positions_error(merged, truth)
    assert err.rmse < 1e-9
    bent = dict(merged, b=merged["b"] + 0.1)
    assert merged_positions_error(bent, truth).rmse > 1e-3
    with pytest.raises(KeyError):
        merged_positions_error(merged, {"a": truth["a"]})
    with pytest.raises(LengthMismatchError):
        merged_positions_error({"a": merged["a"][:5], "b": merged["b"]}, truth)


def test_tum_text_layout(rng):
    traj = random_trajectory(rng, 3)
    text = format_tum(traj, rate_hz=4.0)
    lines = text.splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 4
    assert lines[2].split()[0] == "0.250000000"
    assert all(len(line.split()) == 8 for line in lines[1:])
    with pytest.raises(ValueError):
        format_tum(traj, rate_hz=0.0)


def test_tum_file_round_trip(tmp_path, rng):
    traj = random_trajectory(rng)
    path = write_tum(tmp_path / "out" / "a.tum", traj)
    stamps, poses = read_tum(path)
    assert stamps == pytest.approx([k / 10.0 for k in range(len(traj))])
    for a, b in zip(poses, traj):
        assert a.allclose(b, atol=1e-8)


def test_parse_tum_comments_commas_and_errors():
    stamps, poses = parse_tum("# header\n\n1.0, 1, 2, 3, 0, 0, 0, 1\n  # trailing\n")
    assert stamps == [1.0]
    np.testing.assert_allclose(poses[0].translation, [1, 2, 3])
    with pytest.raises(ValueError, match="line 2"):
        parse_tum("# header\n1 2 3\n")


def test_associate_greedy_nearest():
    assert associate([0.0, 0.1, 0.2], [0.101, 0.0, 0.5]) == [(0, 1), (1, 0)]
    assert associate([0.0], [0.0, 0.001]) == [(0, 0)]
    assert associate([0.0], [0.5]) == []


def test_associated_poses(rng):
    traj = random_trajectory(rng, 4)
    a = ([0.0, 0.1, 0.2, 0.3], traj)
    b = ([0.2, 0.3, 0.4, 0.5], traj)
    est, ref = associated_poses(a, b)
    assert len(est) == len(ref) == 2
    assert est[0] is traj[2] and ref[0] is traj[0]
    with pytest.raises(LengthMismatchError):
        associated_poses(a, ([9.0], traj[:1]))
