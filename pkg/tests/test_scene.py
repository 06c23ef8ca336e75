import numpy as np
import pytest

from mapfuse.exceptions import InvalidTransformError, ScenarioError
from mapfuse.geometry import FrameId, SE3Transform
from mapfuse.scene import (
    AgentTrack,
    Keyframe,
    ScenarioConfig,
    ScenarioState,
    generate,
    generate_chain,
    generate_disjoint,
    generated_state,
    load_scenario,
    perturb_odometry,
    read_ply,
    save_scenario,
    scenario_to_dict,
    write_ply,
)


def step_lengths(track, indices):
    t = [track[i].pose_local.translation for i in indices]
    return np.linalg.norm(np.diff(t, axis=0), axis=1)


def test_state_parse_and_flags():
    assert ScenarioState.parse("d") is ScenarioState.OppositeDirSingleLC
    assert ScenarioState.parse("SameDirManyLC") is ScenarioState.SameDirManyLC
    assert ScenarioState.OppositeDirManyLC.opposite
    assert ScenarioState.OppositeDirManyLC.many_loop_closures
    assert not ScenarioState.SameDirSingleLC.opposite
    with pytest.raises(ScenarioError):
        ScenarioState.parse("e")


def test_config_validation_and_noise_scaling():
    with pytest.raises(ScenarioError):
        ScenarioConfig(scales=(1.0, 0.0))
    with pytest.raises(ScenarioError):
        ScenarioConfig(observation_noise=-1.0)
    with pytest.raises(ScenarioError):
        ScenarioConfig(camera_height=0.5, landmark_max_height=0.6)

    base = ScenarioConfig()
    doubled = base.with_noise(2.0)
    assert doubled.observation_noise == pytest.approx(2 * base.observation_noise)
    assert doubled.descriptor_noise == pytest.approx(2 * base.descriptor_noise)
    quiet = base.with_noise(0.0)
    assert quiet.observation_noise == 0.0 and quiet.odometry_sigma_r == 0.0
    assert base.noiseless().descriptor_noise == 0.0
    assert base.window_plan(True) == (14, 4, 6)
    assert base.window_plan(False) == (5, 8, 11)


def test_config_from_settings_and_dict(settings):
    settings.update(SCENE_STEP=0.25, SCENE_SCALES=(1.0, 3.0))
    cfg = ScenarioConfig.from_settings(settings, dropout=0.1)
    assert cfg.step == 0.25
    assert cfg.scales == (1.0, 3.0)
    assert cfg.dropout == 0.1
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"bogus": 1})


@pytest.mark.parametrize("state", list(ScenarioState))
def test_generate_states_basic_shape(state, clean_config):
    sc = generate(state, clean_config, seed=11)
    assert sc.agent_ids == ["a", "b"]
    window, pre, post = clean_config.window_plan(state.many_loop_closures)
    for agent in sc.agents:
        assert len(agent) == pre + window + post
        for kf in agent:
            assert len(kf) > 0
            assert np.all(kf.positions[:, 2] > 0)
            assert kf.descriptor_length == clean_config.descriptor_length
    (w,) = sc.covisibility
    assert (w.source, w.target) == ("a", "b")
    assert len(w.pairs()) == window
    if state.opposite:
        assert w.target_indices == tuple(reversed(w.source_indices))
    else:
        assert w.target_indices == w.source_indices


def test_consecutive_keyframes_are_connected(clean_pair):
    for agent in clean_pair.agents:
        steps = step_lengths(agent, range(len(agent)))
        expected = clean_pair.config.step / agent.local_scale
        np.testing.assert_allclose(steps, expected, rtol=1e-9)


def test_zero_noise_ground_truth_reproduces_true_poses(clean_config):
    sc = generate(ScenarioState.SameDirSingleLC, clean_config, seed=5)
    for agent in sc.agents:
        for k in range(len(agent)):
            g = sc.global_pose_from_local(agent.agent_id, k)
            np.testing.assert_allclose(g.translation, sc.true_poses[agent.agent_id][k].translation, atol=1e-9)
            assert g.rotation.allclose(sc.true_poses[agent.agent_id][k].rotation, atol=1e-9)


def test_opposite_direction_step_ratio_matches_scales(clean_config):
    sc = generate(ScenarioState.OppositeDirSingleLC, clean_config.with_scales(1.0, 2.5), seed=3)
    (w,) = sc.covisibility
    a = step_lengths(sc.agent("a"), w.source_indices)
    b = step_lengths(sc.agent("b"), sorted(w.target_indices))
    np.testing.assert_allclose(a / b, 2.5, rtol=1e-9)
    assert sc.expected_sigma("a", "b") == pytest.approx(0.4)
    assert sc.window("a", "b") is w
    assert sc.window("b", "a") is None


def test_covisible_pairs_share_landmarks(clean_pair):
    (w,) = clean_pair.covisibility
    a, b = clean_pair.agent("a"), clean_pair.agent("b")
    for i, j in w.pairs():
        assert np.intersect1d(a[i].landmark_ids, b[j].landmark_ids).size >= 8


def mean_heading(sc, agent_id, indices):
    steps = np.diff(sc.true_positions(agent_id)[sorted(indices)], axis=0)
    return steps.mean(axis=0)


@pytest.mark.parametrize("state", [ScenarioState.SameDirSingleLC, ScenarioState.OppositeDirSingleLC])
@pytest.mark.parametrize("seed", [0, 3, 11])
def test_keyframes_outside_window_share_few_landmarks(state, seed):
    sc = generate(state, ScenarioConfig(scales=(1.0, 2.0)), seed=seed)
    (w,) = sc.covisibility
    tracks = {
        w.source: (sc.agent(w.source), set(w.source_indices)),
        w.target: (sc.agent(w.target), set(w.target_indices)),
    }
    for own, other in ((w.source, w.target), (w.target, w.source)):
        track, inside = tracks[own]
        others = [kf.landmark_ids for kf in tracks[other][0]]
        for k, kf in enumerate(track):
            if k in inside or kf.landmark_ids.size == 0:
                continue
            worst = max(np.intersect1d(kf.landmark_ids, ids).size for ids in others)
            assert worst / kf.landmark_ids.size < 0.1, (own, k)
    a, b = sc.agent(w.source), sc.agent(w.target)
    for i, j in w.pairs():
        assert np.intersect1d(a[i].landmark_ids, b[j].landmark_ids).size >= 8


@pytest.mark.parametrize("state", list(ScenarioState))
def test_window_headings_follow_direction(state, clean_config):
    sc = generate(state, clean_config.with_scales(1.0, 2.0), seed=5)
    for w in sc.covisibility:
        source = mean_heading(sc, w.source, w.source_indices)
        dot = float(source @ mean_heading(sc, w.target, w.target_indices))
        assert (dot < 0) == state.opposite


def test_fixed_seed_is_deterministic():
    one = scenario_to_dict(generate(ScenarioState.OppositeDirManyLC, seed=42))
    two = scenario_to_dict(generate(ScenarioState.OppositeDirManyLC, seed=42))
    assert one == two
    other = scenario_to_dict(generate(ScenarioState.OppositeDirManyLC, seed=43))
    assert other["landmarks"] != one["landmarks"]


def test_chain_layout_has_connecting_agent(clean_config):
    sc = generate_chain(clean_config.with_scales(1.0, 2.0, 0.5), seed=2)
    assert sc.agent_ids == ["a", "b", "c"]
    assert [(w.source, w.target) for w in sc.covisibility] == [("a", "b"), ("b", "c")]
    ids = {a.agent_id: set(np.concatenate([kf.landmark_ids for kf in a])) for a in sc.agents}
    assert ids["a"] & ids["b"]
    assert ids["b"] & ids["c"]
    assert not ids["a"] & ids["c"]


def test_chain_needs_three_scales(clean_config):
    with pytest.raises(ScenarioError):
        generate_chain(clean_config, seed=0)


def test_disjoint_layout_shares_nothing(clean_config):
    sc = generate_disjoint(clean_config, seed=1)
    assert sc.covisibility == ()
    a = set(np.concatenate([kf.landmark_ids for kf in sc.agent("a")]))
    b = set(np.concatenate([kf.landmark_ids for kf in sc.agent("b")]))
    assert not a & b


def test_perturb_odometry_zero_is_identity_and_seeded(clean_pair):
    track = clean_pair.agent("a")
    assert perturb_odometry(track, 0.0, 0.0, seed=1) is track
    noisy_1 = perturb_odometry(track, 0.01, 0.001, seed=9)
    noisy_2 = perturb_odometry(track, 0.01, 0.001, seed=9)
    end_1, end_2 = noisy_1[len(track) - 1].pose_local, noisy_2[len(track) - 1].pose_local
    assert end_1.allclose(end_2, atol=0.0)
    assert np.linalg.norm(end_1.translation - track[len(track) - 1].pose_local.translation) > 0
    assert noisy_1[0].pose_local.allclose(track[0].pose_local)
    with pytest.raises(ScenarioError):
        perturb_odometry(track, -0.1, 0.0, seed=1)


def test_keyframe_and_track_validation():
    with pytest.raises(InvalidTransformError):
        Keyframe(FrameId("a", 0), SE3Transform.identity(), [1], [[0.0, 0.0, -1.0]], [[1.0, 0.0]])
    with pytest.raises(InvalidTransformError):
        Keyframe(FrameId("a", 0), SE3Transform.identity(), [1, 2], [[0.0, 0.0, 1.0]], [[1.0]])
    kf = Keyframe(FrameId("a", 1), SE3Transform.identity(), [], np.zeros((0, 3)), np.zeros((0, 4)))
    with pytest.raises(ScenarioError):
        AgentTrack("a", (kf,), 1.0)
    with pytest.raises(ScenarioError):
        AgentTrack("a", (), 0.0)


def test_save_and_load_scenario(tmp_path, noisy_pair):
    path = save_scenario(noisy_pair, tmp_path / "s" / "pair.json")
    back = load_scenario(path)
    assert back.agent_ids == noisy_pair.agent_ids
    assert back.state is noisy_pair.state
    assert back.config == noisy_pair.config
    assert back.covisibility == noisy_pair.covisibility
    for a in noisy_pair.agents:
        b = back.agent(a.agent_id)
        assert b.local_scale == a.local_scale
        for ka, kb in zip(a, b):
            np.testing.assert_array_equal(ka.landmark_ids, kb.landmark_ids)
            np.testing.assert_array_equal(ka.descriptors, kb.descriptors)
            assert ka.pose_local.allclose(kb.pose_local, atol=1e-12)
            assert ka.cloud.allclose(kb.cloud, atol=0.0)


def test_load_rejects_foreign_documents(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": "other"}', encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(bad)
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(broken)


def test_ply_round_trip_with_agent_labels(tmp_path, clean_pair):
    cloud = clean_pair.agent("a")[0].cloud
    labels = np.arange(len(cloud)) % 2
    path = write_ply(tmp_path / "cloud.ply", cloud, labels)
    back, back_labels = read_ply(path)
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)
    np.testing.assert_array_equal(back_labels, labels)
    with pytest.raises(ValueError):
        write_ply(tmp_path / "bad.ply", cloud, labels[:-1])


def test_generated_state_summary(clean_pair):
    summary = generated_state(clean_pair)
    assert summary["state"] == "SameDirSingleLC"
    assert summary["agents"]["b"]["scale"] == 2.0
    assert summary["seed"] == 7
