import numpy as np
import pytest

from mapfuse.bus import (
    HEADER,
    MAGIC,
    AgentBuffer,
    BusMode,
    Bye,
    CloudMsg,
    FrameReader,
    FramedChannel,
    Hello,
    KeyframeMsg,
    MergeNotice,
    PoseMsg,
    QueueChannel,
    chain_merges,
    decode_frame,
    encode_frame,
    replay,
    run_session,
)
from mapfuse.evaluation import merged_positions_error
from mapfuse.exceptions import (
    CyclicMergeError,
    DisconnectedAgentsError,
    FramingError,
    SessionError,
    SessionTimeoutError,
)
from mapfuse.geometry import Rotation, Sim3Transform, compose
from mapfuse.hooks import NoticeBus
from mapfuse.scene import ScenarioConfig, ScenarioState, generate, generate_chain, generate_disjoint


def random_sim3(rng):
    return Sim3Transform(
        float(np.exp(rng.normal(0, 0.4))), Rotation.random(rng), rng.normal(0, 2.0, 3)
    )


def notice(source, target, relative):
    return MergeNotice(
        source, target, Sim3Transform.identity(), Sim3Transform.identity(), relative, (0, 0)
    )


def test_frame_layout_and_decode():
    data = encode_frame(Hello("a"))
    magic, version, kind, length = HEADER.unpack_from(data)
    assert magic == MAGIC
    assert kind == int(Hello.kind)
    assert length == len(data) - HEADER.size
    message, used = decode_frame(data + b"extra")
    assert message == Hello("a")
    assert used == len(data)


def test_frame_errors():
    data = encode_frame(Bye("b"))
    with pytest.raises(FramingError, match="magic"):
        decode_frame(b"XXXX" + data[4:])
    with pytest.raises(FramingError, match="truncated"):
        decode_frame(data[:-1])
    with pytest.raises(FramingError, match="truncated header"):
        decode_frame(data[:3])
    bad_kind = HEADER.pack(MAGIC, 1, 99, 2) + b"{}"
    with pytest.raises(FramingError, match="unknown message kind"):
        decode_frame(bad_kind)
    malformed = HEADER.pack(MAGIC, 1, int(Hello.kind), 2) + b"{}"
    with pytest.raises(FramingError, match="malformed"):
        decode_frame(malformed)


def test_reader_reassembles_byte_by_byte(clean_pair):
    kf = clean_pair.agent("a")[3]
    messages = [KeyframeMsg(kf.without_cloud()), PoseMsg(kf.frame, kf.pose_local), CloudMsg(kf.frame, kf.cloud)]
    stream = b"".join(encode_frame(m) for m in messages)
    reader = FrameReader()
    out = []
    for k in range(len(stream)):
        out.extend(reader.feed(stream[k : k + 1]))
    assert reader.pending == 0
    assert [type(m) for m in out] == [KeyframeMsg, PoseMsg, CloudMsg]
    back = out[0].keyframe
    np.testing.assert_array_equal(back.landmark_ids, kf.landmark_ids)
    np.testing.assert_array_equal(back.positions, kf.positions)
    np.testing.assert_array_equal(back.descriptors, kf.descriptors)
    assert out[1].pose.allclose(kf.pose_local, atol=0.0)
    np.testing.assert_array_equal(out[2].cloud.points, kf.cloud.points)


def test_reader_rejects_trailing_bytes():
    reader = FrameReader()
    reader.feed(encode_frame(Hello("a"))[:-2])
    with pytest.raises(FramingError):
        reader.close()


def test_merge_notice_payload_is_exact(rng):
    n = MergeNotice("a", "b", Sim3Transform.pure_scale(0.5), random_sim3(rng), random_sim3(rng), (4, 7), {"gamma": 30})
    back, _ = decode_frame(encode_frame(n))
    assert back.pair == ("a", "b")
    assert back.anchor == (4, 7)
    assert back.loop_report == {"gamma": 30}
    assert back.relative.to_row_major() == n.relative.to_row_major()
    assert back.final.to_row_major() == n.final.to_row_major()


def test_queue_channel_order_and_close():
    channel = QueueChannel()
    for agent in "abc":
        channel.send(Hello(agent))
    channel.close()
    assert [m.agent for m in channel] == ["a", "b", "c"]
    assert channel.receive() is None
    with pytest.raises(SessionError):
        channel.send(Bye("a"))
    with pytest.raises(SessionError):
        QueueChannel().receive(timeout=0.01)


def test_framed_channel_with_small_chunks():
    channel = FramedChannel(chunk_size=3)
    sent = [Hello("a"), Hello("b"), Bye("a")]
    for m in sent:
        channel.send(m)
    assert channel.bytes_sent == sum(len(encode_frame(m)) for m in sent)
    assert channel.drain() == sent
    channel.send(Bye("b"))
    channel.close()
    assert list(channel) == [Bye("b")]


def test_replay_order(clean_pair):
    stream = list(replay(clean_pair))
    assert stream[:2] == [Hello("a"), Hello("b")]
    assert stream[-2:] == [Bye("a"), Bye("b")]
    for agent in clean_pair.agent_ids:
        indices = [m.frame.index for m in stream if isinstance(m, KeyframeMsg) and m.agent == agent]
        assert indices == list(range(len(clean_pair.agent(agent))))
    assert all(len(m.keyframe.cloud) == 0 for m in stream if isinstance(m, KeyframeMsg))


def test_agent_buffer_assembles_parts_in_any_order(clean_pair):
    track = clean_pair.agent("a")
    buf = AgentBuffer("a", capacity=3, summary_voxel=0.5)
    for kf in list(track)[:6]:
        parts = [CloudMsg(kf.frame, kf.cloud), KeyframeMsg(kf.without_cloud()), PoseMsg(kf.frame, kf.pose_local)]
        assert buf.accept(parts[0]) is None
        assert buf.accept(parts[1]) is None
        assert buf.accept(parts[2]) == kf.frame.index
    assert len(buf) == 6
    assert [len(buf[k]) > 0 for k in range(6)] == [False, False, False, True, True, True]
    assert len(buf[0].cloud) <= len(track[0].cloud)
    assert buf[0].pose_local.allclose(track[0].pose_local)
    assert buf.track().local_scale == 1.0
    buf.accept(Bye("a"))
    assert buf.finished


def test_agent_buffer_rejects_disorder(clean_pair):
    track = clean_pair.agent("a")
    buf = AgentBuffer("a", capacity=8, summary_voxel=0.5)
    first, second = track[0], track[1]
    for msg in (KeyframeMsg(second.without_cloud()), PoseMsg(second.frame, second.pose_local)):
        buf.accept(msg)
    with pytest.raises(SessionError, match="arrived before"):
        buf.accept(CloudMsg(second.frame, second.cloud))

    buf = AgentBuffer("a", capacity=8, summary_voxel=0.5)
    for msg in (KeyframeMsg(first.without_cloud()), PoseMsg(first.frame, first.pose_local), CloudMsg(first.frame, first.cloud)):
        buf.accept(msg)
    with pytest.raises(SessionError, match="twice"):
        buf.accept(PoseMsg(first.frame, first.pose_local))


def test_chain_single_notice(rng):
    rel = random_sim3(rng)
    transforms = chain_merges([notice("a", "b", rel)])
    assert transforms["a"].allclose(Sim3Transform.identity())
    assert transforms["b"].allclose(rel, atol=1e-12)
    rooted = chain_merges([notice("a", "b", rel)], root="b")
    assert compose(rooted["a"], rel).allclose(Sim3Transform.identity(), atol=1e-9)


def test_chain_composes_matrix_product(rng):
    ab, bc, cd = random_sim3(rng), random_sim3(rng), random_sim3(rng)
    transforms = chain_merges([notice("c", "d", cd), notice("b", "c", bc), notice("a", "b", ab)])
    oracle = ab.matrix @ bc.matrix
    np.testing.assert_allclose(transforms["c"].matrix, oracle, atol=1e-9)
    np.testing.assert_allclose(transforms["d"].matrix, oracle @ cd.matrix, atol=1e-9)


def test_chain_rejects_disconnected_and_cyclic(rng):
    with pytest.raises(DisconnectedAgentsError):
        chain_merges([notice("a", "b", random_sim3(rng))], agents=["a", "b", "c"])
    with pytest.raises(DisconnectedAgentsError):
        chain_merges([notice("a", "b", random_sim3(rng)), notice("c", "d", random_sim3(rng))])
    with pytest.raises(DisconnectedAgentsError):
        chain_merges([])
    with pytest.raises(DisconnectedAgentsError):
        chain_merges([notice("a", "b", random_sim3(rng))], root="z")
    with pytest.raises(CyclicMergeError):
        chain_merges([notice("a", "b", random_sim3(rng)), notice("b", "a", random_sim3(rng))])
    ring = [notice("a", "b", random_sim3(rng)), notice("b", "c", random_sim3(rng)), notice("a", "c", random_sim3(rng))]
    with pytest.raises(CyclicMergeError):
        chain_merges(ring)


def test_session_merges_pair_once(clean_pair, settings):
    locked_during_notice = []
    bus = NoticeBus("raise")
    bus.subscribe(lambda n: locked_during_notice.append(settings.is_locked()))
    result = run_session(clean_pair, settings=settings, notice_bus=bus)
    assert len(result.notices) == 1
    assert result.notices[0].pair == ("a", "b")
    assert result.notice_for("b", "a") is result.notices[0]
    assert locked_during_notice == [True]
    assert not settings.is_locked()
    assert [len(result.inboxes[a]) for a in ("a", "b")] == [1, 1]
    assert set(result.transforms) == {"a", "b"}
    assert result.transforms["a"].allclose(Sim3Transform.identity())
    assert "session" in result.timings
    assert result.report()["mode"] == "centralized"
    assert len(result.transcript.records_of("notice")) == 1


@pytest.mark.parametrize("state", [ScenarioState.SameDirManyLC, ScenarioState.OppositeDirManyLC])
def test_many_loop_closures_still_trigger_once(state, clean_config):
    sc = generate(state, clean_config, seed=12)
    result = run_session(sc)
    assert len(result.notices) == 1
    seen = {}
    for record in result.transcript.records_of("message"):
        f = record.fields
        if f["type"] != "KeyframeMsg":
            continue
        last = seen.get(f["agent"], -1)
        assert f["index"] == last + 1
        seen[f["agent"]] = f["index"]


def test_session_without_overlap_times_out(clean_config, caplog):
    sc = generate_disjoint(clean_config, seed=2)
    with pytest.raises(SessionTimeoutError):
        run_session(sc)
    assert "without a loop closure" in caplog.text


def test_modes_produce_identical_notices(clean_pair):
    central = run_session(clean_pair, BusMode.Centralized)
    distributed = run_session(clean_pair, BusMode.Distributed)
    (a,), (b,) = central.notices, distributed.notices
    assert a.pair == b.pair and a.anchor == b.anchor
    np.testing.assert_allclose(a.relative.matrix, b.relative.matrix, atol=1e-9)
    np.testing.assert_allclose(a.final.matrix, b.final.matrix, atol=1e-9)
    vias = {r.fields["via"] for r in distributed.transcript.records_of("message")}
    assert vias == {"local", "framed"}


def test_failing_subscriber_in_raise_mode_stops_session(clean_pair):
    bus = NoticeBus("raise")

    def broken(_):
        raise RuntimeError("slave offline")

    bus.subscribe(broken)
    with pytest.raises(RuntimeError, match="slave offline"):
        run_session(clean_pair, notice_bus=bus)


def test_three_agents_chain_through_connecting_agent(clean_config):
    sc = generate_chain(clean_config.with_scales(1.0, 2.0, 0.5), seed=4)
    result = run_session(sc)
    assert sorted(n.pair for n in result.notices) == [("a", "b"), ("b", "c")]
    ab, bc = result.notice_for("a", "b").relative, result.notice_for("b", "c").relative
    np.testing.assert_allclose(result.transforms["c"].matrix, ab.matrix @ bc.matrix, atol=1e-6)
    assert set(result.merged.agents) == {"a", "b", "c"}
    truth = sc.ground_truth
    expected_scale = truth["c"].scale / truth["a"].scale
    assert result.transforms["c"].scale == pytest.approx(expected_scale, rel=1e-2)


@pytest.mark.slow
def test_three_agent_map_error_at_default_noise():
    errors = []
    for seed in range(10):
        sc = generate_chain(ScenarioConfig(scales=(1.0, 2.0, 0.5)), seed=seed)
        merged = run_session(sc).merged
        err = merged_positions_error(
            {a: merged.positions(a) for a in merged.agents},
            {a: sc.true_positions(a) for a in merged.agents},
        )
        errors.append(err.relative)
    assert float(np.median(errors)) < 0.02
