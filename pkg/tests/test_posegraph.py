import numpy as np
import pytest

from mapfuse.exceptions import (
    GaugeUnfixedError,
    MissingEstimateError,
    NotConnectedError,
    PoseGraphError,
)
from mapfuse.geometry import FrameId, Rotation, SE3Transform, compose, relative
from mapfuse.loops import LoopClosure, MatchTriple, PairingMode, find_merge_trigger
from mapfuse.posegraph import (
    ALL_METHODS,
    Edge,
    EdgeKind,
    Method,
    MethodRun,
    PgoConfiguration,
    PgoParams,
    PoseGraph,
    build_graph,
    compare_configurations,
    edge_residual,
    format_g2o,
    odometry_information,
    optimize,
    parse_g2o,
    read_g2o,
    required_pairs,
    retract,
    run_pgo,
    summarize,
    triple_nodes,
)
from mapfuse.registration import InformationMatrix, merge_pair, register_pair
from mapfuse.scene import ScenarioConfig, ScenarioState, generate, generate_disjoint

INFO = InformationMatrix.diagonal(100.0, 1000.0)


def crafted_loop(i, j, gamma):
    return LoopClosure(
        FrameId("a", i),
        FrameId("b", j),
        tuple(range(gamma)),
        tuple(range(gamma)),
        np.zeros((gamma, 3)),
        np.zeros((gamma, 3)),
    )


def crafted_triple(gammas, mode=PairingMode.Direct):
    i, j = 10, 20
    loops = tuple(
        crafted_loop(i + z, mode.target_index(j, z), g) for z, g in zip((-1, 0, 1), gammas)
    )
    return MatchTriple(loops, mode)


def random_pose(rng, spread=1.0):
    return SE3Transform(Rotation.from_rotvec(rng.normal(0, 0.3, 3)), rng.normal(0, spread, 3))


def loop_graph(rng, n=5, noise=0.02):
    """Ring of ``n`` poses; measurements slightly inconsistent, estimates perturbed."""
    truth = [random_pose(rng, 2.0) for _ in range(n)]
    graph = PoseGraph()
    for k, pose in enumerate(truth):
        start = pose if k == 0 else retract(pose, rng.normal(0, 0.05, 6))
        graph.add_node(FrameId("r", k), start, fixed=(k == 0))
    for k in range(n):
        a, b = k, (k + 1) % n
        z = retract(relative(truth[a], truth[b]), rng.normal(0, noise, 6))
        graph.add_edge(Edge(FrameId("r", a), FrameId("r", b), z, INFO, EdgeKind.Odometry))
    return graph


def three_node_chain():
    a, b, c = FrameId("x", 0), FrameId("x", 1), FrameId("x", 2)
    x_a = SE3Transform.identity()
    x_b = SE3Transform.from_rotvec([0.0, 0.0, 0.2], [1.0, 0.0, 0.0])
    x_c = SE3Transform.from_rotvec([0.0, 0.1, 0.4], [2.0, 0.5, 0.0])
    graph = PoseGraph()
    graph.add_node(a, x_a, fixed=True)
    graph.add_node(b, retract(x_b, np.array([0.2, -0.1, 0.05, 0.05, -0.02, 0.1])))
    graph.add_node(c, x_c, fixed=True)
    graph.add_edge(Edge(a, b, relative(x_a, x_b), INFO))
    graph.add_edge(Edge(b, c, relative(x_b, x_c), INFO))
    return graph, b, x_b


def test_required_pairs_per_configuration():
    triple = crafted_triple((100, 90, 20))
    direct = [(9, 19), (10, 20), (11, 21)]
    assert required_pairs(PgoConfiguration.Straight, triple) == direct
    assert required_pairs(PgoConfiguration.TopMatches, triple) == [(9, 19)]
    full = required_pairs(PgoConfiguration.FullyConnected, triple)
    assert full[:3] == direct
    assert full[3:] == [(10, 19), (9, 20), (11, 20), (10, 21)]
    assert len(set(full)) == 7


def test_crossed_triple_nodes_follow_offsets():
    triple = crafted_triple((30, 40, 50), PairingMode.Crossed)
    assert triple_nodes(triple) == ((9, 10, 11), (21, 20, 19))
    assert required_pairs(PgoConfiguration.TopMatches, triple) == [(11, 19)]


def test_pose_graph_rejects_unknown_endpoint():
    graph = PoseGraph()
    graph.add_node(FrameId("a", 0), SE3Transform.identity())
    with pytest.raises(PoseGraphError):
        graph.add_edge(Edge(FrameId("a", 0), FrameId("a", 1), SE3Transform.identity(), INFO))


@pytest.fixture
def clean_registrations(clean_pair):
    source, target = clean_pair.agent("a"), clean_pair.agent("b")
    trigger = find_merge_trigger(source, target)
    sigma = clean_pair.expected_sigma("a", "b")
    known = {m.pair: m for m in trigger.triple.matches}
    pairs = required_pairs(PgoConfiguration.FullyConnected, trigger.triple)
    regs = {p: register_pair(source, target, *p, sigma, match=known.get(p)) for p in pairs}
    return source, target, trigger, sigma, regs


@pytest.mark.parametrize(
    "config, loops",
    [
        (PgoConfiguration.Straight, 3),
        (PgoConfiguration.FullyConnected, 7),
        (PgoConfiguration.TopMatches, 1),
    ],
)
def test_build_graph_edge_counts(config, loops, clean_registrations):
    source, target, trigger, sigma, regs = clean_registrations
    info = odometry_information(1e4, 1e5)
    graph = build_graph(config, trigger.triple, regs, (source, target), sigma, info)
    assert len(graph.nodes) == 6
    assert len(graph.edges_of(EdgeKind.Odometry)) == 4
    assert len(graph.inter_agent_edges) == loops
    assert len(graph.edges) == 4 + loops
    assert graph.fixed == {FrameId("a", min(triple_nodes(trigger.triple)[0]))}
    assert graph.is_connected()


def test_build_graph_reports_missing_estimates(clean_registrations):
    source, target, trigger, sigma, regs = clean_registrations
    straight = {p: regs[p] for p in trigger.triple.pairs}
    info = odometry_information(1e4, 1e5)
    with pytest.raises(MissingEstimateError):
        build_graph(PgoConfiguration.FullyConnected, trigger.triple, straight, (source, target), sigma, info)


def test_consistent_graph_needs_no_update(clean_registrations):
    source, target, trigger, sigma, regs = clean_registrations
    info = odometry_information(1e4, 1e5)
    graph = build_graph(PgoConfiguration.Straight, trigger.triple, regs, (source, target), sigma, info)
    result = optimize(graph)
    assert result.final_cost <= result.initial_cost
    for frame, pose in graph.nodes.items():
        assert result.graph.nodes[frame].allclose(pose, atol=1e-4)


def test_single_perturbed_node_is_restored():
    graph, b, x_b = three_node_chain()
    result = optimize(graph)
    assert result.converged and not result.stalled
    assert result.final_cost < 1e-12
    assert result.graph.nodes[b].allclose(x_b, atol=1e-6)
    for edge in result.graph.edges:
        r = edge_residual(edge, result.graph.nodes[edge.from_node], result.graph.nodes[edge.to_node])
        assert np.linalg.norm(r) < 1e-6


def test_rejected_steps_report_a_stall(monkeypatch, caplog):
    from mapfuse.posegraph import optimizer

    monkeypatch.setattr(optimizer._Problem, "step", lambda self, nodes, delta: dict(nodes))
    graph, b, _ = three_node_chain()
    with caplog.at_level("INFO", logger="mapfuse.posegraph"):
        result = optimize(graph)
    assert result.stalled
    assert not result.converged
    assert result.final_cost == result.initial_cost > 0
    assert result.iterations < PgoParams().max_iterations
    assert result.graph.nodes[b].allclose(graph.nodes[b])
    assert "stalled" in caplog.text


def test_robust_kernel_restores_the_same_node(settings):
    settings.update(PGO_ROBUST=True, PGO_HUBER_FACTOR=2.0)
    params = PgoParams.from_settings(settings)
    assert params.robust and params.huber_factor == 2.0
    graph, b, x_b = three_node_chain()
    result = optimize(graph, params)
    assert result.graph.nodes[b].allclose(x_b, atol=1e-6)


def test_cost_trace_is_non_increasing(rng):
    result = optimize(loop_graph(rng))
    assert len(result.trace) >= 2
    assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
    assert result.final_cost < result.initial_cost


def test_uniform_reweighting_keeps_the_optimum(rng):
    graph = loop_graph(rng)
    heavier = PoseGraph(
        dict(graph.nodes),
        [Edge(e.from_node, e.to_node, e.measurement, e.information.scaled(2.0), e.kind) for e in graph.edges],
        set(graph.fixed),
    )
    one = optimize(graph).graph.nodes
    two = optimize(heavier).graph.nodes
    for frame in one:
        assert one[frame].allclose(two[frame], atol=1e-6)


def test_common_transform_carries_through_optimization(rng):
    graph = loop_graph(rng)
    shift = random_pose(rng, 3.0)
    base = optimize(graph)
    moved = optimize(graph.transformed(shift))
    for frame, pose in base.graph.nodes.items():
        assert moved.graph.nodes[frame].allclose(compose(shift, pose), atol=1e-6)
    assert moved.final_cost == pytest.approx(base.final_cost, rel=1e-6, abs=1e-12)


def test_edge_residuals_do_not_grow_on_consistent_graph(rng):
    truth = [random_pose(rng, 2.0) for _ in range(4)]
    graph = PoseGraph()
    for k, pose in enumerate(truth):
        start = pose if k == 0 else retract(pose, rng.normal(0, 0.05, 6))
        graph.add_node(FrameId("c", k), start, fixed=(k == 0))
    for a in range(4):
        for b in range(a + 1, 4):
            graph.add_edge(Edge(FrameId("c", a), FrameId("c", b), relative(truth[a], truth[b]), INFO))
    result = optimize(graph)
    for edge in graph.edges:
        before = edge_residual(edge, graph.nodes[edge.from_node], graph.nodes[edge.to_node])
        after = edge_residual(edge, result.graph.nodes[edge.from_node], result.graph.nodes[edge.to_node])
        assert np.linalg.norm(after) <= np.linalg.norm(before) + 1e-12


def test_optimize_requires_gauge_and_connectivity():
    graph, _, _ = three_node_chain()
    graph.fixed.clear()
    with pytest.raises(GaugeUnfixedError):
        optimize(graph)

    split = PoseGraph()
    split.add_node(FrameId("a", 0), SE3Transform.identity(), fixed=True)
    split.add_node(FrameId("a", 1), SE3Transform.identity())
    with pytest.raises(NotConnectedError):
        optimize(split)


def test_retract_zero_is_identity(rng):
    pose = random_pose(rng)
    assert retract(pose, np.zeros(6)).allclose(pose, atol=0.0)


def test_g2o_text_round_trip(rng):
    graph = loop_graph(rng, n=4)
    scales = {FrameId("r", 1): 2.5}
    doc = parse_g2o(format_g2o(graph, scales))
    assert set(doc.graph.nodes) == set(graph.nodes)
    assert doc.graph.fixed == graph.fixed
    assert doc.scales == scales
    for frame, pose in graph.nodes.items():
        assert doc.graph.nodes[frame].allclose(pose, atol=1e-12)
    for orig, back in zip(graph.edges, doc.graph.edges):
        assert (back.from_node, back.to_node) == (orig.from_node, orig.to_node)
        assert back.measurement.allclose(orig.measurement, atol=1e-12)
        np.testing.assert_allclose(back.information.matrix, orig.information.matrix, rtol=1e-12)


def test_g2o_without_frame_comments():
    text = "\n".join(
        [
            "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1",
            "VERTEX_SE3:QUAT 1 1 0 0 0 0 0 1",
            "FIX 0",
            "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 " + " ".join(["1"] + ["0"] * 5 + ["1"] + ["0"] * 4 + ["1", "0", "0", "0", "1", "0", "0", "1", "0", "1"]),
            "UNKNOWN_TAG 3",
        ]
    )
    doc = parse_g2o(text)
    assert set(doc.graph.nodes) == {FrameId("g2o", 0), FrameId("g2o", 1)}
    assert doc.graph.fixed == {FrameId("g2o", 0)}
    (edge,) = doc.graph.edges
    assert edge.kind is EdgeKind.Odometry
    np.testing.assert_allclose(np.diag(edge.information.matrix), [1, 1, 1, 0.25, 0.25, 0.25])


def test_g2o_reports_bad_line():
    with pytest.raises(PoseGraphError, match="line 2"):
        parse_g2o("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nEDGE_SE3:QUAT 0 0 1 2\n")


def test_method_parse_and_run_dict():
    assert Method.parse("pgo-top-matches") is Method.PgoTopMatches
    assert Method.parse("LoopBox") is Method.LoopBox
    assert Method.LoopBox.pgo_configuration is None
    assert Method.PgoStraight.pgo_configuration is PgoConfiguration.Straight
    with pytest.raises(ValueError):
        Method.parse("bundle")
    run = MethodRun(Method.LoopBox, error="InsufficientMatchesError: none")
    assert not run.ok
    assert run.to_dict()["method"] == "loop_box"
    assert "details" not in run.to_dict()


def test_summarize_counts_failures():
    runs = [
        MethodRun(Method.LoopBox, 1.0, 0.1, 0.001, 0.1, 1.0),
        MethodRun(Method.LoopBox, 1.0, 0.3, 0.003, 0.3, 1.0),
        MethodRun(Method.LoopBox, error="boom"),
        MethodRun(Method.PgoStraight, error="boom"),
    ]
    summary = summarize(runs)
    assert summary["loop_box"]["runs"] == 3
    assert summary["loop_box"]["failures"] == 1
    assert summary["loop_box"]["median_rmse"] == pytest.approx(0.2)
    assert summary["pgo_straight"]["median_rmse"] is None
    assert "pcr_pro_direct" not in summary


def test_run_pgo_writes_g2o(tmp_path, clean_pair):
    source, target = clean_pair.agent("a"), clean_pair.agent("b")
    out = merge_pair(source, target)
    pgo = run_pgo(PgoConfiguration.TopMatches, source, target, out.trigger, out.sigma_star)
    assert len(pgo.registrations) == 1
    assert set(pgo.timings) == {"register", "optimize", "merge"}
    path = pgo.write_g2o(tmp_path / "graph" / "top.g2o")
    back = read_g2o(path)
    assert len(back.graph.nodes) == 6
    assert len(back.graph.edges) == 5


def test_zero_noise_comparison_is_exact(clean_pair):
    report = compare_configurations(clean_pair)
    assert set(report.runs) == set(ALL_METHODS)
    for method, run in report.runs.items():
        assert run.ok, run.error
        assert run.relative_rmse < 1e-3, method
        assert run.scale_error_percent < 0.5
    doc = report.to_dict()
    assert [r["method"] for r in doc["runs"]] == [m.value for m in Method]
    assert doc["expected_sigma"] == pytest.approx(0.5)
    assert report.run(Method.PgoFullyConnected).details["edges"] == 11


def test_comparison_runs_concurrently_with_same_results(clean_pair):
    methods = [Method.PgoStraight, Method.LoopBox]
    serial = compare_configurations(clean_pair, methods=methods)
    threaded = compare_configurations(clean_pair, methods=methods, max_workers=2)
    for m in methods:
        assert threaded.run(m).rmse == pytest.approx(serial.run(m).rmse, rel=1e-9, abs=1e-12)


def test_comparison_without_overlap_reports_errors(clean_config):
    sc = generate_disjoint(clean_config, seed=3)
    report = compare_configurations(sc, methods=[Method.LoopBox, Method.PgoTopMatches])
    assert set(report.runs) == {Method.LoopBox, Method.PgoTopMatches}
    assert all(not r.ok for r in report.runs.values())
    assert report.loop_box is None


@pytest.mark.slow
def test_top_matches_not_worse_than_fully_connected_on_batch():
    cfg = ScenarioConfig()
    runs = []
    faster = 0
    reports = 0
    for seed in range(50):
        sc = generate(ScenarioState.SameDirSingleLC, cfg, seed=seed)
        report = compare_configurations(
            sc, methods=[Method.LoopBox, Method.PgoTopMatches, Method.PgoFullyConnected]
        )
        runs.extend(report.runs.values())
        box, full = report.run(Method.LoopBox), report.run(Method.PgoFullyConnected)
        if box.ok and full.ok:
            reports += 1
            faster += box.wall_time_seconds < full.wall_time_seconds
    summary = summarize(runs)
    assert summary["pgo_top_matches"]["median_rmse"] <= summary["pgo_fully_connected"]["median_rmse"]
    assert faster == reports
