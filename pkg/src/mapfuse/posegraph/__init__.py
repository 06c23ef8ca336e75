"""Pose-graph baselines over the match triple: graph building, Levenberg-Marquardt, g2o I/O."""

from __future__ import annotations

from .compare import (
    ALL_METHODS,
    ComparisonReport,
    DirectOutcome,
    Method,
    MethodRun,
    PgoOutcome,
    compare_configurations,
    pcr_pro_direct,
    run_pgo,
    summarize,
)
from .g2o import G2oDocument, format_g2o, parse_g2o, read_g2o, write_g2o
from .graph import (
    Edge,
    EdgeKind,
    PgoConfiguration,
    PoseGraph,
    build_graph,
    node_of,
    odometry_information,
    required_pairs,
    triple_nodes,
)
from .optimizer import OptimizeResult, PgoParams, edge_residual, optimize, retract

__all__ = [
    "ALL_METHODS",
    "ComparisonReport",
    "DirectOutcome",
    "Edge",
    "EdgeKind",
    "G2oDocument",
    "Method",
    "MethodRun",
    "OptimizeResult",
    "PgoConfiguration",
    "PgoOutcome",
    "PgoParams",
    "PoseGraph",
    "build_graph",
    "compare_configurations",
    "edge_residual",
    "format_g2o",
    "node_of",
    "odometry_information",
    "optimize",
    "parse_g2o",
    "pcr_pro_direct",
    "read_g2o",
    "required_pairs",
    "retract",
    "run_pgo",
    "summarize",
    "triple_nodes",
    "write_g2o",
]
