"""Evaluation harness for translating navigation instructions into region traces."""

from .gridmap import GridMap, Scenario, marker_regions, parse_grid, serialize_grid
from .metrics import aggregate_runs, gleu, score_pair, summarize_distribution
from .oracle import simulate, validate_trace
from .prompt import build_prompt, parse_response
from .runner import RunConfig, evaluate, run_cross_partition
from .topology import RegionGraph, bridged_graph, extract_graph, push_block_step, verify_against

__all__ = [
    "GridMap",
    "RegionGraph",
    "RunConfig",
    "Scenario",
    "aggregate_runs",
    "bridged_graph",
    "build_prompt",
    "evaluate",
    "extract_graph",
    "gleu",
    "marker_regions",
    "parse_grid",
    "parse_response",
    "push_block_step",
    "run_cross_partition",
    "score_pair",
    "serialize_grid",
    "simulate",
    "summarize_distribution",
    "validate_trace",
    "verify_against",
]
