"""Claim verification with argument trees, pairwise tournaments and
Bradley-Terry calibrated gradual semantics."""

from __future__ import annotations

from argtree.calibration import BTConfig, BTResult, blend, calibrate_tree, fit_bt
from argtree.core import (
    ArgumentNode,
    Label,
    Polarity,
    ReasoningTree,
    Verdict,
    comparison_count,
    node_count,
    validate_tree,
)
from argtree.generation import GenerationConfig, build_tree
from argtree.harness import (
    ClaimRecord,
    ExperimentConfig,
    Method,
    Runtime,
    evaluate,
    load_dataset,
    run_method,
)
from argtree.judging import BackendConfig, ChatCompletionsBackend, MockBackend, OracleMock
from argtree.persistence import RunTrace, read_trace, replay, what_if, write_trace
from argtree.semantics import aggregate, node_score
from argtree.tournament import WinMatrix, run_all

__version__ = "0.1.0"

__all__ = [
    "ArgumentNode", "BTConfig", "BTResult", "BackendConfig", "ChatCompletionsBackend",
    "ClaimRecord", "ExperimentConfig", "GenerationConfig", "Label", "Method", "MockBackend",
    "OracleMock", "Polarity", "ReasoningTree", "RunTrace", "Runtime", "Verdict", "WinMatrix",
    "aggregate", "blend", "build_tree", "calibrate_tree", "comparison_count", "evaluate",
    "fit_bt", "load_dataset", "node_count", "node_score", "read_trace", "replay", "run_all",
    "run_method",
    "validate_tree", "what_if", "write_trace",
]
