"""Bottom-up strength propagation over the calibrated tree (DF-QuAD style)."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

from argtree.core import DEFAULT_THRESHOLD, ReasoningTree, Verdict
from argtree.errors import AggregationError


def alpha(supporter_strengths: Iterable[float], attacker_strengths: Iterable[float]) -> float:
    """Signed product gap: prod(1 - s) over supporters minus the same over
    attackers. Positive means the attack dominates."""
    return math.prod(1.0 - s for s in supporter_strengths) - math.prod(
        1.0 - s for s in attacker_strengths
    )


def node_score(tau_prime: float, alpha_value: float) -> float:
    if alpha_value > 0:
        return tau_prime - alpha_value * tau_prime
    return tau_prime - alpha_value * (1.0 - tau_prime)


def dfquad_combine(tau_prime: float, v_attack: float, v_support: float) -> float:
    """The classical DF-QuAD combination from noisy-OR aggregates; kept as an
    independent formulation for cross-checking :func:`node_score`."""
    delta = v_support - v_attack
    if delta >= 0:
        return tau_prime + (1.0 - tau_prime) * delta
    return tau_prime + tau_prime * delta


@dataclass(frozen=True)
class NodeAggregate:
    s: float
    alpha: float | None = None  # None for leaves


@dataclass
class AggregationReport:
    per_node: dict[str, NodeAggregate]
    root_probability: float
    verdict: Verdict


def aggregate(tree: ReasoningTree, threshold: float = DEFAULT_THRESHOLD) -> AggregationReport:
    """Propagate strengths deepest level first and read off the verdict."""
    for node in tree.nodes.values():
        if node.tau_prime is None:
            raise AggregationError(f"{node.id}: calibrated strength tau' not set")
    per_node: dict[str, NodeAggregate] = {}
    for level in reversed(tree.levels()):
        for node in level:
            if not node.children:
                per_node[node.id] = NodeAggregate(node.tau_prime)
                continue
            a = alpha(
                (per_node[c.id].s for c in tree.supporters(node.id)),
                (per_node[c.id].s for c in tree.attackers(node.id)),
            )
            per_node[node.id] = NodeAggregate(node_score(node.tau_prime, a), a)
    p = per_node[tree.root_id].s
    return AggregationReport(per_node, p, Verdict.from_probability(p, threshold))


def apply_report(tree: ReasoningTree, report: AggregationReport) -> None:
    for nid, agg in report.per_node.items():
        tree.nodes[nid].s = agg.s
