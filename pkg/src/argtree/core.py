"""Domain types for argument trees and the closed-form size formulas."""

from __future__ import annotations

import copy
import enum
from collections.abc import Iterator
from dataclasses import dataclass, field

from argtree.errors import ConfigError

ROOT_ID = "db0"

# Counts must stay representable as signed 64-bit integers so that traces and
# tables exported to other tools never wrap.
INT_LIMIT = 2**63 - 1

DEFAULT_THRESHOLD = 0.5


class Polarity(str, enum.Enum):
    SUPPORT = "SUPPORT"
    ATTACK = "ATTACK"

    @property
    def letter(self) -> str:
        return self.value[0]


@dataclass
class ArgumentNode:
    """One node of a reasoning tree.

    ``tau`` is the judge's isolated score, ``tau_prime`` the calibrated score
    (equal to ``tau`` until a tournament touches the node) and ``s`` the
    strength after bottom-up aggregation.
    """

    id: str
    text: str
    polarity: Polarity | None = None
    tau: float | None = None
    tau_prime: float | None = None
    s: float | None = None
    children: list[str] = field(default_factory=list)
    parent: str | None = None
    depth: int = 0

    def set_tau(self, value: float) -> None:
        self.tau = value
        self.tau_prime = value


@dataclass
class ReasoningTree:
    root_id: str
    depth: int
    breadth: int
    nodes: dict[str, ArgumentNode]

    @property
    def root(self) -> ArgumentNode:
        return self.nodes[self.root_id]

    def supporters(self, node_id: str) -> list[ArgumentNode]:
        return [
            self.nodes[c]
            for c in self.nodes[node_id].children
            if self.nodes[c].polarity is Polarity.SUPPORT
        ]

    def attackers(self, node_id: str) -> list[ArgumentNode]:
        return [
            self.nodes[c]
            for c in self.nodes[node_id].children
            if self.nodes[c].polarity is Polarity.ATTACK
        ]

    def levels(self) -> list[list[ArgumentNode]]:
        """Nodes grouped by depth, root level first, in construction order."""
        out: list[list[ArgumentNode]] = []
        frontier = [self.root]
        while frontier:
            out.append(frontier)
            frontier = [self.nodes[c] for n in frontier for c in n.children]
        return out

    def walk(self) -> Iterator[ArgumentNode]:
        for level in self.levels():
            yield from level

    def internal_ids(self) -> list[str]:
        return [n.id for n in self.walk() if n.children]

    def contested_ids(self) -> list[str]:
        """Internal nodes having at least one supporter and one attacker."""
        return [
            n.id
            for n in self.walk()
            if self.supporters(n.id) and self.attackers(n.id)
        ]

    def copy(self) -> ReasoningTree:
        return copy.deepcopy(self)


class Label(str, enum.Enum):
    TRUE = "TRUE"
    FALSE = "FALSE"


@dataclass(frozen=True)
class Verdict:
    probability: float
    label: Label

    @classmethod
    def from_probability(
        cls, probability: float, threshold: float = DEFAULT_THRESHOLD
    ) -> Verdict:
        # strict: a probability exactly at the threshold is FALSE
        label = Label.TRUE if probability > threshold else Label.FALSE
        return cls(probability, label)

    @property
    def is_true(self) -> bool:
        return self.label is Label.TRUE


def _check_params(depth: int, breadth: int) -> None:
    if not isinstance(depth, int) or isinstance(depth, bool) or depth < 0:
        raise ConfigError(f"depth must be an integer >= 0, got {depth!r}")
    if not isinstance(breadth, int) or isinstance(breadth, bool) or breadth < 1:
        raise ConfigError(f"breadth must be an integer >= 1, got {breadth!r}")


def _checked(value: int, what: str) -> int:
    if value > INT_LIMIT:
        raise OverflowError(f"{what} exceeds the 64-bit integer range")
    return value


def node_count(depth: int, breadth: int) -> int:
    """Number of nodes in a complete tree with ``breadth`` supporters and
    ``breadth`` attackers under every internal node."""
    _check_params(depth, breadth)
    k = 2 * breadth
    return _checked((k ** (depth + 1) - 1) // (k - 1), "node count")


def comparison_count(depth: int, breadth: int) -> int:
    """Number of supporter-by-attacker judge calls for a full traversal."""
    _check_params(depth, breadth)
    k = 2 * breadth
    return _checked(breadth**2 * ((k**depth - 1) // (k - 1)), "comparison count")


def validate_tree(tree: ReasoningTree) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems: list[str] = []
    b = tree.breadth
    if tree.root_id not in tree.nodes:
        return [f"{tree.root_id}: root node missing"]
    root = tree.root
    if root.polarity is not None:
        problems.append(f"{root.id}: root must not carry a polarity")
    if root.parent is not None:
        problems.append(f"{root.id}: root must not have a parent")

    seen: set[str] = set()
    stack: list[tuple[str, int]] = [(root.id, 0)]
    while stack:
        nid, depth = stack.pop()
        if nid in seen:
            problems.append(f"{nid}: reached twice (cycle or shared child)")
            continue
        seen.add(nid)
        node = tree.nodes[nid]
        if not node.text or not node.text.strip():
            problems.append(f"{nid}: empty text")
        for name in ("tau", "tau_prime", "s"):
            value = getattr(node, name)
            if value is not None and not 0.0 <= value <= 1.0:
                problems.append(f"{nid}: {name}={value} outside [0, 1]")
        if nid != root.id and node.polarity is None:
            problems.append(f"{nid}: non-root node without polarity")

        if node.children:
            n_sup = n_att = 0
            for cid in node.children:
                child = tree.nodes.get(cid)
                if child is None:
                    problems.append(f"{nid}: child {cid} not in tree")
                    continue
                if child.parent != nid:
                    problems.append(f"{cid}: parent link {child.parent!r} != {nid!r}")
                if child.polarity is Polarity.SUPPORT:
                    n_sup += 1
                elif child.polarity is Polarity.ATTACK:
                    n_att += 1
                stack.append((cid, depth + 1))
            if n_sup != b:
                problems.append(
                    f"{nid}: missing SUPPORT child ({n_sup} of {b})"
                    if n_sup < b
                    else f"{nid}: too many SUPPORT children ({n_sup} of {b})"
                )
            if n_att != b:
                problems.append(
                    f"{nid}: missing ATTACK child ({n_att} of {b})"
                    if n_att < b
                    else f"{nid}: too many ATTACK children ({n_att} of {b})"
                )
        elif depth != tree.depth:
            problems.append(f"{nid}: leaf at depth {depth}, expected {tree.depth}")

    for nid in tree.nodes:
        if nid not in seen:
            problems.append(f"{nid}: unreachable from root")
    if not problems and len(tree.nodes) != node_count(tree.depth, b):
        problems.append(
            f"{root.id}: {len(tree.nodes)} nodes, expected {node_count(tree.depth, b)}"
        )
    return problems


def child_id(parent_id: str, polarity: Polarity, index: int) -> str:
    """Stable id of the ``index``-th (1-based) child of a given polarity."""
    return f"{parent_id}.{polarity.letter}{index}"


def skeleton(claim: str, depth: int, breadth: int) -> ReasoningTree:
    """A complete tree whose argument texts are still empty placeholders."""
    _check_params(depth, breadth)
    root = ArgumentNode(id=ROOT_ID, text=claim)
    nodes = {ROOT_ID: root}
    frontier = [root]
    for level in range(1, depth + 1):
        nxt = []
        for parent in frontier:
            for pol in (Polarity.SUPPORT, Polarity.ATTACK):
                for i in range(1, breadth + 1):
                    cid = child_id(parent.id, pol, i)
                    node = ArgumentNode(
                        id=cid, text="", polarity=pol, parent=parent.id, depth=level
                    )
                    nodes[cid] = node
                    parent.children.append(cid)
                    nxt.append(node)
        frontier = nxt
    return ReasoningTree(ROOT_ID, depth, breadth, nodes)
