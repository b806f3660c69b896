from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import count_by_enumeration
from argtree.core import (
    INT_LIMIT,
    ROOT_ID,
    Label,
    Polarity,
    Verdict,
    child_id,
    comparison_count,
    node_count,
    skeleton,
    validate_tree,
)
from argtree.errors import ConfigError


@pytest.mark.parametrize(
    "d, b, expected", [(1, 1, 3), (0, 3, 1), (2, 2, 21), (1, 2, 5), (2, 1, 7)]
)
def test_node_count_examples(d, b, expected):
    assert node_count(d, b) == expected


@pytest.mark.parametrize("d, b, expected", [(1, 1, 1), (1, 2, 4), (0, 5, 0), (2, 1, 3), (2, 2, 20)])
def test_comparison_count_examples(d, b, expected):
    assert comparison_count(d, b) == expected


@given(st.integers(0, 12), st.integers(1, 6))
def test_counts_match_enumeration_and_recurrences(d, b):
    nodes, pairs = count_by_enumeration(d, b)
    assert node_count(d, b) == nodes
    assert comparison_count(d, b) == pairs
    if d >= 1:
        assert node_count(d, b) == 1 + 2 * b * node_count(d - 1, b)
    internal = node_count(d - 1, b) if d >= 1 else 0
    assert comparison_count(d, b) == b * b * internal


def test_counts_are_exact_integers():
    # 4**31 - 1 is not representable as a double
    assert node_count(30, 2) == (4**31 - 1) // 3
    assert isinstance(node_count(30, 2), int)


def test_count_overflow_is_explicit():
    with pytest.raises(OverflowError):
        node_count(64, 1)
    with pytest.raises(OverflowError):
        comparison_count(200, 3)
    assert node_count(61, 1) <= INT_LIMIT


@pytest.mark.parametrize("d, b", [(-1, 1), (1, 0), (1.5, 1), (True, 1)])
def test_count_rejects_bad_parameters(d, b):
    with pytest.raises(ConfigError):
        node_count(d, b)


def _filled(d, b):
    tree = skeleton("claim", d, b)
    for n in tree.nodes.values():
        if not n.text:
            n.text = f"argument {n.id}"
    return tree


def test_validate_complete_tree():
    assert validate_tree(_filled(1, 1)) == []
    assert validate_tree(_filled(2, 2)) == []


def test_validate_missing_attacker():
    tree = _filled(1, 1)
    a = child_id(ROOT_ID, Polarity.ATTACK, 1)
    tree.root.children.remove(a)
    del tree.nodes[a]
    problems = validate_tree(tree)
    assert len(problems) == 1
    assert "missing ATTACK child" in problems[0]
    assert problems[0].startswith(ROOT_ID)


def test_validate_tau_out_of_range():
    tree = _filled(1, 1)
    tree.nodes["db0.S1"].tau = 1.3
    problems = validate_tree(tree)
    assert problems == ["db0.S1: tau=1.3 outside [0, 1]"]


def test_validate_leaf_depth_and_links():
    tree = _filled(1, 1)
    tree.nodes["db0.A1"].parent = "db0.S1"
    assert any("parent link" in p for p in validate_tree(tree))
    tree = _filled(1, 1)
    tree.depth = 2
    assert any("leaf at depth 1" in p for p in validate_tree(tree))


def test_node_ids_are_stable():
    tree = skeleton("c", 2, 1)
    assert sorted(tree.nodes) == sorted(
        ["db0", "db0.S1", "db0.A1", "db0.S1.S1", "db0.S1.A1", "db0.A1.S1", "db0.A1.A1"]
    )
    # supporters come first in children lists
    assert tree.root.children == ["db0.S1", "db0.A1"]
    assert [len(level) for level in tree.levels()] == [1, 2, 4]


@pytest.mark.parametrize("p, label", [(0.5, Label.FALSE), (0.5000001, Label.TRUE), (0.0, Label.FALSE), (1.0, Label.TRUE)])
def test_verdict_threshold_is_strict(p, label):
    assert Verdict.from_probability(p).label is label


def test_depth_zero_tree_is_legal():
    tree = _filled(0, 1)
    assert len(tree.nodes) == 1
    assert tree.contested_ids() == []
    assert validate_tree(tree) == []
