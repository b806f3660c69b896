from __future__ import annotations

import pytest

from argtree import templates
from argtree.core import Polarity, node_count, validate_tree
from argtree.errors import ConfigError, GenerationError
from argtree.generation import GenerationConfig, build_tree, generate_argument, generation_prompt
from argtree.judging import InstrumentedBackend, MockBackend
from argtree.persistence import dumps, RunTrace, tree_to_dict

CLAIM = "The Earth orbits the Sun"


def test_golden_seed7_tree():
    tree, records = build_tree(CLAIM, GenerationConfig(1, 1), MockBackend(7))
    assert len(tree.nodes) == 3
    # frozen from the first run; any change to the mock or prompts shows up here
    assert tree.nodes["db0.S1"].text == (
        'Large statistical surveys confirm the statement "The Earth orbits the Sun" [daa33c].'
    )
    assert tree.nodes["db0.A1"].text == (
        'First-principles arguments cast doubt on the statement "The Earth orbits the Sun" [39c195].'
    )
    assert set(records) == {"db0.S1", "db0.A1"}


def test_depth_zero_makes_no_calls():
    gen = InstrumentedBackend(MockBackend(7))
    tree, records = build_tree(CLAIM, GenerationConfig(0, 1), gen)
    assert list(tree.nodes) == ["db0"] and records == {}
    assert sum(gen.calls.values()) == 0


def test_breadth_two_layout():
    tree, _ = build_tree(CLAIM, GenerationConfig(1, 2), MockBackend(7))
    assert len(tree.nodes) == 5
    assert [n.id for n in tree.supporters("db0")] == ["db0.S1", "db0.S2"]
    assert [n.id for n in tree.attackers("db0")] == ["db0.A1", "db0.A2"]
    assert validate_tree(tree) == []


@pytest.mark.parametrize("d, b", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_build_tree_complete(d, b):
    tree, records = build_tree(CLAIM, GenerationConfig(d, b), MockBackend(3), parallelism=4)
    assert len(tree.nodes) == node_count(d, b)
    assert validate_tree(tree) == []
    assert len(records) == node_count(d, b) - 1
    for node in tree.nodes.values():
        if node.parent is not None:
            assert tree.nodes[node.parent].depth == node.depth - 1


def test_build_is_deterministic_and_order_independent():
    one, _ = build_tree(CLAIM, GenerationConfig(2, 2), MockBackend(5), parallelism=1)
    many, _ = build_tree(CLAIM, GenerationConfig(2, 2), MockBackend(5), parallelism=16)
    assert tree_to_dict(one) == tree_to_dict(many)


def test_siblings_see_prior_siblings():
    gen = InstrumentedBackend(MockBackend(1))
    build_tree(CLAIM, GenerationConfig(1, 2), gen)
    by_polarity = {}
    for req in gen.requests:
        by_polarity.setdefault(req.fields["polarity"], []).append(req)
    for reqs in by_polarity.values():
        assert reqs[0].fields["prior_siblings"] == []
        assert len(reqs[1].fields["prior_siblings"]) == 1
        assert reqs[1].fields["prior_siblings"][0] in reqs[1].prompt


def test_generate_argument_polarities_differ():
    sup = generate_argument(CLAIM, Polarity.SUPPORT, MockBackend(7))
    att = generate_argument(CLAIM, Polarity.ATTACK, MockBackend(7))
    assert sup.text and att.text and sup.text != att.text


def test_attack_prompt_is_swapped_support_prompt():
    sup = generation_prompt(CLAIM, Polarity.SUPPORT)
    att = generation_prompt(CLAIM, Polarity.ATTACK)
    assert att == templates.swap_wording(sup, "generate")


def test_empty_parent_rejected():
    with pytest.raises(ConfigError):
        generate_argument("", Polarity.SUPPORT, MockBackend())


def test_empty_generation_retried_once():
    replies = iter(["   ", "A real argument."])
    rec = generate_argument(CLAIM, Polarity.SUPPORT, MockBackend(raw_rule=lambda r: next(replies)))
    assert rec.text == "A real argument."
    assert rec.responses == ["   ", "A real argument."]
    assert rec.prompts[0] == rec.prompts[1]


def test_persistent_empty_generation_fails_with_partial_tree():
    def rule(req):
        return "" if req.fields["polarity"] == "ATTACK" else None

    with pytest.raises(GenerationError) as info:
        build_tree(CLAIM, GenerationConfig(1, 1), MockBackend(raw_rule=rule))
    partial = info.value.partial_tree
    assert partial is not None
    assert partial.nodes["db0.S1"].text  # the supporter did get built
    assert partial.nodes["db0.A1"].text == ""


@pytest.mark.parametrize("d, b", [(3, 1), (1, 3)])
def test_caps(d, b):
    with pytest.raises(ConfigError):
        GenerationConfig(d, b)
    assert GenerationConfig(d, b, allow_large=True).depth == d


def test_serialization_is_byte_identical_across_builds():
    def doc():
        tree, _ = build_tree(CLAIM, GenerationConfig(2, 1), MockBackend(9))
        return dumps(RunTrace(kind="tree", claim={}, config={}, verdict={}, tree=tree_to_dict(tree)))

    assert doc() == doc()
