from __future__ import annotations

import random
from collections import Counter

import pytest

from argtree.core import comparison_count, skeleton
from argtree.errors import BackendError, TournamentError
from argtree.judging import InstrumentedBackend, JudgeOutcome, MockBackend
from argtree.tournament import TournamentOptions, WinMatrix, run_all, run_tournament
from conftest import decisive

SW, AW, T = JudgeOutcome.SUPPORT_WINS, JudgeOutcome.ATTACK_WINS, JudgeOutcome.TIE


def _tree(d, b):
    tree = skeleton("claim under test", d, b)
    for n in tree.nodes.values():
        if not n.text:
            n.text = f"text of {n.id}"
    return tree


def _by_ids(table):
    """Compare rule keyed on (support id, attack id) via the node texts."""
    return lambda p, s, a: table.get((s.removeprefix("text of "), a.removeprefix("text of ")))


def test_single_decisive_pair():
    m, recs = run_tournament("db0", _tree(1, 1), decisive())
    assert m.counts == {("db0.S1", "db0.A1"): 1}
    assert len(recs) == 1


def test_tie_adds_nothing():
    m, _ = run_tournament("db0", _tree(1, 1), decisive(T))
    assert m.counts == {}
    assert m.total == 0


def test_forced_two_by_two():
    table = {
        ("db0.S1", "db0.A1"): SW,
        ("db0.S1", "db0.A2"): SW,
        ("db0.S2", "db0.A1"): AW,
        ("db0.S2", "db0.A2"): SW,
    }
    judge = InstrumentedBackend(MockBackend(compare_rule=_by_ids(table)))
    m, _ = run_tournament("db0", _tree(1, 2), judge)
    assert m.counts == {
        ("db0.S1", "db0.A1"): 1,
        ("db0.S1", "db0.A2"): 1,
        ("db0.A1", "db0.S2"): 1,
        ("db0.S2", "db0.A2"): 1,
    }
    assert judge.calls["compare"] == 4


@pytest.mark.parametrize("d, b, n_matrices", [(1, 1, 1), (2, 1, 3), (0, 1, 0), (2, 2, 5)])
def test_run_all_counts(d, b, n_matrices):
    judge = InstrumentedBackend(MockBackend(2))
    matrices, log = run_all(_tree(d, b), judge, parallelism=4)
    assert len(matrices) == n_matrices
    assert judge.calls["compare"] == comparison_count(d, b) == len(log)
    for m in matrices.values():
        assert m.total <= b * b


def test_scheduling_order_does_not_matter():
    tree = _tree(2, 2)
    base, base_log = run_all(tree, MockBackend(4))
    for seed in range(5):
        got, log = run_all(tree, MockBackend(4), parallelism=8, rng=random.Random(seed))
        assert got == base
        assert [(r.parent_id, r.support_id, r.attack_id) for r in log] == [
            (r.parent_id, r.support_id, r.attack_id) for r in base_log
        ]


def test_repeats_and_swaps():
    tree = _tree(1, 1)
    judge = InstrumentedBackend(decisive())
    m, recs = run_tournament("db0", tree, judge, TournamentOptions(repeats=3, swap_positions=True))
    assert judge.calls["compare"] == 6
    assert m.counts == {("db0.S1", "db0.A1"): 6}
    assert Counter(r.swapped for r in recs) == {False: 3, True: 3}


def test_judge_error_names_pair():
    def boom(req):
        if "db0.S2" in req.prompt and "db0.A1" in req.prompt:
            raise BackendError("server down")
        return None

    with pytest.raises(TournamentError) as info:
        run_tournament("db0", _tree(1, 2), MockBackend(raw_rule=boom), parallelism=4)
    assert info.value.parent_id == "db0"
    assert info.value.pair == ("db0.S2", "db0.A1")


def test_uncontested_parent_rejected():
    tree = _tree(0, 1)
    with pytest.raises(TournamentError):
        run_tournament("db0", tree, MockBackend())


def test_win_matrix_scaling():
    m = WinMatrix("p", {("s", "a"): 2, ("a", "s"): 1})
    assert m.scaled(5).counts == {("s", "a"): 10, ("a", "s"): 5}
    assert m.total == 3
