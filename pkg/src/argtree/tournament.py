"""Supporter-versus-attacker tournaments for every contested parent."""

from __future__ import annotations

import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from argtree.core import ReasoningTree
from argtree.errors import ArgTreeError, ConfigError, TournamentError
from argtree.judging import Backend, Judgment, JudgeOutcome, compare


@dataclass
class WinMatrix:
    parent_id: str
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def add(self, winner: str, loser: str, n: int = 1) -> None:
        self.counts[(winner, loser)] = self.counts.get((winner, loser), 0) + n

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def scaled(self, c: int) -> WinMatrix:
        return WinMatrix(self.parent_id, {k: v * c for k, v in self.counts.items()})


@dataclass(frozen=True)
class ComparisonTask:
    parent_id: str
    support_id: str
    attack_id: str
    repeat: int = 0
    swapped: bool = False

    @property
    def key(self) -> tuple:
        return (self.parent_id, self.support_id, self.attack_id, self.repeat, self.swapped)


@dataclass
class ComparisonRecord:
    parent_id: str
    support_id: str
    attack_id: str
    repeat: int
    swapped: bool
    judgment: Judgment


@dataclass(frozen=True)
class TournamentOptions:
    repeats: int = 1
    swap_positions: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


def plan(tree: ReasoningTree, parent_id: str, options: TournamentOptions) -> list[ComparisonTask]:
    sup = tree.supporters(parent_id)
    att = tree.attackers(parent_id)
    if not sup or not att:
        raise TournamentError(
            f"{parent_id}: needs at least one supporter and one attacker", parent_id
        )
    tasks = []
    for s in sup:
        for a in att:
            for r in range(options.repeats):
                tasks.append(ComparisonTask(parent_id, s.id, a.id, r, False))
                if options.swap_positions:
                    tasks.append(ComparisonTask(parent_id, s.id, a.id, r, True))
    return tasks


def _judge(tree: ReasoningTree, task: ComparisonTask, judge: Backend) -> ComparisonRecord:
    n = tree.nodes
    try:
        j = compare(
            n[task.parent_id].text,
            n[task.support_id].text,
            n[task.attack_id].text,
            judge,
            swapped=task.swapped,
        )
    except ArgTreeError as exc:
        raise TournamentError(
            f"{task.parent_id}: comparison ({task.support_id}, {task.attack_id}) failed: {exc}",
            task.parent_id,
            (task.support_id, task.attack_id),
        ) from exc
    return ComparisonRecord(
        task.parent_id, task.support_id, task.attack_id, task.repeat, task.swapped, j
    )


def tally(parent_id: str, records: list[ComparisonRecord]) -> WinMatrix:
    """Accumulate judged outcomes; a TIE contributes no count."""
    counts: Counter = Counter()
    for rec in records:
        if rec.judgment.outcome is JudgeOutcome.SUPPORT_WINS:
            counts[(rec.support_id, rec.attack_id)] += 1
        elif rec.judgment.outcome is JudgeOutcome.ATTACK_WINS:
            counts[(rec.attack_id, rec.support_id)] += 1
    return WinMatrix(parent_id, dict(sorted(counts.items())))


def _execute(
    tree: ReasoningTree,
    tasks: list[ComparisonTask],
    judge: Backend,
    parallelism: int,
    rng: random.Random | None,
) -> list[ComparisonRecord]:
    order = list(tasks)
    if rng is not None:
        rng.shuffle(order)
    if parallelism <= 1:
        done = [_judge(tree, t, judge) for t in order]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_judge, tree, t, judge) for t in order]
            done = []
            errors = []
            for f in futures:
                try:
                    done.append(f.result())
                except TournamentError as exc:
                    errors.append(exc)
            if errors:
                # report the first failing pair in canonical order
                raise min(errors, key=lambda e: (e.parent_id, e.pair))
    by_key = {
        (r.parent_id, r.support_id, r.attack_id, r.repeat, r.swapped): r for r in done
    }
    return [by_key[t.key] for t in tasks]


def run_tournament(
    parent_id: str,
    tree: ReasoningTree,
    judge: Backend,
    options: TournamentOptions = TournamentOptions(),
    *,
    parallelism: int = 1,
    rng: random.Random | None = None,
) -> tuple[WinMatrix, list[ComparisonRecord]]:
    tasks = plan(tree, parent_id, options)
    records = _execute(tree, tasks, judge, parallelism, rng)
    return tally(parent_id, records), records


def run_all(
    tree: ReasoningTree,
    judge: Backend,
    options: TournamentOptions = TournamentOptions(),
    *,
    parallelism: int = 1,
    rng: random.Random | None = None,
) -> tuple[dict[str, WinMatrix], list[ComparisonRecord]]:
    """Run one tournament per contested parent, a whole tree level at a time.

    ``rng`` shuffles the submission order; results and logs are always in
    canonical (tree) order regardless of completion order.
    """
    matrices: dict[str, WinMatrix] = {}
    log: list[ComparisonRecord] = []
    contested = set(tree.contested_ids())
    for level in tree.levels():
        parents = [n.id for n in level if n.id in contested]
        if not parents:
            continue
        tasks = [t for pid in parents for t in plan(tree, pid, options)]
        records = _execute(tree, tasks, judge, parallelism, rng)
        for pid in parents:
            mine = [r for r in records if r.parent_id == pid]
            matrices[pid] = tally(pid, mine)
        log.extend(records)
    return matrices, log
