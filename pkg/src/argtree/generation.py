"""Level-by-level construction of the argument tree."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from argtree import templates
from argtree.core import Polarity, ReasoningTree, child_id, skeleton
from argtree.errors import ArgTreeError, ConfigError, GenerationError
from argtree.judging import Backend, JudgeRequest

logger = logging.getLogger(__name__)

MAX_DEPTH = 2
MAX_BREADTH = 2


@dataclass(frozen=True)
class GenerationConfig:
    depth: int = 1
    breadth: int = 1
    allow_large: bool = False

    def __post_init__(self):
        for name in ("depth", "breadth"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.depth < 0 or self.breadth < 1:
            raise ConfigError(f"need depth >= 0 and breadth >= 1, got {self.depth}, {self.breadth}")
        if not self.allow_large and (self.depth > MAX_DEPTH or self.breadth > MAX_BREADTH):
            raise ConfigError(
                f"depth/breadth are capped at {MAX_DEPTH}/{MAX_BREADTH} "
                f"(got {self.depth}/{self.breadth}); pass allow_large to exceed"
            )


@dataclass
class GenerationRecord:
    node_id: str
    text: str
    prompts: list[str] = field(default_factory=list)
    responses: list[str] = field(default_factory=list)


def generation_prompt(parent_text: str, polarity: Polarity, prior_siblings: Sequence[str] = ()) -> str:
    extra = ""
    if prior_siblings:
        extra = templates.render(
            "diversity", siblings="\n".join(f"- {s}" for s in prior_siblings)
        )
    name = "generate_support" if polarity is Polarity.SUPPORT else "generate_attack"
    return templates.render(name, parent=parent_text, prior_siblings=extra)


def generate_argument(
    parent_text: str,
    polarity: Polarity,
    generator: Backend,
    prior_siblings: Sequence[str] = (),
    *,
    node_id: str = "",
) -> GenerationRecord:
    """Produce one argument supporting or attacking ``parent_text``.

    An empty reply is retried once with the identical prompt.
    """
    if not isinstance(parent_text, str) or not parent_text.strip():
        raise ConfigError("parent text must be non-empty")
    prompt = generation_prompt(parent_text, polarity, prior_siblings)
    fields = {
        "parent": parent_text,
        "polarity": polarity.value,
        "prior_siblings": list(prior_siblings),
    }
    rec = GenerationRecord(node_id, "")
    for attempt in range(2):
        raw = generator.complete(JudgeRequest("generate", prompt, fields, attempt))
        rec.prompts.append(prompt)
        rec.responses.append(raw)
        text = (raw or "").strip()
        if text:
            rec.text = text
            return rec
        logger.debug("empty generation for %s (attempt %d)", node_id or parent_text[:30], attempt)
    raise GenerationError(f"{node_id or 'argument'}: generator returned empty text twice")


def build_tree(
    claim_text: str,
    config: GenerationConfig,
    generator: Backend,
    *,
    parallelism: int = 1,
) -> tuple[ReasoningTree, dict[str, GenerationRecord]]:
    """Build a complete tree for ``claim_text``.

    Within a level, each (parent, polarity) chain of siblings is generated
    independently; same-polarity siblings are generated in order so later ones
    see the earlier ones. Output is keyed by pre-assigned node ids, so the tree
    does not depend on completion order.
    """
    if not isinstance(claim_text, str) or not claim_text.strip():
        raise ConfigError("claim text must be non-empty")
    tree = skeleton(claim_text, config.depth, config.breadth)
    records: dict[str, GenerationRecord] = {}

    def chain(parent_id: str, polarity: Polarity) -> list[GenerationRecord]:
        parent_text = tree.nodes[parent_id].text
        out: list[GenerationRecord] = []
        for i in range(1, config.breadth + 1):
            cid = child_id(parent_id, polarity, i)
            out.append(
                generate_argument(
                    parent_text, polarity, generator, [r.text for r in out], node_id=cid
                )
            )
        return out

    for level in tree.levels()[:-1]:
        jobs = [(n.id, pol) for n in level for pol in (Polarity.SUPPORT, Polarity.ATTACK)]
        results: list[list[GenerationRecord] | BaseException] = []
        if parallelism <= 1:
            for job in jobs:
                try:
                    results.append(chain(*job))
                except ArgTreeError as exc:
                    results.append(exc)
                    break
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                futures = [pool.submit(chain, *job) for job in jobs]
                for f in futures:
                    try:
                        results.append(f.result())
                    except ArgTreeError as exc:
                        results.append(exc)
        failure = None
        for res in results:
            if isinstance(res, BaseException):
                failure = failure or res
                continue
            for rec in res:
                records[rec.node_id] = rec
                tree.nodes[rec.node_id].text = rec.text
        if failure is not None:
            raise GenerationError(f"tree generation failed: {failure}", tree) from failure
    return tree, records
