"""Prompt templates shipped as plain text files under ``argtree/prompts``.

Templates use ``{name}`` placeholders. Attack-side files are the support-side
files with a fixed word substitution, see :data:`ATTACK_SWAPS`.
"""

from __future__ import annotations

import functools
import string
from importlib import resources

from argtree.errors import ConfigError

ATTACK_SWAPS = {
    "generate": (("supporting", "attacking"), ("support", "attack")),
    "intrinsic": (("in favour of", "against"), ("supports", "refutes")),
}


@functools.lru_cache(maxsize=None)
def load(name: str) -> str:
    path = resources.files("argtree") / "prompts" / f"{name}.txt"
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"unknown prompt template {name!r}") from exc


def placeholders(template: str) -> set[str]:
    return {f for _, f, _, _ in string.Formatter().parse(template) if f}


def render(name: str, **fields: str) -> str:
    template = load(name)
    wanted = placeholders(template)
    missing = wanted - fields.keys()
    if missing:
        raise ConfigError(f"template {name!r} needs fields {sorted(missing)}")
    return template.format(**{k: fields[k] for k in wanted})


def swap_wording(text: str, task: str) -> str:
    for old, new in ATTACK_SWAPS[task]:
        text = text.replace(old, new)
    return text
