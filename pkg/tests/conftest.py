from __future__ import annotations

import pytest

from argtree.harness import ClaimRecord, ExperimentConfig, Method, Runtime
from argtree.judging import JudgeOutcome, MockBackend


def decisive(winner: JudgeOutcome = JudgeOutcome.SUPPORT_WINS, seed: int = 0, **kw) -> MockBackend:
    """Mock whose every comparison has the same outcome."""
    return MockBackend(seed, compare_rule=lambda p, s, a: winner, **kw)


def mock_runtime(backend: MockBackend, **kw) -> Runtime:
    return Runtime(backend_factory=lambda role, seed: backend, **kw)


def seeded_runtime(**kw) -> Runtime:
    """Each derived seed gets its own plain mock."""
    return Runtime(backend_factory=lambda role, seed: MockBackend(seed), **kw)


def art_config(**kw) -> ExperimentConfig:
    kw.setdefault("backend", "mock")
    return ExperimentConfig(**kw)


def claims(n: int, prefix: str = "c") -> list[ClaimRecord]:
    return [
        ClaimRecord(f"{prefix}{i:03d}", f"Synthetic claim number {i} holds in general.", i % 2 == 0)
        for i in range(n)
    ]


@pytest.fixture
def claim() -> ClaimRecord:
    return ClaimRecord("earth", "The Earth orbits the Sun.", True)


__all__ = ["decisive", "mock_runtime", "seeded_runtime", "art_config", "claims", "Method"]
