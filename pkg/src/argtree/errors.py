"""Exception hierarchy. The CLI maps each family to its own exit code."""

from __future__ import annotations


class ArgTreeError(Exception):
    """Base class for all package errors."""


class ConfigError(ArgTreeError, ValueError):
    """Invalid configuration or parameters."""


class BackendError(ArgTreeError):
    """Transport failure talking to a model server (after retries)."""


class ParseError(ArgTreeError):
    """A model response could not be interpreted (after a reprompt)."""

    def __init__(self, message: str, raw: list[str] | None = None):
        super().__init__(message)
        self.raw = raw or []


class JudgeRangeError(ParseError):
    """A parsed score fell outside [0, 1]."""


class GenerationError(ArgTreeError):
    """Argument generation failed; ``partial_tree`` holds what was built."""

    def __init__(self, message: str, partial_tree=None):
        super().__init__(message)
        self.partial_tree = partial_tree


class TournamentError(ArgTreeError):
    def __init__(self, message: str, parent_id: str | None = None, pair=None):
        super().__init__(message)
        self.parent_id = parent_id
        self.pair = pair


class CalibrationError(ArgTreeError):
    pass


class AggregationError(ArgTreeError):
    pass


class PipelineError(ArgTreeError):
    """A phase of the verification pipeline failed; ``phase`` names it."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"{phase} phase failed: {cause}")
        self.phase = phase


class TraceError(ArgTreeError):
    pass


class SchemaError(TraceError):
    """A trace document is malformed or has an unknown schema version."""


class IntegrityError(TraceError):
    """Recomputed values diverge from those stored in a trace."""

    def __init__(self, message: str, divergent: list[str] | None = None):
        super().__init__(message)
        self.divergent = divergent or []


def root_cause(exc: BaseException) -> BaseException:
    """Follow the ``__cause__`` chain through wrapper errors."""
    seen = set()
    while isinstance(exc, (PipelineError, TournamentError, GenerationError)) and (
        exc.__cause__ is not None and id(exc) not in seen
    ):
        seen.add(id(exc))
        exc = exc.__cause__
    return exc
