"""Judge backends and the three judging capabilities built on them.

A backend only turns a :class:`JudgeRequest` into raw response text. Prompt
rendering, response parsing and the single strict reprompt live here, so the
HTTP client and the deterministic mock share exactly the same parsing path.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from collections import Counter
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol

import httpx

from argtree import templates
from argtree.core import Polarity
from argtree.errors import BackendError, ConfigError, JudgeRangeError, ParseError

logger = logging.getLogger(__name__)


class JudgeOutcome(str, enum.Enum):
    SUPPORT_WINS = "SUPPORT_WINS"
    ATTACK_WINS = "ATTACK_WINS"
    TIE = "TIE"


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "http://localhost:8000/v1"
    model_name: str = "default"
    temperature: float = 0.2
    max_new_tokens: int = 512
    top_p: float = 0.95
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = 2  # retries after the first attempt
    request_timeout: float = 60.0
    retry_backoff: float = 1.0  # seconds before the first retry
    max_in_flight: int = 8

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> BackendConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown backend settings {sorted(unknown)}")
        return cls(**data)


class EvaluatorTag(str, enum.Enum):
    SELF = "SELF"
    SEPARATE = "SEPARATE"


@dataclass(frozen=True)
class EvaluatorSetting:
    tag: EvaluatorTag = EvaluatorTag.SELF
    judge_backend: BackendConfig | None = None

    def __post_init__(self):
        if (self.tag is EvaluatorTag.SEPARATE) != (self.judge_backend is not None):
            raise ConfigError("a judge backend is required iff the evaluator is SEPARATE")

    def to_dict(self) -> dict:
        return {
            "tag": self.tag.value,
            "judge_backend": self.judge_backend.to_dict() if self.judge_backend else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvaluatorSetting:
        jb = data.get("judge_backend")
        return cls(
            EvaluatorTag(str(data.get("tag", "SELF")).upper()),
            BackendConfig.from_dict(jb) if jb else None,
        )


@dataclass(frozen=True)
class JudgeRequest:
    """One model call. ``fields`` carries the structured inputs that the mock
    keys on; HTTP backends send only ``prompt``."""

    task: str  # generate | compare | intrinsic | direct | cot
    prompt: str
    fields: Mapping[str, Any] = field(default_factory=dict)
    attempt: int = 0


class Backend(Protocol):
    def complete(self, request: JudgeRequest) -> str: ...


@dataclass
class Judgment:
    prompts: list[str]
    responses: list[str]
    outcome: JudgeOutcome | None = None
    value: float | None = None


# --- parsing -----------------------------------------------------------------

_DECORATION = " \t*_`'\".:;!()[]"
_PREFIX = re.compile(
    r"^(final answer|answer|verdict|winner|decision|score|strength|rating)\s*[:\-]\s*",
    re.I,
)
_OUTCOME_WORDS = {
    "support": JudgeOutcome.SUPPORT_WINS,
    "attack": JudgeOutcome.ATTACK_WINS,
    "tie": JudgeOutcome.TIE,
}
_NUMBER = re.compile(r"(?<![\w.])[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?(?![\w.])")


def _last_line(text: str) -> str:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        return ""
    # a leading dot may belong to a number such as ".5"
    lead = _DECORATION.replace(".", "")
    line = lines[-1].lstrip(lead).rstrip(_DECORATION)
    return _PREFIX.sub("", line).lstrip(lead).rstrip(_DECORATION)


def parse_outcome(text: str) -> JudgeOutcome:
    """Last non-empty line equal to SUPPORT/ATTACK/TIE, else a single
    occurrence of one of those words anywhere, else :class:`ParseError`."""
    last = _last_line(text).lower()
    if last in _OUTCOME_WORDS:
        return _OUTCOME_WORDS[last]
    hits = re.findall(r"\b(support|attack|tie)\b", text, re.I)
    if len(hits) == 1:
        return _OUTCOME_WORDS[hits[0].lower()]
    raise ParseError(f"no unambiguous SUPPORT/ATTACK/TIE verdict in {text!r}", [text])


def parse_strength(text: str) -> float:
    last = _last_line(text)
    if _NUMBER.fullmatch(last):
        value = float(last)
    else:
        hits = _NUMBER.findall(text)
        if len(hits) != 1:
            raise ParseError(f"no unambiguous score in {text!r}", [text])
        value = float(hits[0])
    if not 0.0 <= value <= 1.0:
        raise JudgeRangeError(f"score {value} outside [0, 1]", [text])
    return value


def parse_yes_no(text: str, *, answer_line_only: bool = False) -> bool:
    """Parse a Yes/No verdict.

    With ``answer_line_only`` (chain-of-thought replies) only an explicit
    ``Answer: Yes|No`` line or a bare final Yes/No line counts, since the
    reasoning text may mention either word.
    """
    answers = re.findall(r"answer\s*[:\-]\s*\**\s*(yes|no)\b", text, re.I)
    if answers:
        return answers[-1].lower() == "yes"
    last = _last_line(text).lower()
    if last in ("yes", "no"):
        return last == "yes"
    if not answer_line_only:
        hits = re.findall(r"\b(yes|no)\b", text, re.I)
        if len(hits) == 1:
            return hits[0].lower() == "yes"
    raise ParseError(f"no Yes/No verdict in {text!r}", [text])


def ask(backend: Backend, request: JudgeRequest, parser: Callable[[str], Any], strict_suffix: str):
    """Call ``backend`` and parse; on a parse failure reprompt once with a
    stricter format instruction. Returns ``(value, judgment)``."""
    prompts = [request.prompt]
    responses = [backend.complete(request)]
    try:
        return parser(responses[0]), Judgment(prompts, responses)
    except ParseError as first:
        logger.debug("reprompting %s after parse failure: %s", request.task, first)
    strict = JudgeRequest(
        request.task, request.prompt + templates.load(strict_suffix), request.fields, 1
    )
    prompts.append(strict.prompt)
    responses.append(backend.complete(strict))
    try:
        return parser(responses[1]), Judgment(prompts, responses)
    except ParseError as exc:
        err = type(exc)(f"{request.task}: {exc} (after reprompt)", responses)
        raise err from exc


def _require_text(**texts: str) -> None:
    for name, value in texts.items():
        if not isinstance(value, str) or not value.strip():
            raise ConfigError(f"{name} must be non-empty text")


def compare(
    parent_text: str,
    support_text: str,
    attack_text: str,
    judge: Backend,
    *,
    swapped: bool = False,
) -> Judgment:
    """Ask ``judge`` whether the supporter or the attacker is more persuasive."""
    _require_text(parent=parent_text, support=support_text, attack=attack_text)
    name = "compare_swapped" if swapped else "compare"
    prompt = templates.render(name, parent=parent_text, support=support_text, attack=attack_text)
    req = JudgeRequest(
        "compare",
        prompt,
        {"parent": parent_text, "support": support_text, "attack": attack_text, "swapped": swapped},
    )
    outcome, j = ask(judge, req, parse_outcome, "strict_compare")
    j.outcome = outcome
    return j


def intrinsic_prompt(parent_text: str, argument_text: str | None, polarity: Polarity | None) -> str:
    if polarity is None:
        return templates.render("intrinsic_claim", parent=parent_text)
    name = "intrinsic_support" if polarity is Polarity.SUPPORT else "intrinsic_attack"
    return templates.render(name, parent=parent_text, argument=argument_text)


def intrinsic_strength(
    parent_text: str, argument_text: str | None, polarity: Polarity | None, judge: Backend
) -> Judgment:
    """Score one argument in isolation; ``polarity=None`` scores the root claim
    itself (``parent_text``) with neutral framing."""
    _require_text(parent=parent_text)
    if polarity is not None:
        _require_text(argument=argument_text)
    req = JudgeRequest(
        "intrinsic",
        intrinsic_prompt(parent_text, argument_text, polarity),
        {
            "parent": parent_text,
            "argument": argument_text,
            "polarity": polarity.value if polarity else None,
        },
    )
    value, j = ask(judge, req, parse_strength, "strict_score")
    j.value = value
    return j


# --- HTTP backend --------------------------------------------------------------


class ChatCompletionsBackend:
    """Client for OpenAI-compatible ``/chat/completions`` servers (vLLM etc).

    Thread-safe; at most ``config.max_in_flight`` requests are outstanding.
    """

    def __init__(
        self,
        config: BackendConfig,
        *,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self._jitter = random.Random()

    @property
    def url(self) -> str:
        return self.config.endpoint_url.rstrip("/") + "/chat/completions"

    def payload(self, prompt: str) -> dict:
        c = self.config
        return {
            "model": c.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": c.temperature,
            "top_p": c.top_p,
            "max_tokens": c.max_new_tokens,
        }

    def _headers(self) -> dict:
        key = os.environ.get(self.config.api_key_env) if self.config.api_key_env else None
        return {"Authorization": f"Bearer {key}"} if key else {}

    def complete(self, request: JudgeRequest) -> str:
        attempts = self.config.max_retries + 1
        last_error: str = ""
        for attempt in range(attempts):
            if attempt:
                delay = self.config.retry_backoff * 2 ** (attempt - 1)
                self._sleep(delay * (1.0 + 0.25 * self._jitter.random()))
            try:
                with self._slots:
                    resp = self._client.post(
                        self.url, json=self.payload(request.prompt), headers=self._headers()
                    )
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning("request to %s failed (%s)", self.url, last_error)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("request to %s returned %s", self.url, last_error)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{self.url}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"{self.url}: malformed completion body") from exc
            return content or ""
        raise BackendError(f"{self.url}: giving up after {attempts} attempts ({last_error})")

    def close(self) -> None:
        self._client.close()


# --- deterministic mock --------------------------------------------------------

_SOURCES = (
    "peer-reviewed studies",
    "historical records",
    "expert panels",
    "direct observations",
    "large statistical surveys",
    "first-principles arguments",
    "official documents",
    "controlled experiments",
)
_VERBS = {
    "SUPPORT": ("corroborate", "are consistent with", "reinforce", "confirm"),
    "ATTACK": ("contradict", "undermine", "cast doubt on", "dispute"),
}


def _digest(*parts: Any) -> int:
    blob = json.dumps(parts, sort_keys=True, ensure_ascii=False, default=str)
    return int.from_bytes(hashlib.sha256(blob.encode("utf-8")).digest()[:8], "big")


def _clip(text: str, n: int = 60) -> str:
    text = " ".join(text.split())
    return text if len(text) <= n else text[: n - 3] + "..."


class MockBackend:
    """Seeded, referentially transparent stand-in for a model server.

    Every response is a pure function of the seed, the request's structured
    fields and the override tables. Identical supporter and attacker texts
    always compare to TIE; intrinsic strength defaults to 0.5.
    """

    def __init__(
        self,
        seed: int = 0,
        *,
        outcomes: Mapping[tuple[str, str, str], JudgeOutcome] | None = None,
        strengths: Mapping[Any, float] | None = None,
        verdicts: Mapping[str, bool] | None = None,
        compare_rule: Callable[[str, str, str], JudgeOutcome | None] | None = None,
        strength_rule: Callable[[str, str | None, str | None], float | None] | None = None,
        raw_rule: Callable[[JudgeRequest], str | None] | None = None,
        default_strength: float = 0.5,
        tie_rate: float = 0.1,
    ):
        self.seed = seed
        self.outcomes = dict(outcomes or {})
        self.strengths = dict(strengths or {})
        self.verdicts = dict(verdicts or {})
        self.compare_rule = compare_rule
        self.strength_rule = strength_rule
        self.raw_rule = raw_rule
        self.default_strength = default_strength
        self.tie_rate = tie_rate

    def complete(self, request: JudgeRequest) -> str:
        if self.raw_rule is not None:
            raw = self.raw_rule(request)
            if raw is not None:
                return raw
        handler = getattr(self, f"_{request.task}", None)
        if handler is None:
            raise BackendError(f"mock backend cannot handle task {request.task!r}")
        return handler(dict(request.fields))

    def outcome_for(self, parent: str, support: str, attack: str) -> JudgeOutcome:
        key = (parent, support, attack)
        if key in self.outcomes:
            return self.outcomes[key]
        if self.compare_rule is not None:
            forced = self.compare_rule(parent, support, attack)
            if forced is not None:
                return forced
        if support == attack:
            return JudgeOutcome.TIE
        h = _digest(self.seed, "compare", parent, support, attack) % 1000
        if h < self.tie_rate * 1000:
            return JudgeOutcome.TIE
        return JudgeOutcome.SUPPORT_WINS if h % 2 == 0 else JudgeOutcome.ATTACK_WINS

    def _compare(self, f: dict) -> str:
        outcome = self.outcome_for(f["parent"], f["support"], f["attack"])
        return {"SUPPORT_WINS": "SUPPORT", "ATTACK_WINS": "ATTACK", "TIE": "TIE"}[outcome.value]

    def _intrinsic(self, f: dict) -> str:
        parent, arg, pol = f["parent"], f.get("argument"), f.get("polarity")
        value = None
        for key in ((parent, arg), arg if arg is not None else parent):
            if key in self.strengths:
                value = self.strengths[key]
                break
        if value is None and self.strength_rule is not None:
            value = self.strength_rule(parent, arg, pol)
        if value is None:
            value = self.default_strength
        return repr(float(value))

    def _generate(self, f: dict) -> str:
        pol = f["polarity"]
        h = _digest(self.seed, "generate", f["parent"], pol, list(f.get("prior_siblings", ())))
        source = _SOURCES[h % len(_SOURCES)]
        verb = _VERBS[pol][(h // 8) % 4]
        return (
            f"{source[0].upper()}{source[1:]} {verb} the statement "
            f"\"{_clip(f['parent'])}\" [{h % 16**6:06x}]."
        )

    def _verdict(self, claim: str) -> bool:
        if claim in self.verdicts:
            return self.verdicts[claim]
        return _digest(self.seed, "verdict", claim) % 2 == 0

    def _direct(self, f: dict) -> str:
        return "Yes" if self._verdict(f["claim"]) else "No"

    def _cot(self, f: dict) -> str:
        answer = "Yes" if self._verdict(f["claim"]) else "No"
        return (
            f"Considering the claim \"{_clip(f['claim'])}\" step by step, "
            f"the available evidence points one way.\nAnswer: {answer}"
        )


def mock_judge(
    seed: int = 0,
    overrides: Mapping[tuple[str, str, str], JudgeOutcome] | None = None,
    strengths: Mapping[Any, float] | None = None,
    **kwargs: Any,
) -> MockBackend:
    return MockBackend(seed, outcomes=overrides, strengths=strengths, **kwargs)


class OracleMock(MockBackend):
    """Mock that knows each claim's ground truth and rigs every judgment in
    its favour: arguments inherit a truth value from their parent (flipped
    for attackers), and the side agreeing with a true parent wins."""

    def __init__(self, seed: int, labels: Mapping[str, bool], **kwargs: Any):
        super().__init__(seed, verdicts=labels, **kwargs)
        self._truth: dict[str, bool] = dict(labels)
        self._lock = threading.Lock()

    def _generate(self, f: dict) -> str:
        text = super()._generate(f)
        parent_truth = self._truth.get(f["parent"])
        if parent_truth is not None:
            with self._lock:
                self._truth[text] = parent_truth if f["polarity"] == "SUPPORT" else not parent_truth
        return text

    def outcome_for(self, parent: str, support: str, attack: str) -> JudgeOutcome:
        truth = self._truth.get(parent)
        if truth is None:
            return super().outcome_for(parent, support, attack)
        return JudgeOutcome.SUPPORT_WINS if truth else JudgeOutcome.ATTACK_WINS


class InstrumentedBackend:
    """Wraps a backend and counts calls per task (thread-safe)."""

    def __init__(self, inner: Backend, name: str = ""):
        self.inner = inner
        self.name = name
        self.calls: Counter = Counter()
        self.requests: list[JudgeRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: JudgeRequest) -> str:
        with self._lock:
            self.calls[request.task] += 1
            self.requests.append(request)
        return self.inner.complete(request)
