"""Pipelines (direct, chain-of-thought, argument tree with and without
tournaments, multi-tree ensemble), dataset loading and benchmark metrics."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import os
import random
import statistics
import time
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from argtree import persistence
from argtree.calibration import BTConfig, calibrate_tree
from argtree.core import DEFAULT_THRESHOLD, ReasoningTree, Verdict
from argtree.errors import ArgTreeError, ConfigError, PipelineError
from argtree.generation import GenerationConfig, build_tree
from argtree.judging import (
    Backend,
    BackendConfig,
    ChatCompletionsBackend,
    EvaluatorSetting,
    EvaluatorTag,
    Judgment,
    JudgeRequest,
    MockBackend,
    OracleMock,
    ask,
    intrinsic_strength,
    parse_yes_no,
)
from argtree import templates
from argtree.persistence import RunTrace
from argtree.semantics import aggregate, apply_report
from argtree.tournament import TournamentOptions, run_all

logger = logging.getLogger(__name__)


class Method(str, enum.Enum):
    DIRECT = "DIRECT"
    COT = "COT"
    ARGLLM = "ARGLLM"
    ART = "ART"
    ART_ENSEMBLE = "ART_ENSEMBLE"

    @classmethod
    def parse(cls, value: str) -> Method:
        aliases = {"ENSEMBLE": "ART_ENSEMBLE"}
        v = value.strip().upper().replace("-", "_")
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ConfigError(f"unknown method {value!r}") from None


BACKEND_KINDS = ("http", "mock", "mock-oracle")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run's results. Echoed into every trace."""

    method: Method = Method.ART
    depth: int = 1
    breadth: int = 1
    lam: float = 0.5
    epsilon: float = 1e-9
    max_bt_iters: int = 100
    bt_tol: float = 1e-10
    bt_stabilizer: str = "guard"
    threshold: float = DEFAULT_THRESHOLD
    evaluator: EvaluatorSetting = field(default_factory=EvaluatorSetting)
    generator: BackendConfig = field(default_factory=BackendConfig)
    backend: str = "http"
    seed: int = 0
    ensemble_size: int = 2
    repeats: int = 1
    swap_positions: bool = False
    allow_large: bool = False

    def __post_init__(self):
        if self.method is Method.ARGLLM and self.lam != 0:
            raise ConfigError("method ARGLLM requires lambda = 0")
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(f"backend must be one of {BACKEND_KINDS}")
        if self.method is Method.ART_ENSEMBLE and self.ensemble_size < 2:
            raise ConfigError("ensemble_size must be >= 2")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        self.bt_config()
        self.generation_config()
        TournamentOptions(self.repeats, self.swap_positions)

    def bt_config(self) -> BTConfig:
        return BTConfig(self.epsilon, self.max_bt_iters, self.bt_tol, self.lam, self.bt_stabilizer)

    def generation_config(self) -> GenerationConfig:
        return GenerationConfig(self.depth, self.breadth, self.allow_large)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "depth": self.depth,
            "breadth": self.breadth,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "max_bt_iters": self.max_bt_iters,
            "bt_tol": self.bt_tol,
            "bt_stabilizer": self.bt_stabilizer,
            "threshold": self.threshold,
            "evaluator": self.evaluator.to_dict(),
            "generator": self.generator.to_dict(),
            "backend": self.backend,
            "seed": self.seed,
            "ensemble_size": self.ensemble_size,
            "repeats": self.repeats,
            "swap_positions": self.swap_positions,
            "allow_large": self.allow_large,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        data = dict(data)
        kwargs: dict[str, Any] = {}
        if "method" in data:
            kwargs["method"] = Method.parse(data.pop("method"))
        if "lambda" in data:
            kwargs["lam"] = float(data.pop("lambda"))
        if "evaluator" in data:
            ev = data.pop("evaluator")
            kwargs["evaluator"] = (
                EvaluatorSetting.from_dict(ev) if isinstance(ev, Mapping)
                else EvaluatorSetting(EvaluatorTag(str(ev).upper()))
            )
        if "generator" in data:
            kwargs["generator"] = BackendConfig.from_dict(data.pop("generator"))
        allowed = set(cls.__dataclass_fields__) - {"method", "lam", "evaluator", "generator"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs.update(data)
        if kwargs.get("method") is Method.ARGLLM and "lam" not in kwargs:
            kwargs["lam"] = 0.0
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class Runtime:
    """Execution knobs that never change results (so they stay out of traces)."""

    parallelism: int = 8
    record_parallelism: int = 1
    schedule_seed: int | None = None
    record_timing: bool = False
    backend_factory: Callable[[str, int], Backend] | None = None
    labels: Mapping[str, bool] | None = None  # for the oracle mock


@dataclass(frozen=True)
class ClaimRecord:
    id: str
    claim: str
    label: bool


@dataclass
class ClaimResult:
    id: str
    label: bool
    probability: float | None = None
    predicted: bool | None = None
    trace: str | None = None
    error: str | None = None

    @property
    def correct(self) -> bool | None:
        return None if self.predicted is None else self.predicted == self.label


@dataclass
class RunResult:
    per_claim: dict[str, ClaimResult]
    accuracy: float
    root_probability_variance: float
    tau_prime_variance: float
    evaluated: int
    excluded: int
    correct: int


# --- datasets ---------------------------------------------------------------------


def load_dataset(path: str | os.PathLike) -> list[ClaimRecord]:
    """Read a JSON-lines file of ``{"id", "claim", "label"}`` records."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    records: list[ClaimRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}:{lineno}: record must be an object")
        for key in ("id", "claim", "label"):
            if key not in obj:
                raise ConfigError(f"{path}:{lineno}: missing field {key!r}")
        rid, claim, label = str(obj["id"]), obj["claim"], obj["label"]
        if not isinstance(claim, str) or not claim.strip():
            raise ConfigError(f"{path}:{lineno}: empty claim")
        if not isinstance(label, bool):
            raise ConfigError(f"{path}:{lineno}: label must be true or false")
        if rid in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        records.append(ClaimRecord(rid, claim, label))
    if not records:
        logger.warning("dataset %s is empty", path)
    else:
        n_true = sum(r.label for r in records)
        logger.info("loaded %d claims (%d true, %d false)", len(records), n_true, len(records) - n_true)
    return records


# --- backends ---------------------------------------------------------------------


def default_backend_factory(config: ExperimentConfig, runtime: Runtime) -> Callable[[str, int], Backend]:
    if runtime.backend_factory is not None:
        return runtime.backend_factory
    if config.backend == "mock":
        return lambda role, seed: MockBackend(seed)
    if config.backend == "mock-oracle":
        cache: dict[int, OracleMock] = {}

        def oracle(role: str, seed: int) -> Backend:
            # one instance per seed so the judge sees the generator's truth table
            if seed not in cache:
                cache[seed] = OracleMock(seed, runtime.labels or {})
            return cache[seed]

        return oracle
    http: dict[str, ChatCompletionsBackend] = {}

    def make(role: str, seed: int) -> Backend:
        if role not in http:
            cfg = config.generator
            if role == "judge" and config.evaluator.tag is EvaluatorTag.SEPARATE:
                cfg = config.evaluator.judge_backend
            http[role] = ChatCompletionsBackend(cfg)
        return http[role]

    return make


@dataclass
class Backends:
    generator: Backend
    judge: Backend


def backends_for(config: ExperimentConfig, runtime: Runtime, seed: int) -> Backends:
    factory = default_backend_factory(config, runtime)
    gen = factory("generator", seed)
    if config.evaluator.tag is EvaluatorTag.SEPARATE:
        return Backends(gen, factory("judge", seed))
    return Backends(gen, gen)


def member_seed(seed: int, index: int) -> int:
    return seed * 1_000_003 + index


# --- baselines --------------------------------------------------------------------


def _run_yes_no(record: ClaimRecord, backend: Backend, method: Method, threshold: float):
    cot = method is Method.COT
    prompt = templates.render("cot" if cot else "direct", claim=record.claim)
    req = JudgeRequest("cot" if cot else "direct", prompt, {"claim": record.claim})
    yes, j = ask(backend, req, lambda t: parse_yes_no(t, answer_line_only=cot), "strict_yesno")
    verdict = Verdict.from_probability(1.0 if yes else 0.0, threshold)
    return verdict, j


def _baseline_trace(record, config, verdict: Verdict, j: Judgment) -> RunTrace:
    return RunTrace(
        kind="baseline",
        claim=_claim_dict(record),
        config=config.to_dict(),
        verdict=persistence.verdict_dict(verdict, config.threshold),
        method=config.method.value,
        prompts=j.prompts,
        responses=j.responses,
    )


def run_direct(record: ClaimRecord, backend: Backend, threshold: float = DEFAULT_THRESHOLD):
    verdict, _ = _run_yes_no(record, backend, Method.DIRECT, threshold)
    return verdict.probability, verdict.label


def run_cot(record: ClaimRecord, backend: Backend, threshold: float = DEFAULT_THRESHOLD):
    verdict, _ = _run_yes_no(record, backend, Method.COT, threshold)
    return verdict.probability, verdict.label


# --- tree pipelines -------------------------------------------------------------


def _claim_dict(record: ClaimRecord) -> dict:
    return {"id": record.id, "text": record.claim, "label": record.label}


def _phase(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ArgTreeError as exc:
        raise PipelineError(name, exc) from exc


def score_intrinsic(tree: ReasoningTree, judge: Backend, parallelism: int = 1) -> dict[str, Judgment]:
    """Set ``tau`` (and ``tau_prime``) on every node, root included."""

    def one(node_id: str) -> Judgment:
        node = tree.nodes[node_id]
        if node.parent is None:
            return intrinsic_strength(node.text, None, None, judge)
        return intrinsic_strength(tree.nodes[node.parent].text, node.text, node.polarity, judge)

    ids = [n.id for n in tree.walk()]
    if parallelism <= 1:
        results = [one(i) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, ids))
    out = {}
    for nid, j in zip(ids, results):
        tree.nodes[nid].set_tau(j.value)
        out[nid] = j
    return out


def _tree_trace(record, config, tree, gen, intr, comparisons, cals, report, timing) -> RunTrace:
    return RunTrace(
        kind="tree",
        claim=_claim_dict(record),
        config=config.to_dict(),
        method=config.method.value,
        tree=persistence.tree_to_dict(tree),
        generation=persistence.generation_log(gen),
        intrinsic=persistence.intrinsic_log(intr),
        tournament=persistence.tournament_log(comparisons),
        calibration=persistence.calibration_log(cals),
        aggregation=persistence.aggregation_dict(report),
        verdict=persistence.verdict_dict(report.verdict, config.threshold),
        timing=timing,
    )


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.marks: dict[str, float] = {}
        self._t = time.perf_counter()

    def mark(self, phase: str) -> None:
        now = time.perf_counter()
        self.marks[phase] = round(now - self._t, 6)
        self._t = now

    def result(self) -> dict | None:
        return dict(self.marks) if self.enabled else None


def run_art(
    record: ClaimRecord,
    config: ExperimentConfig,
    runtime: Runtime | None = None,
    *,
    seed: int | None = None,
) -> tuple[float, bool, RunTrace]:
    """Generate, score, run tournaments, calibrate and aggregate one claim."""
    runtime = runtime or Runtime()
    seed = config.seed if seed is None else seed
    be = backends_for(config, runtime, seed)
    clock = _Clock(runtime.record_timing)
    rng = random.Random(runtime.schedule_seed) if runtime.schedule_seed is not None else None

    tree, gen = _phase("generation", build_tree, record.claim, config.generation_config(),
                       be.generator, parallelism=runtime.parallelism)
    clock.mark("generation")
    intr = _phase("intrinsic", score_intrinsic, tree, be.judge, runtime.parallelism)
    clock.mark("intrinsic")
    matrices, comparisons = _phase(
        "tournament", run_all, tree, be.judge,
        TournamentOptions(config.repeats, config.swap_positions),
        parallelism=runtime.parallelism, rng=rng,
    )
    clock.mark("tournament")
    tree, cals = _phase("calibration", calibrate_tree, tree, matrices, config.bt_config())
    clock.mark("calibration")
    report = _phase("aggregation", aggregate, tree, config.threshold)
    apply_report(tree, report)
    clock.mark("aggregation")
    trace = _tree_trace(record, config, tree, gen, intr, comparisons, cals, report, clock.result())
    return report.root_probability, report.verdict.is_true, trace


def run_argllm(
    record: ClaimRecord,
    config: ExperimentConfig,
    runtime: Runtime | None = None,
    *,
    seed: int | None = None,
) -> tuple[float, bool, RunTrace]:
    """Tree generation, intrinsic scoring and aggregation only: no tournaments
    and no calibration, so every tau' is the intrinsic tau."""
    runtime = runtime or Runtime()
    seed = config.seed if seed is None else seed
    be = backends_for(config, runtime, seed)
    clock = _Clock(runtime.record_timing)
    tree, gen = _phase("generation", build_tree, record.claim, config.generation_config(),
                       be.generator, parallelism=runtime.parallelism)
    clock.mark("generation")
    intr = _phase("intrinsic", score_intrinsic, tree, be.judge, runtime.parallelism)
    clock.mark("intrinsic")
    report = _phase("aggregation", aggregate, tree, config.threshold)
    apply_report(tree, report)
    clock.mark("aggregation")
    trace = _tree_trace(record, config, tree, gen, intr, [], {}, report, clock.result())
    return report.root_probability, report.verdict.is_true, trace


def run_ensemble(
    record: ClaimRecord,
    config: ExperimentConfig,
    runtime: Runtime | None = None,
    *,
    seeds: Sequence[int] | None = None,
) -> tuple[float, bool, RunTrace]:
    """Average the root probabilities of independent trees."""
    if config.ensemble_size < 2:
        raise ConfigError("ensemble_size must be >= 2")
    if seeds is None:
        seeds = [member_seed(config.seed, i) for i in range(config.ensemble_size)]
    member_cfg = replace(config, method=Method.ART)
    members = []
    for i, s in enumerate(seeds):
        try:
            members.append(run_art(record, member_cfg, runtime, seed=s))
        except ArgTreeError as exc:
            raise PipelineError(f"ensemble member {i}", exc) from exc
    mean = sum(p for p, _, _ in members) / len(members)
    verdict = Verdict.from_probability(mean, config.threshold)
    trace = RunTrace(
        kind="ensemble",
        claim=_claim_dict(record),
        config=config.to_dict(),
        method=config.method.value,
        members=[t.to_dict() for _, _, t in members],
        verdict=persistence.verdict_dict(verdict, config.threshold),
    )
    return mean, verdict.is_true, trace


def run_method(record: ClaimRecord, config: ExperimentConfig, runtime: Runtime | None = None):
    """Dispatch on ``config.method``; returns ``(probability, predicted, trace)``."""
    runtime = runtime or Runtime()
    m = config.method
    if m in (Method.DIRECT, Method.COT):
        be = backends_for(config, runtime, config.seed)
        try:
            verdict, j = _run_yes_no(record, be.generator, m, config.threshold)
        except ArgTreeError as exc:
            raise PipelineError(m.value.lower(), exc) from exc
        return verdict.probability, verdict.is_true, _baseline_trace(record, config, verdict, j)
    if m is Method.ARGLLM:
        return run_argllm(record, config, runtime)
    if m is Method.ART:
        return run_art(record, config, runtime)
    return run_ensemble(record, config, runtime)


# --- evaluation -------------------------------------------------------------------


def trace_name(record_id: str) -> str:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in record_id)
    return f"traces/{safe}.json"


def _tau_primes(trace: RunTrace) -> list[float]:
    if trace.kind == "tree":
        return [n["tau_prime"] for n in trace.tree["nodes"] if n["parent"] is not None]
    if trace.kind == "ensemble":
        return [v for m in trace.members for v in _tau_primes(RunTrace.from_dict(m))]
    return []


def evaluate(
    config: ExperimentConfig,
    dataset: Sequence[ClaimRecord],
    runtime: Runtime | None = None,
    out_dir: str | os.PathLike | None = None,
) -> tuple[RunResult, dict[str, RunTrace]]:
    """Run ``config.method`` over every record.

    Records whose pipeline fails are excluded from accuracy and counted.
    Variances use the population formula.
    """
    if not dataset:
        raise ConfigError("dataset is empty")
    runtime = runtime or Runtime()
    if config.backend == "mock-oracle" and runtime.labels is None:
        runtime = replace(runtime, labels={r.claim: r.label for r in dataset})

    def one(record: ClaimRecord):
        try:
            p, pred, trace = run_method(record, config, runtime)
            return ClaimResult(record.id, record.label, p, pred, trace_name(record.id)), trace
        except ArgTreeError as exc:
            logger.warning("claim %s failed: %s", record.id, exc)
            return ClaimResult(record.id, record.label, error=str(exc)), None

    if runtime.record_parallelism <= 1:
        outputs = [one(r) for r in dataset]
    else:
        with ThreadPoolExecutor(max_workers=runtime.record_parallelism) as pool:
            outputs = list(pool.map(one, dataset))

    per_claim = {res.id: res for res, _ in outputs}
    traces = {res.id: tr for res, tr in outputs if tr is not None}
    ok = [r for r in per_claim.values() if r.error is None]
    correct = sum(1 for r in ok if r.correct)
    probs = [r.probability for r in ok]
    taus = [v for tr in traces.values() for v in _tau_primes(tr)]
    result = RunResult(
        per_claim=per_claim,
        accuracy=correct / len(ok) if ok else 0.0,
        root_probability_variance=statistics.pvariance(probs) if probs else 0.0,
        tau_prime_variance=statistics.pvariance(taus) if taus else 0.0,
        evaluated=len(ok),
        excluded=len(per_claim) - len(ok),
        correct=correct,
    )
    if out_dir is not None:
        write_results(result, traces, config, out_dir)
    return result, traces


RESULT_COLUMNS = ("id", "label", "probability", "predicted", "correct", "trace", "error")


def results_table(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in result.per_claim.values():
        w.writerow([
            r.id, r.label,
            "" if r.probability is None else repr(r.probability),
            "" if r.predicted is None else r.predicted,
            "" if r.correct is None else r.correct,
            r.trace or "", r.error or "",
        ])
    return buf.getvalue()


def summary_dict(result: RunResult, config: ExperimentConfig) -> dict:
    return {
        "config": config.to_dict(),
        "accuracy": result.accuracy,
        "root_probability_variance": result.root_probability_variance,
        "tau_prime_variance": result.tau_prime_variance,
        "evaluated": result.evaluated,
        "excluded": result.excluded,
        "correct": result.correct,
    }


def write_results(result: RunResult, traces: Mapping[str, RunTrace], config, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_table(result), encoding="utf-8")
    (out / "summary.json").write_text(
        json.dumps(summary_dict(result, config), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for rid, trace in traces.items():
        persistence.write_trace(trace, out / result.per_claim[rid].trace)
