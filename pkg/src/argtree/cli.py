"""Command-line driver: ``argtree verify | bench | calibrate | replay``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from argtree import harness, persistence
from argtree.calibration import BTConfig, blend, fit_bt
from argtree.errors import (
    ArgTreeError,
    BackendError,
    ConfigError,
    ParseError,
    TraceError,
    root_cause,
)
from argtree.harness import ClaimRecord, ExperimentConfig, Runtime
from argtree.judging import BackendConfig, EvaluatorSetting, EvaluatorTag
from argtree.tournament import WinMatrix

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_PARSE = 4
EXIT_TRACE = 5


def exit_code(exc: BaseException) -> int:
    cause = root_cause(exc)
    for kind, code in (
        (ConfigError, EXIT_CONFIG),
        (BackendError, EXIT_BACKEND),
        (ParseError, EXIT_PARSE),
        (TraceError, EXIT_TRACE),
    ):
        if isinstance(cause, kind):
            return code
    return EXIT_FAILURE


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the config code rather than argparse's 2-by-accident."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so we can tell which flags were given
    p.add_argument("--config", type=Path, help="JSON file with configuration values")
    p.add_argument("--method", help="direct, cot, argllm, art or ensemble")
    p.add_argument("--depth", type=int)
    p.add_argument("--breadth", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-bt-iters", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--evaluator", choices=["self", "separate"])
    p.add_argument("--gen-endpoint")
    p.add_argument("--judge-endpoint")
    p.add_argument("--model")
    p.add_argument("--judge-model")
    p.add_argument("--seed", type=int)
    p.add_argument("--ensemble-size", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--swap-positions", action="store_true", default=None)
    p.add_argument(
        "--mock", nargs="?", const="mock", choices=["mock", "oracle"],
        help="use the offline deterministic backend (oracle: answers from dataset labels)",
    )
    p.add_argument("--allow-large", action="store_true", default=None)
    p.add_argument("--parallelism", type=int, default=8)
    p.add_argument("--record-parallelism", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("runs"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="argtree", description="Argument-tree claim verification.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="verify a single claim")
    p.add_argument("claim", nargs="?", help="claim text")
    p.add_argument("--claim-file", type=Path, help="read the claim from a file")
    p.add_argument("--id", default="claim", help="record id used for the trace file name")
    _add_run_flags(p)

    p = sub.add_parser("bench", help="evaluate a method over a JSON-lines dataset")
    p.add_argument("dataset", type=Path)
    _add_run_flags(p)

    p = sub.add_parser("calibrate", help="fit strengths from stored win matrices")
    p.add_argument("input", type=Path, help="a trace or a JSON list of parent tournaments")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--max-bt-iters", type=int, default=100)

    p = sub.add_parser("replay", help="verify a trace or compute a what-if verdict")
    p.add_argument("trace", type=Path)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--threshold", type=float)
    return parser


# --- configuration ----------------------------------------------------------------


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then command-line overrides."""
    data: dict[str, Any] = {}
    if args.config is not None:
        loaded = _read_json(args.config)
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        data.update(loaded)
    flat = {
        "method": args.method,
        "depth": args.depth,
        "breadth": args.breadth,
        "lambda": args.lam,
        "epsilon": args.epsilon,
        "max_bt_iters": args.max_bt_iters,
        "threshold": args.threshold,
        "seed": args.seed,
        "ensemble_size": args.ensemble_size,
        "repeats": args.repeats,
        "swap_positions": args.swap_positions,
        "allow_large": args.allow_large,
    }
    data.update({k: v for k, v in flat.items() if v is not None})
    if args.mock is not None:
        data["backend"] = "mock-oracle" if args.mock == "oracle" else "mock"

    gen = BackendConfig.from_dict(data.pop("generator", {}) or {})
    if args.gen_endpoint:
        gen = replace(gen, endpoint_url=args.gen_endpoint)
    if args.model:
        gen = replace(gen, model_name=args.model)
    ev = data.pop("evaluator", None)
    if isinstance(ev, str):
        ev = {"tag": ev}
    ev = dict(ev or {})
    if args.evaluator:
        ev["tag"] = args.evaluator
    tag = EvaluatorTag(str(ev.get("tag", "SELF")).upper())
    if args.judge_endpoint or args.judge_model:
        tag = EvaluatorTag.SEPARATE
    judge = None
    if tag is EvaluatorTag.SEPARATE:
        judge = BackendConfig.from_dict(ev["judge_backend"]) if ev.get("judge_backend") else gen
        if args.judge_endpoint:
            judge = replace(judge, endpoint_url=args.judge_endpoint)
        if args.judge_model:
            judge = replace(judge, model_name=args.judge_model)
    data["generator"] = gen.to_dict()
    data["evaluator"] = EvaluatorSetting(tag, judge).to_dict()
    try:
        return ExperimentConfig.from_dict(data)
    except ValueError as exc:  # enum conversions
        raise ConfigError(str(exc)) from exc


def _runtime(args: argparse.Namespace) -> Runtime:
    if args.parallelism < 1 or args.record_parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    return Runtime(parallelism=args.parallelism, record_parallelism=args.record_parallelism)


# --- rendering ------------------------------------------------------------------


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.4f}"


def render_tree(trace: persistence.RunTrace) -> str:
    if trace.kind != "tree":
        return ""
    tree = persistence.tree_from_dict(trace.tree)
    lines = []
    for node in tree.walk():
        tag = node.polarity.letter if node.polarity else "C"
        text = " ".join(node.text.split())
        if len(text) > 70:
            text = text[:67] + "..."
        lines.append(
            f"{'  ' * node.depth}[{tag}] {node.id}  tau={_fmt(node.tau)} "
            f"tau'={_fmt(node.tau_prime)} s={_fmt(node.s)}  {text}"
        )
    if trace.tournament:
        lines.append("pairwise outcomes:")
        for r in trace.tournament:
            lines.append(f"  {r['support_id']} vs {r['attack_id']}: {r['outcome']}")
    return "\n".join(lines)


def _render_result(trace: persistence.RunTrace) -> str:
    v = trace.verdict
    out = [f"verdict: {v['label']}  probability: {v['probability']:.6f}"]
    if trace.kind == "ensemble":
        for i, m in enumerate(trace.members):
            out.append(f"member {i}: {m['verdict']['probability']:.6f}")
    tree = render_tree(trace)
    if tree:
        out.append(tree)
    return "\n".join(out)


# --- commands ---------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    if args.claim_file is not None:
        try:
            claim = args.claim_file.read_text(encoding="utf-8").strip()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.claim_file}: {exc}") from exc
    else:
        claim = (args.claim or "").strip()
    if not claim:
        raise ConfigError("no claim given")
    config = resolve_config(args)
    record = ClaimRecord(args.id, claim, label=False)  # label unknown; unused for a single claim
    _, _, trace = harness.run_method(record, config, _runtime(args))
    path = args.out / harness.trace_name(record.id)
    persistence.write_trace(trace, path)
    print(_render_result(trace))
    print(f"trace: {path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    dataset = harness.load_dataset(args.dataset)
    result, _ = harness.evaluate(config, dataset, _runtime(args), out_dir=args.out)
    print(f"method: {config.method.value}")
    print(f"accuracy: {result.accuracy:.4f} ({result.correct}/{result.evaluated})")
    print(f"excluded: {result.excluded}")
    print(f"root probability variance: {result.root_probability_variance:.6f}")
    print(f"tau' variance: {result.tau_prime_variance:.6f}")
    print(f"results: {args.out / 'results.csv'}")
    return EXIT_OK


def _tournaments_from(data: Any) -> list[dict]:
    if isinstance(data, dict) and "schema_version" in data:
        trace = persistence.RunTrace.from_dict(data)
        if trace.kind != "tree":
            raise ConfigError(f"a {trace.kind} trace holds no win matrices of its own")
        taus = {n["id"]: n["tau"] for n in trace.tree["nodes"]}
        return [
            {
                "parent_id": c["parent_id"],
                "supporters": c["supporters"],
                "attackers": c["attackers"],
                "counts": c["counts"],
                "tau": {k: taus[k] for k in c["supporters"] + c["attackers"]},
            }
            for c in trace.calibration or []
        ]
    if not isinstance(data, list):
        raise ConfigError("expected a trace or a JSON list of tournaments")
    return data


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = BTConfig(epsilon=args.epsilon, max_iters=args.max_bt_iters, lam=args.lam)
    out = []
    for i, t in enumerate(_tournaments_from(_read_json(args.input))):
        try:
            pid = t.get("parent_id", f"parent{i}")
            sup, att = list(t["supporters"]), list(t["attackers"])
            counts = {(w, l): int(c) for w, l, c in t["counts"]}
            tau = {k: float(t.get("tau", {}).get(k, 0.5)) for k in sup + att}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"tournament {i}: malformed entry ({exc!r})") from exc
        result = fit_bt(WinMatrix(pid, counts), sup, att, cfg)
        tau_prime = {
            k: tau[k] if result.no_evidence else blend(tau[k], result.theta[k], cfg.lam)
            for k in sup + att
        }
        out.append({
            "parent_id": pid,
            "theta": result.theta,
            "tau_prime": tau_prime,
            "iterations_used": result.iterations_used,
            "converged": result.converged,
            "no_evidence": result.no_evidence,
        })
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    trace = persistence.read_trace(args.trace)
    if args.lam is None and args.threshold is None:
        verdict = persistence.replay(trace)
        print(f"verified: {verdict.label.value}  probability: {verdict.probability:.6f}")
        return EXIT_OK
    verdict = persistence.what_if(trace, lam=args.lam, threshold=args.threshold)
    stored = trace.verdict
    print("what-if (not a verification; trace unchanged)")
    print(f"stored:         {stored['label']}  probability: {stored['probability']:.6f}")
    print(f"counterfactual: {verdict.label.value}  probability: {verdict.probability:.6f}")
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "bench": cmd_bench,
    "calibrate": cmd_calibrate,
    "replay": cmd_replay,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ArgTreeError as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
