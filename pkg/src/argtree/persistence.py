"""Run traces: canonical JSON documents that can be re-aggregated offline.

A trace stores the raw evidence (every prompt and verbatim response), the
per-parent win counts and BT fits, and every tau/tau'/alpha/s value. Replay
recomputes calibration and aggregation from the stored counts and intrinsic
strengths and checks the stored values against the recomputation.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from argtree.calibration import BTConfig, BTResult, ParentCalibration, calibrate_tree
from argtree.core import DEFAULT_THRESHOLD, ArgumentNode, Polarity, ReasoningTree, Verdict
from argtree.errors import ArgTreeError, IntegrityError, SchemaError, TraceError
from argtree.generation import GenerationRecord
from argtree.judging import Judgment, parse_yes_no
from argtree.semantics import AggregationReport, aggregate
from argtree.tournament import ComparisonRecord, WinMatrix

SCHEMA_VERSION = 1
REPLAY_TOL = 1e-12

KINDS = ("tree", "ensemble", "baseline")
REQUIRED = {
    "tree": ("claim", "config", "tree", "generation", "intrinsic", "tournament",
             "calibration", "aggregation", "verdict"),
    "ensemble": ("claim", "config", "members", "verdict"),
    "baseline": ("claim", "config", "method", "prompts", "responses", "verdict"),
}


@dataclass
class RunTrace:
    kind: str
    claim: dict
    config: dict
    verdict: dict
    method: str | None = None
    tree: dict | None = None
    generation: list | None = None
    intrinsic: list | None = None
    tournament: list | None = None
    calibration: list | None = None
    aggregation: dict | None = None
    members: list | None = None
    prompts: list | None = None
    responses: list | None = None
    timing: dict | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: Any) -> RunTrace:
        if not isinstance(data, dict):
            raise SchemaError("trace document must be a JSON object")
        if "schema_version" not in data:
            raise SchemaError("missing field 'schema_version'")
        if data["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {data['schema_version']!r}")
        kind = data.get("kind")
        if kind not in KINDS:
            raise SchemaError(f"field 'kind' must be one of {KINDS}, got {kind!r}")
        for name in REQUIRED[kind]:
            if name not in data:
                raise SchemaError(f"missing field {name!r}")
        for name in ("probability", "label"):
            if name not in data["verdict"]:
                raise SchemaError(f"missing field 'verdict.{name}'")
        unknown = set(data) - set(cls.__dataclass_fields__) - {"schema_version"}
        if unknown:
            raise SchemaError(f"unknown fields {sorted(unknown)}")
        trace = cls(**{k: v for k, v in data.items() if k != "schema_version"})
        if kind == "ensemble":
            trace.members = [RunTrace.from_dict(m).to_dict() for m in trace.members]
        return trace

    @property
    def probability(self) -> float:
        return self.verdict["probability"]


def dumps(trace: RunTrace) -> str:
    return json.dumps(trace.to_dict(), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def write_trace(trace: RunTrace, path: str | os.PathLike) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(trace), encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path: str | os.PathLike) -> RunTrace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return RunTrace.from_dict(data)


# --- conversions ----------------------------------------------------------------


def tree_to_dict(tree: ReasoningTree) -> dict:
    return {
        "root_id": tree.root_id,
        "depth": tree.depth,
        "breadth": tree.breadth,
        "nodes": [
            {
                "id": n.id,
                "text": n.text,
                "polarity": n.polarity.value if n.polarity else None,
                "parent": n.parent,
                "depth": n.depth,
                "children": list(n.children),
                "tau": n.tau,
                "tau_prime": n.tau_prime,
                "s": n.s,
            }
            for n in tree.walk()
        ],
    }


def tree_from_dict(data: Mapping) -> ReasoningTree:
    try:
        nodes = {}
        for d in data["nodes"]:
            nodes[d["id"]] = ArgumentNode(
                id=d["id"],
                text=d["text"],
                polarity=Polarity(d["polarity"]) if d["polarity"] else None,
                tau=d["tau"],
                tau_prime=d.get("tau_prime"),
                s=d.get("s"),
                children=list(d["children"]),
                parent=d["parent"],
                depth=d["depth"],
            )
        return ReasoningTree(data["root_id"], data["depth"], data["breadth"], nodes)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed tree section: {exc!r}") from exc


def matrix_to_list(matrix: WinMatrix) -> list:
    return [[w, l, c] for (w, l), c in sorted(matrix.counts.items())]


def _judgment_dict(j: Judgment) -> dict:
    return {"prompts": j.prompts, "responses": j.responses}


def generation_log(records: Mapping[str, GenerationRecord]) -> list:
    return [
        {"node_id": nid, "prompts": r.prompts, "responses": r.responses}
        for nid, r in sorted(records.items())
    ]


def intrinsic_log(judgments: Mapping[str, Judgment]) -> list:
    return [
        {"node_id": nid, "value": j.value, **_judgment_dict(j)}
        for nid, j in sorted(judgments.items())
    ]


def tournament_log(records: list[ComparisonRecord]) -> list:
    return [
        {
            "parent_id": r.parent_id,
            "support_id": r.support_id,
            "attack_id": r.attack_id,
            "repeat": r.repeat,
            "order": "swapped" if r.swapped else "support_first",
            "outcome": r.judgment.outcome.value,
            **_judgment_dict(r.judgment),
        }
        for r in records
    ]


def calibration_log(cals: Mapping[str, ParentCalibration]) -> list:
    return [
        {
            "parent_id": pid,
            "supporters": c.supporters,
            "attackers": c.attackers,
            "counts": matrix_to_list(c.matrix),
            "theta": c.result.theta,
            "iterations_used": c.result.iterations_used,
            "converged": c.result.converged,
            "no_evidence": c.result.no_evidence,
            "log_likelihoods": c.result.log_likelihoods,
            "lambda": c.lam,
            "tau_prime": c.tau_prime,
        }
        for pid, c in sorted(cals.items())
    ]


def aggregation_dict(report: AggregationReport) -> dict:
    return {
        "root_probability": report.root_probability,
        "nodes": {nid: {"alpha": a.alpha, "s": a.s} for nid, a in sorted(report.per_node.items())},
    }


def verdict_dict(verdict: Verdict, threshold: float = DEFAULT_THRESHOLD) -> dict:
    return {"probability": verdict.probability, "label": verdict.label.value, "threshold": threshold}


# --- replay ---------------------------------------------------------------------


@dataclass
class Recomputation:
    tree: ReasoningTree
    calibration: dict[str, ParentCalibration]
    report: AggregationReport
    verdict: Verdict
    divergent: list[str] = field(default_factory=list)


def _bt_config(config: Mapping, lam: float | None) -> BTConfig:
    return BTConfig(
        epsilon=config.get("epsilon", 1e-9),
        max_iters=config.get("max_bt_iters", 100),
        tol=config.get("bt_tol", 1e-10),
        lam=config.get("lambda", 0.5) if lam is None else lam,
        stabilizer=config.get("bt_stabilizer", "guard"),
    )


def _recompute_tree(trace: Mapping, lam: float | None, threshold: float | None) -> Recomputation:
    tree = tree_from_dict(trace["tree"])
    for node in tree.nodes.values():
        node.tau_prime = node.tau
        node.s = None
    config = trace["config"]
    cals: dict[str, ParentCalibration] = {}
    if trace["calibration"]:
        matrices = {}
        for entry in trace["calibration"]:
            m = WinMatrix(entry["parent_id"])
            for w, l, c in entry["counts"]:
                m.add(w, l, c)
            matrices[entry["parent_id"]] = m
        tree, cals = calibrate_tree(tree, matrices, _bt_config(config, lam))
    thr = trace["verdict"].get("threshold", DEFAULT_THRESHOLD) if threshold is None else threshold
    report = aggregate(tree, thr)
    return Recomputation(tree, cals, report, report.verdict)


def _close(a: Any, b: Any) -> bool:
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=0.0, abs_tol=REPLAY_TOL)


def _diff_tree_trace(trace: Mapping, rec: Recomputation) -> list[str]:
    bad: list[str] = []
    stored_cal = {e["parent_id"]: e for e in trace["calibration"]}
    if set(stored_cal) != set(rec.calibration):
        bad.append("calibration: parent set differs")
    for pid, entry in stored_cal.items():
        cal = rec.calibration.get(pid)
        if cal is None:
            continue
        if entry["no_evidence"] != cal.result.no_evidence:
            bad.append(f"{pid}: no_evidence flag")
        for cid, value in entry["theta"].items():
            if not _close(value, cal.result.theta.get(cid)):
                bad.append(f"{cid}: theta")
        for cid, value in entry["tau_prime"].items():
            if not _close(value, cal.tau_prime.get(cid)):
                bad.append(f"{cid}: tau_prime")
    stored_nodes = {n["id"]: n for n in trace["tree"]["nodes"]}
    for nid, node in rec.tree.nodes.items():
        stored = stored_nodes[nid]
        if not _close(stored.get("tau_prime"), node.tau_prime):
            bad.append(f"{nid}: tau_prime")
        if not _close(stored.get("s"), rec.report.per_node[nid].s):
            bad.append(f"{nid}: s")
    agg = trace["aggregation"]["nodes"]
    for nid, value in rec.report.per_node.items():
        stored = agg.get(nid)
        if stored is None:
            bad.append(f"{nid}: missing from aggregation")
            continue
        if not _close(stored["alpha"], value.alpha):
            bad.append(f"{nid}: alpha")
        if not _close(stored["s"], value.s):
            bad.append(f"{nid}: s (aggregation)")
    if not _close(trace["aggregation"]["root_probability"], rec.report.root_probability):
        bad.append(f"{rec.tree.root_id}: root_probability")
    bad.extend(_diff_verdict(trace["verdict"], rec.verdict))
    # a node may be reported both from the tree and aggregation sections
    return list(dict.fromkeys(bad))


def _diff_verdict(stored: Mapping, verdict: Verdict) -> list[str]:
    bad = []
    if not _close(stored["probability"], verdict.probability):
        bad.append("verdict: probability")
    if stored["label"] != verdict.label.value:
        bad.append("verdict: label")
    return bad


def _baseline_verdict(trace: Mapping, threshold: float | None) -> Verdict:
    yes = parse_yes_no(trace["responses"][-1], answer_line_only=trace["method"] == "COT")
    thr = trace["verdict"].get("threshold", DEFAULT_THRESHOLD) if threshold is None else threshold
    return Verdict.from_probability(1.0 if yes else 0.0, thr)


def _recompute(trace: RunTrace, lam, threshold) -> tuple[Verdict, list[str]]:
    d = trace.to_dict()
    try:
        if trace.kind == "tree":
            rec = _recompute_tree(d, lam, threshold)
            return rec.verdict, _diff_tree_trace(d, rec)
        if trace.kind == "baseline":
            v = _baseline_verdict(d, threshold)
            return v, _diff_verdict(d["verdict"], v)
        probs, bad = [], []
        for i, member in enumerate(trace.members):
            v, member_bad = _recompute(RunTrace.from_dict(member), lam, threshold)
            probs.append(v.probability)
            bad.extend(f"member {i}: {b}" for b in member_bad)
        thr = d["verdict"].get("threshold", DEFAULT_THRESHOLD) if threshold is None else threshold
        v = Verdict.from_probability(sum(probs) / len(probs), thr)
        return v, bad + _diff_verdict(d["verdict"], v)
    except TraceError:
        raise
    except (ArgTreeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"trace cannot be replayed: {exc!r}") from exc


def replay(trace: RunTrace) -> Verdict:
    """Recompute and verify; raises :class:`IntegrityError` listing every
    value that differs from the recomputation by more than 1e-12."""
    verdict, bad = _recompute(trace, None, None)
    if bad:
        raise IntegrityError("trace integrity check failed: " + "; ".join(bad), bad)
    return verdict


def what_if(trace: RunTrace, *, lam: float | None = None, threshold: float | None = None) -> Verdict:
    """Counterfactual verdict under an edited blend weight and/or threshold.
    Does not verify or modify the trace."""
    verdict, _ = _recompute(trace, lam, threshold)
    return verdict

