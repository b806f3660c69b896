"""Bipartite Bradley-Terry fitting and blending with intrinsic strengths.

For one parent with supporters S and attackers A, only cross pairs (s, a) are
ever compared. The fit is the minorize-maximize fixed point

    theta_u <- wins_u / (sum_v n_uv / (theta_u + theta_v) + eps)

applied to all children simultaneously from the previous iterate, followed by
normalisation to sum 1.

By default (``stabilizer="guard"``) eps is added only to a denominator that is
exactly zero, i.e. for a child that took part in no decisive comparison. The
remaining updates are then the exact MM step, which is invariant under scaling
all counts. ``stabilizer="additive"`` adds eps to every denominator.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from argtree.core import ReasoningTree
from argtree.errors import CalibrationError, ConfigError
from argtree.tournament import WinMatrix

LOG_GUARD = 1e-300
STABILIZERS = ("guard", "additive")


@dataclass(frozen=True)
class BTConfig:
    epsilon: float = 1e-9
    max_iters: int = 100
    tol: float = 1e-10
    lam: float = 0.5
    stabilizer: str = "guard"

    def __post_init__(self):
        if self.stabilizer not in STABILIZERS:
            raise ConfigError(f"stabilizer must be one of {STABILIZERS}, got {self.stabilizer!r}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ConfigError(f"tol must be >= 0, got {self.tol}")


@dataclass
class BTResult:
    theta: dict[str, float]
    iterations_used: int
    converged: bool
    log_likelihoods: list[float] = field(default_factory=list)
    no_evidence: bool = False

    @classmethod
    def empty(cls) -> BTResult:
        """Sentinel for a tournament without a single decisive judgment."""
        return cls(theta={}, iterations_used=0, converged=False, no_evidence=True)


def _count_arrays(
    matrix: WinMatrix, supporters: Sequence[str], attackers: Sequence[str]
) -> tuple[np.ndarray, np.ndarray]:
    """Return (sup_wins, att_wins) with sup_wins[i, j] = wins of s_i over a_j
    and att_wins[i, j] = wins of a_j over s_i."""
    s_idx = {s: i for i, s in enumerate(supporters)}
    a_idx = {a: j for j, a in enumerate(attackers)}
    sw = np.zeros((len(supporters), len(attackers)))
    aw = np.zeros_like(sw)
    for (winner, loser), count in matrix.counts.items():
        if count < 0:
            raise CalibrationError(f"negative count for ({winner}, {loser})")
        if winner in s_idx and loser in a_idx:
            sw[s_idx[winner], a_idx[loser]] += count
        elif winner in a_idx and loser in s_idx:
            aw[s_idx[loser], a_idx[winner]] += count
        else:
            raise CalibrationError(
                f"count ({winner}, {loser}) is not a supporter/attacker cross pair"
            )
    return sw, aw


def log_likelihood(
    theta_s: np.ndarray, theta_a: np.ndarray, sup_wins: np.ndarray, att_wins: np.ndarray
) -> float:
    """Bipartite BT log-likelihood; scale invariant in theta."""
    return _Counts(sup_wins, att_wins).log_likelihood(theta_s, theta_a)


class _Counts:
    """Loop-invariant pieces of one fit, computed once."""

    def __init__(self, sup_wins: np.ndarray, att_wins: np.ndarray):
        self.n = sup_wins + att_wins
        self.played = self.n > 0
        self.wins_s = sup_wins.sum(axis=1)
        self.wins_a = att_wins.sum(axis=0)

    def log_likelihood(self, theta_s: np.ndarray, theta_a: np.ndarray) -> float:
        pair_sum = theta_s[:, None] + theta_a[None, :]
        ll = (
            self.wins_s @ np.log(theta_s + LOG_GUARD)
            + self.wins_a @ np.log(theta_a + LOG_GUARD)
            - np.sum(self.n * np.log(pair_sum + LOG_GUARD))
        )
        return float(ll)

    def mm_step(
        self, theta_s: np.ndarray, theta_a: np.ndarray, eps: float, additive: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        pair_sum = theta_s[:, None] + theta_a[None, :]
        # pairs never decisively judged contribute nothing (and may have a 0 sum)
        ratio = np.divide(self.n, pair_sum, out=np.zeros_like(self.n), where=self.played)
        den_s, den_a = ratio.sum(axis=1), ratio.sum(axis=0)
        if additive:
            den_s, den_a = den_s + eps, den_a + eps
        else:
            den_s[den_s == 0] = eps
            den_a[den_a == 0] = eps
        new_s = self.wins_s / den_s
        new_a = self.wins_a / den_a
        total = new_s.sum() + new_a.sum()
        return new_s / total, new_a / total


def fit_bt(
    matrix: WinMatrix,
    supporters: Sequence[str],
    attackers: Sequence[str],
    config: BTConfig = BTConfig(),
) -> BTResult:
    supporters, attackers = list(supporters), list(attackers)
    if not supporters or not attackers:
        raise CalibrationError("fit_bt needs at least one supporter and one attacker")
    if set(supporters) & set(attackers):
        raise CalibrationError("supporters and attackers overlap")

    sw, aw = _count_arrays(matrix, supporters, attackers)
    if not (sw.any() or aw.any()):
        return BTResult.empty()
    counts = _Counts(sw, aw)
    additive = config.stabilizer == "additive"

    theta_s = np.ones(len(supporters))
    theta_a = np.ones(len(attackers))
    lls = [counts.log_likelihood(theta_s, theta_a)]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        new_s, new_a = counts.mm_step(theta_s, theta_a, config.epsilon, additive)
        delta = max(np.abs(new_s - theta_s).max(), np.abs(new_a - theta_a).max())
        theta_s, theta_a = new_s, new_a
        lls.append(counts.log_likelihood(theta_s, theta_a))
        if delta < config.tol:
            converged = True
            break

    theta = {u: float(v) for u, v in zip(supporters, theta_s.tolist())}
    theta.update({u: float(v) for u, v in zip(attackers, theta_a.tolist())})
    return BTResult(theta, it, converged, lls)


def blend(tau: float, theta: float, lam: float) -> float:
    """Convex blend of intrinsic strength and BT score, clipped to [0, 1]."""
    for name, v in (("tau", tau), ("theta", theta), ("lambda", lam)):
        if not 0.0 <= v <= 1.0 or math.isnan(v):
            raise ConfigError(f"{name}={v} outside [0, 1]")
    return min(1.0, max(0.0, (1.0 - lam) * tau + lam * theta))


@dataclass
class ParentCalibration:
    parent_id: str
    supporters: list[str]
    attackers: list[str]
    matrix: WinMatrix
    result: BTResult
    lam: float
    tau_prime: dict[str, float]


def calibrate_parent(
    tree: ReasoningTree, matrix: WinMatrix, config: BTConfig
) -> ParentCalibration:
    """Fit one parent's tournament and compute (but not apply) new tau'."""
    pid = matrix.parent_id
    sup = [n.id for n in tree.supporters(pid)]
    att = [n.id for n in tree.attackers(pid)]
    result = fit_bt(matrix, sup, att, config)
    tau_prime: dict[str, float] = {}
    for cid in sup + att:
        node = tree.nodes[cid]
        if node.tau is None:
            raise CalibrationError(f"{cid}: intrinsic strength not set")
        if result.no_evidence:
            tau_prime[cid] = node.tau
        else:
            tau_prime[cid] = blend(node.tau, result.theta[cid], config.lam)
    return ParentCalibration(pid, sup, att, matrix, result, config.lam, tau_prime)


def calibrate_tree(
    tree: ReasoningTree, matrices: Mapping[str, WinMatrix], config: BTConfig
) -> tuple[ReasoningTree, dict[str, ParentCalibration]]:
    """Return a calibrated copy of ``tree`` and the per-parent fit logs.

    Children of parents without a matrix keep ``tau_prime == tau``.
    """
    missing = [pid for pid in tree.contested_ids() if pid not in matrices]
    if missing:
        raise CalibrationError(f"no win matrix for contested parents {missing}")

    out = tree.copy()
    for node in out.nodes.values():
        if node.tau is None:
            raise CalibrationError(f"{node.id}: intrinsic strength not set")
        node.tau_prime = node.tau

    logs: dict[str, ParentCalibration] = {}
    for pid in sorted(matrices):
        try:
            cal = calibrate_parent(out, matrices[pid], config)
        except Exception as exc:
            raise CalibrationError(f"calibration of parent {pid} failed: {exc}") from exc
        logs[pid] = cal
    # single write phase after all fits
    for cal in logs.values():
        for cid, value in cal.tau_prime.items():
            out.nodes[cid].tau_prime = value
    return out, logs
