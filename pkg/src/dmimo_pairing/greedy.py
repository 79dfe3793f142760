"""Greedy pairing reduction (the APPROX scheme).

Start from the full-sharing optimum and remove one AP-UE pair at a time,
re-optimizing the precoder after every removal, until the data-sharing
budget holds.  The pair removed is the one whose zeroing leaves the best
ratio of the UE's own received power to the interference among the other
UEs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import SolverTolerances
from .network import (
    DEFAULT_ZERO_TOL,
    ConstraintVariant,
    PairingConfig,
    PairingMatrix,
    PowerBudget,
    pairing_from_zero_set,
)
from .precoding import BisectionParams, PrecodingSolution, _channel, max_common_sinr


@dataclass(frozen=True)
class GreedyScore:
    rp: float
    interference: float

    @property
    def ratio(self) -> float:
        if self.interference > 0:
            return self.rp / self.interference
        return math.inf if self.rp > 0 else 0.0


@dataclass
class GreedyTrace:
    removal_sequence: list[tuple[int, int]] = field(default_factory=list)
    t_after_each: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "removal_sequence": [list(mk) for mk in self.removal_sequence],
            "t_after_each": list(self.t_after_each),
        }


def score_candidate(h: np.ndarray, W: np.ndarray, m: int, k: int) -> GreedyScore:
    Wp = np.array(W, dtype=complex, copy=True)
    Wp[m, k] = 0.0
    g = np.abs(h @ Wp) ** 2  # g[i, j] = |h_i w_j|^2
    K = h.shape[0]
    rp = g[k, k]
    interference = sum(g[i, j] for i in range(K) if i != k for j in range(K) if j != i)
    return GreedyScore(float(rp), float(interference))


def score_candidates(H, W_current, already_zeroed=frozenset(), columns=None,
                     zero_tol: float = DEFAULT_ZERO_TOL) -> dict:
    """Score every removable pair; ``columns`` optionally restricts the UEs considered.

    A pair is removable when it has not been removed yet, is not the last
    active pair of its UE, and is not the last nonzero entry of that UE's
    beam (zeroing it would cut the UE's only signal path).
    """
    h = _channel(H)
    W = np.asarray(getattr(W_current, "entries", W_current), complex)
    K, M = h.shape
    zs = set(already_zeroed)
    live = np.abs(W) > zero_tol
    scores = {}
    for m in range(M):
        for k in range(K):
            if (m, k) in zs or (columns is not None and k not in columns):
                continue
            if sum((mm, k) not in zs for mm in range(M)) <= 1:
                continue
            if live[m, k] and not any(live[mm, k] for mm in range(M) if mm != m):
                continue
            scores[m, k] = score_candidate(h, W, m, k)
    return scores


def pick_candidate(scores: dict):
    """Largest ratio; ties go to the larger received power, then the lower (m, k)."""
    return min(scores, key=lambda mk: (-scores[mk].ratio, -scores[mk].rp, mk))


@dataclass(frozen=True)
class GreedyResult:
    solution: PrecodingSolution
    pairing: PairingMatrix
    trace: GreedyTrace
    partial: bool = False


def _over_budget(zs: set, M: int, K: int, cfg: PairingConfig):
    """UE columns still eligible for removal, or ``None`` once the budget holds."""
    active = pairing_from_zero_set(M, K, zs)
    if cfg.variant is ConstraintVariant.TOTAL:
        return None if active.sum() <= cfg.budget else set(range(K))
    over = {k for k in range(K) if active[:, k].sum() > cfg.cap(K)}
    return over or None


def greedy_pairing(
    H,
    pairing_cfg: PairingConfig,
    p_max=PowerBudget(),
    bisection: BisectionParams = BisectionParams(),
    tol: SolverTolerances = SolverTolerances(),
) -> GreedyResult:
    h = _channel(H)
    K, M = h.shape
    pairing_cfg.check(M, K)
    zs: set = set()
    sol = max_common_sinr(h, zs, p_max, bisection, tol)
    trace = GreedyTrace()
    partial = False
    while (columns := _over_budget(zs, M, K, pairing_cfg)) is not None:
        scores = score_candidates(h, sol.precoder, zs, columns)
        if not scores:
            partial = True
            break
        mk = pick_candidate(scores)
        zs.add(mk)
        sol = max_common_sinr(h, zs, p_max, bisection, tol)
        trace.removal_sequence.append(mk)
        trace.t_after_each.append(sol.t_star)
    alpha = pairing_from_zero_set(M, K, zs)
    if partial:
        sol = PrecodingSolution(
            sol.t_star, sol.precoder, sol.sinr_report, sol.iterations_used,
            sol.numerical_failures, sol.flags + ("partial-constraint",),
        )
        pairing = PairingMatrix(alpha, pairing_cfg.variant, max(pairing_cfg.budget, int(alpha.sum())))
    else:
        pairing = pairing_cfg.pairing(alpha)
    return GreedyResult(sol, pairing, trace, partial)
