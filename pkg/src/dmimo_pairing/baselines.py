"""Two-step comparison schemes: pick each UE's serving APs by a fixed rule,
then optimize the precoder for that pairing."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conic import SolverTolerances
from .network import (
    ConstraintVariant,
    InvalidInputError,
    PairingConfig,
    PairingMatrix,
    PowerBudget,
    zero_set_from_pairing,
)
from .precoding import BisectionParams, PrecodingSolution, _channel, max_common_sinr


class BaselineKind(str, enum.Enum):
    CLUST1 = "clust1"
    CLUST2 = "clust2"
    RANDOM = "random"


def _check_quota(quota: int, M: int) -> None:
    if not 1 <= quota <= M:
        raise InvalidInputError(f"per-UE quota must lie in [1, {M}], got {quota}")


def clust1_ranking(H) -> np.ndarray:
    """K x M array; row k lists APs by decreasing |H_km|^2, lower index first on ties."""
    g = np.abs(_channel(H)) ** 2
    return np.argsort(-g, axis=1, kind="stable")


def clust1_pairing(H, quota: int) -> np.ndarray:
    """Each UE takes its ``quota`` strongest APs."""
    h = _channel(H)
    K, M = h.shape
    _check_quota(quota, M)
    alpha = np.zeros((M, K), dtype=np.int8)
    for k, order in enumerate(clust1_ranking(h)):
        alpha[order[:quota], k] = 1
    return alpha


def clust2_ranking(H, quota: int) -> np.ndarray:
    """K x M array ranking APs for each UE by how dominant that UE is at the AP.

    AP m is eligible for UE k when k is among the ``quota`` UEs that AP m
    hears best, i.e. the AP would mostly interfere with k if it served
    somebody else.  Eligible APs come first by decreasing |H_km|^2, the rest
    follow in the same gain order; ties go to the lower AP index.
    """
    g = np.abs(_channel(H)) ** 2
    K, M = g.shape
    # position[k, m] = rank of UE k among AP m's UEs
    position = np.empty((K, M), dtype=int)
    for m in range(M):
        order = np.argsort(-g[:, m], kind="stable")
        position[order, m] = np.arange(K)
    ranking = np.empty((K, M), dtype=int)
    for k in range(K):
        ranking[k] = sorted(range(M), key=lambda m: (position[k, m] >= quota, -g[k, m], m))
    return ranking


def clust2_pairing(H, quota: int) -> np.ndarray:
    h = _channel(H)
    K, M = h.shape
    _check_quota(quota, M)
    alpha = np.zeros((M, K), dtype=np.int8)
    for k, order in enumerate(clust2_ranking(h, quota)):
        alpha[order[:quota], k] = 1
    return alpha


def random_pairing(num_aps: int, num_ues: int, quota: int, seed: int) -> np.ndarray:
    """Each UE takes ``quota`` APs drawn uniformly without replacement.

    The draw is a per-UE permutation truncated to ``quota``, so for a fixed
    seed a larger quota always yields a superset.
    """
    _check_quota(quota, num_aps)
    rng = np.random.default_rng(seed)
    alpha = np.zeros((num_aps, num_ues), dtype=np.int8)
    for k in range(num_ues):
        alpha[rng.permutation(num_aps)[:quota], k] = 1
    return alpha


@dataclass(frozen=True)
class BaselineResult:
    solution: PrecodingSolution
    pairing: PairingMatrix


def baseline_pairing(H, kind: BaselineKind | str, quota: int, seed: Optional[int] = None) -> np.ndarray:
    kind = BaselineKind(kind)
    h = _channel(H)
    if kind is BaselineKind.CLUST1:
        return clust1_pairing(h, quota)
    if kind is BaselineKind.CLUST2:
        return clust2_pairing(h, quota)
    if seed is None:
        raise InvalidInputError("random pairing needs a seed")
    K, M = h.shape
    return random_pairing(M, K, quota, seed)


def baseline_scheme(
    H,
    kind: BaselineKind | str,
    budget: int,
    p_max=PowerBudget(),
    bisection: BisectionParams = BisectionParams(),
    seed: Optional[int] = None,
    tol: SolverTolerances = SolverTolerances(),
) -> BaselineResult:
    """Pairing from ``kind`` with quota ``budget // K`` per UE, then the optimal precoder."""
    h = _channel(H)
    K, M = h.shape
    cfg = PairingConfig(ConstraintVariant.PER_UE, budget)
    cfg.check(M, K)
    quota = min(cfg.cap(K), M)
    alpha = baseline_pairing(h, kind, quota, seed)
    sol = max_common_sinr(h, zero_set_from_pairing(alpha), p_max, bisection, tol)
    return BaselineResult(sol, PairingMatrix(alpha, ConstraintVariant.PER_UE, budget))
