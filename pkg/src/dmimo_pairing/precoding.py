"""Fixed-pairing precoding: SOCP feasibility for a common SINR target and the
bisection search for the largest achievable one."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

import numpy as np

from .conic import (
    ComplexLayout,
    ConicProgram,
    SocConstraint,
    SolverTolerances,
    Status,
    solve_socp,
)
from .network import (
    InvalidInputError,
    PowerBudget,
    PrecoderMatrix,
    SinrReport,
    sinr_report,
)

log = logging.getLogger(__name__)

FAILURE_FLAG_FRACTION = 0.10


class InfeasiblePairingError(InvalidInputError):
    """A zero set leaves some UE without any candidate AP."""


class BisectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BisectionParams:
    t_low: float = 0.0
    t_high: float = 1e4
    epsilon: float = 0.01
    max_iters: int = 200

    def __post_init__(self):
        if not (0 <= self.t_low < self.t_high):
            raise InvalidInputError("need 0 <= t_low < t_high")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be positive")

    @property
    def expected_iterations(self) -> int:
        return max(1, math.ceil(math.log2((self.t_high - self.t_low) / self.epsilon)))


@dataclass(frozen=True)
class OracleAnswer:
    feasible: bool
    payload: Any = None
    status: Status = Status.INFEASIBLE


@dataclass
class BisectionResult:
    t_star: float
    payload: Any
    iterations: int
    statuses: list[Status] = field(default_factory=list)

    @property
    def numerical_failures(self) -> int:
        return sum(s is Status.NUMERICAL_FAILURE for s in self.statuses)

    @property
    def time_limited(self) -> int:
        return sum(s is Status.TIME_LIMIT for s in self.statuses)


def bisect(oracle: Callable[[float], OracleAnswer], params: BisectionParams) -> BisectionResult:
    """Bisection on the common SINR target.

    A feasible midpoint raises the lower end, anything else (including
    numerical failures and time-outs) lowers the upper end.  The payload of
    the last feasible midpoint is returned with it; ``payload`` is ``None``
    when no midpoint was feasible.
    """
    t_lo, t_hi = params.t_low, params.t_high
    best_t, best_payload = params.t_low, None
    statuses: list[Status] = []
    while True:
        if len(statuses) >= params.max_iters:
            raise BisectionError(
                f"bisection did not close [{t_lo}, {t_hi}] to {params.epsilon} "
                f"within {params.max_iters} iterations"
            )
        t = 0.5 * (t_lo + t_hi)
        answer = oracle(t)
        statuses.append(answer.status)
        if answer.feasible:
            t_lo, best_t, best_payload = t, t, answer.payload
        else:
            if answer.status is Status.NUMERICAL_FAILURE:
                log.info("numerical failure at t=%.6g treated as infeasible", t)
            t_hi = t
        if abs(t_hi - t_lo) <= params.epsilon:
            break
    return BisectionResult(best_t, best_payload, len(statuses), statuses)


@dataclass(frozen=True)
class PrecodingSolution:
    t_star: float
    precoder: PrecoderMatrix
    sinr_report: SinrReport
    iterations_used: int
    numerical_failures: int = 0
    flags: tuple[str, ...] = ()


def _normalize_zero_set(zero_set: Optional[Iterable], num_aps: int, num_ues: int) -> frozenset:
    zs = frozenset((int(m), int(k)) for m, k in (zero_set or ()))
    for m, k in zs:
        if not (0 <= m < num_aps and 0 <= k < num_ues):
            raise InvalidInputError(f"zero-set entry {(m, k)} out of range for {num_aps}x{num_ues}")
    for k in range(num_ues):
        if sum((m, k) in zs for m in range(num_aps)) == num_aps:
            raise InfeasiblePairingError(f"zero set removes every AP from UE {k}")
    return zs


def _channel(H) -> np.ndarray:
    return np.asarray(getattr(H, "entries", H), dtype=complex)


def _p_max(p_max) -> float:
    return float(getattr(p_max, "p_max_watt", p_max))


def sinr_and_power_constraints(
    h: np.ndarray, t: float, p_max: float, layout: ComplexLayout, num_vars: int
) -> tuple[list[SocConstraint], list[np.ndarray]]:
    """SINR cones, per-AP power cones and the ``Im{h_k w_k} = 0`` rows.

    With ``h_k w_k`` real and non-negative, ``SINR_k >= t`` is written as
    ``||[1; h_k w_i for i != k]|| <= Re{h_k w_k} / sqrt(t)``.  Squaring shows
    it is the same set as ``||[1; h_k W]|| <= sqrt(1 + 1/t) Re{h_k w_k}``, but
    the latter compares two nearly equal large numbers at high SINR, so a
    solver residual of size d costs about ``2 d t Re{h_k w_k}`` in achieved
    SINR; here it costs about ``2 d t / sqrt(1 + interference)``.
    """
    K, M = h.shape
    coef = 1.0 / math.sqrt(t)
    cones, imag_rows = [], []
    for k in range(K):
        rows = [np.zeros(num_vars)]
        offsets = [1.0]
        for i in range(K):
            C = np.zeros((M, K), complex)
            C[:, i] = h[k]
            r, s = layout.linear_rows(C, num_vars)
            if i == k:
                signal = r
                imag_rows.append(s)
            else:
                rows += [r, s]
                offsets += [0.0, 0.0]
        cones.append(
            SocConstraint(np.vstack(rows), np.asarray(offsets), coef * signal, 0.0, f"sinr[{k}]")
        )
    sqrt_p = math.sqrt(p_max)
    for m in range(M):
        A = np.vstack([layout.entry_rows(m, k, num_vars) for k in range(K)])
        cones.append(SocConstraint(A, np.zeros(2 * K), np.zeros(num_vars), sqrt_p, f"power[{m}]"))
    return cones, imag_rows


def build_feasibility(H, t: float, zero_set=None, p_max=PowerBudget()) -> ConicProgram:
    """Feasibility SOCP: can every UE reach SINR ``t`` with the entries in ``zero_set`` forced to zero?"""
    h = _channel(H)
    K, M = h.shape
    if not t > 0:
        raise InvalidInputError("SINR target must be positive (t = 0 is trivially feasible)")
    zs = _normalize_zero_set(zero_set, M, K)
    layout = ComplexLayout(M, K)
    n = layout.num_real
    cones, eq_rows = sinr_and_power_constraints(h, t, _p_max(p_max), layout, n)
    for m, k in sorted(zs):
        eq_rows.extend(layout.entry_rows(m, k, n))
    return ConicProgram(
        num_vars=n,
        eq_matrix=np.vstack(eq_rows),
        eq_rhs=np.zeros(len(eq_rows)),
        soc_constraints=tuple(cones),
        meta={"kind": "precoding", "t": t, "num_aps": M, "num_ues": K, "zero_set": zs},
    )


def _clean_precoder(x: np.ndarray, M: int, K: int, zs: frozenset) -> np.ndarray:
    W = ComplexLayout(M, K).extract(x)
    for m, k in zs:
        W[m, k] = 0.0
    return W


def precoding_oracle(H, zero_set, p_max, tol: SolverTolerances = SolverTolerances()):
    """Feasibility oracle for :func:`bisect`; its payload is the precoder as an array."""
    h = _channel(H)
    K, M = h.shape
    zs = _normalize_zero_set(zero_set, M, K)

    def oracle(t: float) -> OracleAnswer:
        verdict = solve_socp(build_feasibility(h, t, zs, p_max), tol)
        if verdict.feasible:
            return OracleAnswer(True, _clean_precoder(verdict.solution, M, K, zs), verdict.status)
        return OracleAnswer(False, None, verdict.status)

    return oracle


def solution_from_bisection(h: np.ndarray, result: BisectionResult, params: BisectionParams,
                            extra_flags: tuple[str, ...] = ()) -> PrecodingSolution:
    K, M = h.shape
    flags = list(extra_flags)
    if result.payload is None:
        W = np.zeros((M, K), complex)
        t_star = 0.0
        if params.t_low > 0:
            flags.append("no-feasible-point-above-t_low")
    else:
        W, t_star = result.payload, result.t_star
    if result.numerical_failures > FAILURE_FLAG_FRACTION * result.iterations:
        flags.append("numerical-failures")
        log.warning("%d of %d bisection solves failed numerically", result.numerical_failures, result.iterations)
    return PrecodingSolution(
        t_star=float(t_star),
        precoder=PrecoderMatrix(W),
        sinr_report=sinr_report(h, W),
        iterations_used=result.iterations,
        numerical_failures=result.numerical_failures,
        flags=tuple(flags),
    )


def max_common_sinr(
    H,
    zero_set=None,
    p_max=PowerBudget(),
    params: BisectionParams = BisectionParams(),
    tol: SolverTolerances = SolverTolerances(),
) -> PrecodingSolution:
    """Largest common SINR reachable with the given zero pattern, found by bisection.

    The returned precoder is the one from the last feasible midpoint; when no
    midpoint is feasible the all-zero precoder is returned with ``t_star = 0``.
    """
    h = _channel(H)
    result = bisect(precoding_oracle(h, zero_set, p_max, tol), params)
    return solution_from_bisection(h, result, params)
