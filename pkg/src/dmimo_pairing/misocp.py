"""Exact joint pairing and precoding (the OPT and OPT-perUE schemes).

Each bisection step asks whether some binary pairing meeting the
data-sharing budget admits a precoder reaching the SINR target.  That
mixed-integer SOCP is answered by a branch-and-bound over the pairing
variables with continuous conic relaxations.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conic import (
    CompiledSocp,
    ComplexLayout,
    ConicProgram,
    SocConstraint,
    SolverTolerances,
    SolveVerdict,
    Status,
    linear_inequality,
    solve_socp,
)
from .network import (
    ConstraintVariant,
    InvalidInputError,
    PairingConfig,
    PairingMatrix,
    PowerBudget,
    zero_set_from_pairing,
)
from .precoding import (
    BisectionParams,
    OracleAnswer,
    PrecodingSolution,
    _channel,
    _p_max,
    bisect,
    build_feasibility,
    sinr_and_power_constraints,
    solution_from_bisection,
)

log = logging.getLogger(__name__)


class NodeSelection(str, enum.Enum):
    BEST_FIRST = "best_first"
    DEPTH_FIRST = "depth_first"


class BranchRule(str, enum.Enum):
    MOST_FRACTIONAL = "most_fractional"


@dataclass(frozen=True)
class MisocpConfig:
    time_limit_s: float = 900.0
    integrality_tol: float = 1e-5
    node_selection: NodeSelection = NodeSelection.BEST_FIRST
    branch_rule: BranchRule = BranchRule.MOST_FRACTIONAL
    rounding_heuristic: bool = True
    perspective: bool = True
    record_pruned: bool = False
    tol: SolverTolerances = SolverTolerances()

    def __post_init__(self):
        if not self.time_limit_s > 0:
            raise InvalidInputError("time_limit_s must be positive")
        if not self.integrality_tol > 0:
            raise InvalidInputError("integrality_tol must be positive")
        object.__setattr__(self, "node_selection", NodeSelection(self.node_selection))
        object.__setattr__(self, "branch_rule", BranchRule(self.branch_rule))


@dataclass(frozen=True)
class BnBNode:
    fixed_zero: frozenset = frozenset()
    fixed_one: frozenset = frozenset()
    depth: int = 0

    def __post_init__(self):
        if self.fixed_zero & self.fixed_one:
            raise ValueError("a pairing variable cannot be fixed to both 0 and 1")


@dataclass
class BnBStats:
    nodes: int = 0
    prunes: int = 0
    heuristic_hits: int = 0
    numerical_failures: int = 0
    wall_time_s: float = 0.0
    time_limited: bool = False
    pruned_nodes: list = field(default_factory=list)

    def merge(self, other: "BnBStats") -> None:
        self.nodes += other.nodes
        self.prunes += other.prunes
        self.heuristic_hits += other.heuristic_hits
        self.numerical_failures += other.numerical_failures
        self.wall_time_s += other.wall_time_s
        self.time_limited = self.time_limited or other.time_limited

    def as_dict(self) -> dict:
        return {
            "nodes": self.nodes,
            "prunes": self.prunes,
            "heuristic_hits": self.heuristic_hits,
            "numerical_failures": self.numerical_failures,
            "wall_time_s": round(self.wall_time_s, 6),
            "time_limited": self.time_limited,
        }


@dataclass(frozen=True)
class MisocpResult:
    verdict: SolveVerdict
    pairing: Optional[np.ndarray]
    precoder: Optional[np.ndarray]
    stats: BnBStats


def _pair_index(M: int, K: int):
    return [(m, k) for m in range(M) for k in range(K)]


def build_misocp_feasibility(H, t: float, pairing_cfg: PairingConfig, p_max=PowerBudget()) -> ConicProgram:
    """Joint feasibility program over the precoder and the binary pairing.

    Variables are the ``2MK`` real precoder coordinates followed by the ``MK``
    pairing binaries ``a_mk`` in row-major order.
    """
    h = _channel(H)
    K, M = h.shape
    pairing_cfg.check(M, K)
    if not t > 0:
        raise InvalidInputError("SINR target must be positive")
    P = _p_max(p_max)
    layout = ComplexLayout(M, K)
    n_w = layout.num_real
    n = n_w + M * K
    a_idx = {mk: n_w + i for i, mk in enumerate(_pair_index(M, K))}

    cones, eq_rows = sinr_and_power_constraints(h, t, P, layout, n)
    sqrt_p = math.sqrt(P)
    for (m, k), j in a_idx.items():
        c = np.zeros(n)
        c[j] = sqrt_p
        cones.append(SocConstraint(layout.entry_rows(m, k, n), np.zeros(2), c, 0.0, f"coupling[{m},{k}]"))

    if pairing_cfg.variant is ConstraintVariant.TOTAL:
        c = np.zeros(n)
        c[list(a_idx.values())] = -1.0
        cones.append(linear_inequality(c, pairing_cfg.budget, "budget"))
    else:
        cap = pairing_cfg.cap(K)
        for k in range(K):
            c = np.zeros(n)
            c[[a_idx[m, k] for m in range(M)]] = -1.0
            cones.append(linear_inequality(c, cap, f"budget[{k}]"))
    for k in range(K):
        c = np.zeros(n)
        c[[a_idx[m, k] for m in range(M)]] = 1.0
        cones.append(linear_inequality(c, -1.0, f"cover[{k}]"))

    return ConicProgram(
        num_vars=n,
        eq_matrix=np.vstack(eq_rows),
        eq_rhs=np.zeros(len(eq_rows)),
        soc_constraints=tuple(cones),
        binaries=tuple(a_idx.values()),
        meta={
            "kind": "misocp",
            "t": t,
            "num_aps": M,
            "num_ues": K,
            "pairing_cfg": pairing_cfg,
            "p_max": P,
        },
    )


class _Search:
    """One branch-and-bound run over a program produced by :func:`build_misocp_feasibility`."""

    def __init__(self, program: ConicProgram, cfg: MisocpConfig):
        self.program = program
        self.cfg = cfg
        self.M = program.meta["num_aps"]
        self.K = program.meta["num_ues"]
        self.pairing_cfg: PairingConfig = program.meta["pairing_cfg"]
        self.pairs = _pair_index(self.M, self.K)
        self.a_idx = dict(zip(self.pairs, program.binaries))
        self.layout = ComplexLayout(self.M, self.K)
        self.relaxation = self._relaxation(program, cfg.perspective)
        self.compiled = CompiledSocp(self.relaxation, cfg.tol, bounded_vars=self._bounded_vars)
        self.stats = BnBStats()
        self.tried: set[bytes] = set()

    def _relaxation(self, program: ConicProgram, perspective: bool) -> ConicProgram:
        """Continuous relaxation minimizing the sum of pairing variables.

        With ``perspective`` the relaxation gains per-entry power variables
        ``s_mk`` with ``|w_mk|^2 <= a_mk s_mk`` and ``sum_k s_mk <= P``.  Every
        integral point of the original program extends to one of these (take
        ``s_mk = |w_mk|^2``), so the integral feasible set is unchanged while
        fractional pairings that spread an AP's power get cut off.
        """
        base = program.relaxed()
        n0 = program.num_vars
        extra = self.M * self.K if perspective else 0
        n = n0 + extra
        pad = lambda v: np.concatenate([v, np.zeros(extra)])
        padm = lambda A: np.hstack([A, np.zeros((A.shape[0], extra))])
        cones = [
            SocConstraint(padm(c.A), c.b, pad(c.c), c.d, c.label) for c in base.soc_constraints
        ]
        lower, upper = pad(base.lower), pad(base.upper)
        self._bounded_vars = list(program.binaries)
        if perspective:
            P = program.meta["p_max"]
            s_idx = {mk: n0 + i for i, mk in enumerate(self.pairs)}
            lower[n0:], upper[n0:] = 0.0, P
            self._bounded_vars += list(s_idx.values())
            for mk in self.pairs:
                m, k = mk
                a_j, s_j = self.a_idx[mk], s_idx[mk]
                # |w|^2 <= a s  <=>  ||[2 Re w, 2 Im w, a - s]|| <= a + s
                A = np.zeros((3, n))
                A[:2] = 2.0 * self.layout.entry_rows(m, k, n)
                A[2, a_j], A[2, s_j] = 1.0, -1.0
                c = np.zeros(n)
                c[a_j] = c[s_j] = 1.0
                cones.append(SocConstraint(A, np.zeros(3), c, 0.0, f"perspective[{m},{k}]"))
            for m in range(self.M):
                c = np.zeros(n)
                c[[s_idx[m, k] for k in range(self.K)]] = -1.0
                cones.append(linear_inequality(c, P, f"perspective-power[{m}]"))
        objective = np.zeros(n)
        objective[list(program.binaries)] = 1.0
        return ConicProgram(
            num_vars=n,
            eq_matrix=padm(base.eq_matrix),
            eq_rhs=base.eq_rhs,
            soc_constraints=tuple(cones),
            objective=objective,
            lower=lower,
            upper=upper,
        )

    # -- relaxations -----------------------------------------------------
    def _solve_relaxation(self, fixed_zero, fixed_one) -> SolveVerdict:
        lo = self.relaxation.lower.copy()
        hi = self.relaxation.upper.copy()
        for mk in fixed_zero:
            hi[self.a_idx[mk]] = 0.0
        for mk in fixed_one:
            lo[self.a_idx[mk]] = 1.0
        return self.compiled.solve(lo, hi)

    def _try_integral(self, alpha: np.ndarray) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Solve with every binary fixed to ``alpha``; returns (alpha, x) when feasible."""
        key = alpha.tobytes()
        if key in self.tried:
            return None
        self.tried.add(key)
        ones = {mk for mk in self.pairs if alpha[mk]}
        zeros = set(self.pairs) - ones
        verdict = self._solve_relaxation(zeros, ones)
        if verdict.status is Status.NUMERICAL_FAILURE:
            self.stats.numerical_failures += 1
        if verdict.feasible:
            return alpha, verdict.solution
        return None

    def _round(self, node: BnBNode, a: np.ndarray, wabs: np.ndarray) -> Optional[np.ndarray]:
        """Largest budget-feasible pairing that follows the relaxation's preferences."""
        M, K = self.M, self.K
        alpha = np.zeros((M, K), dtype=np.int8)
        for mk in node.fixed_one:
            alpha[mk] = 1
        order = sorted(
            (mk for mk in self.pairs if mk not in node.fixed_zero),
            key=lambda mk: (-a[mk], -wabs[mk], mk),
        )
        for k in range(K):
            if alpha[:, k].any():
                continue
            choices = [mk for mk in order if mk[1] == k]
            if not choices:
                return None
            alpha[choices[0]] = 1
        total_room = (
            self.pairing_cfg.budget if self.pairing_cfg.variant is ConstraintVariant.TOTAL else M * K
        )
        cap = self.pairing_cfg.cap(K) if self.pairing_cfg.variant is ConstraintVariant.PER_UE else M
        for mk in order:
            if alpha.sum() >= total_room:
                break
            if not alpha[mk] and alpha[:, mk[1]].sum() < cap:
                alpha[mk] = 1
        return alpha if self.pairing_cfg.satisfied_by(alpha) else None

    def _branch_var(self, node: BnBNode, a: np.ndarray, wabs: np.ndarray):
        free = [mk for mk in self.pairs if mk not in node.fixed_zero and mk not in node.fixed_one]
        if not free:
            return None
        return min(free, key=lambda mk: (-min(a[mk], 1 - a[mk]), -wabs[mk], mk))

    def _children(self, node: BnBNode, mk) -> list[BnBNode]:
        kids = [BnBNode(node.fixed_zero, node.fixed_one | {mk}, node.depth + 1)]
        zero = node.fixed_zero | {mk}
        # Never strip a UE of its last candidate AP.
        if any((m, mk[1]) not in zero for m in range(self.M)):
            kids.append(BnBNode(zero, node.fixed_one, node.depth + 1))
        return kids

    def _prune(self, node: BnBNode) -> None:
        self.stats.prunes += 1
        if self.cfg.record_pruned:
            self.stats.pruned_nodes.append(node)

    # -- main loop -------------------------------------------------------
    def run(self) -> MisocpResult:
        start = time.perf_counter()
        counter = itertools.count()
        depth_first = self.cfg.node_selection is NodeSelection.DEPTH_FIRST
        frontier: list = []

        def push(node: BnBNode, parent_obj: float):
            if depth_first:
                frontier.append(node)
            else:
                heapq.heappush(frontier, (len(node.fixed_zero) + len(node.fixed_one), parent_obj, next(counter), node))

        def pop() -> BnBNode:
            return frontier.pop() if depth_first else heapq.heappop(frontier)[-1]

        push(BnBNode(), 0.0)
        found = None
        while frontier:
            if time.perf_counter() - start > self.cfg.time_limit_s:
                self.stats.time_limited = True
                break
            node = pop()
            self.stats.nodes += 1
            verdict = self._solve_relaxation(node.fixed_zero, node.fixed_one)
            if not verdict.feasible:
                if verdict.status is Status.NUMERICAL_FAILURE:
                    self.stats.numerical_failures += 1
                self._prune(node)
                continue
            x = verdict.solution[: self.program.num_vars]
            a = np.zeros((self.M, self.K))
            for mk, j in self.a_idx.items():
                a[mk] = x[j]
            wabs = np.abs(self.layout.extract(x))

            frac = np.minimum(a, 1.0 - a)
            if frac.max() <= self.cfg.integrality_tol:
                found = self._try_integral(np.rint(a).astype(np.int8))
                if found:
                    break
            elif self.cfg.rounding_heuristic:
                alpha = self._round(node, a, wabs)
                if alpha is not None:
                    found = self._try_integral(alpha)
                    if found:
                        self.stats.heuristic_hits += 1
                        break

            mk = self._branch_var(node, a, wabs)
            if mk is None:
                self._prune(node)
                continue
            kids = self._children(node, mk)
            if depth_first:
                kids = kids[::-1]  # explore a_mk = 1 first
            for kid in kids:
                push(kid, verdict.objective_value or 0.0)

        self.stats.wall_time_s = time.perf_counter() - start
        if found:
            alpha, x = found
            x = x[: self.program.num_vars]
            W = self.layout.extract(x)
            W[alpha == 0] = 0.0
            return MisocpResult(SolveVerdict(Status.FEASIBLE, x, None, "bnb"), alpha, W, self.stats)
        status = Status.TIME_LIMIT if self.stats.time_limited else Status.INFEASIBLE
        return MisocpResult(SolveVerdict(status, solver_status="bnb"), None, None, self.stats)


def solve_misocp_feasibility(program: ConicProgram, cfg: MisocpConfig = MisocpConfig()) -> MisocpResult:
    """Branch-and-bound over the pairing binaries of a joint feasibility program.

    Relaxations fix branched binaries through their bounds and minimize the
    sum of the relaxed pairing variables, which keeps the fractional point
    close to a sparse pairing.  A node whose relaxation is infeasible is
    pruned; a node whose binaries are all within ``integrality_tol`` of 0/1 is
    confirmed by re-solving with the rounded pairing fixed.  Otherwise the
    most fractional free binary (ties: larger precoder magnitude, then lower
    ``(m, k)``) is branched on.  With ``rounding_heuristic`` each node also
    probes the budget-filling pairing suggested by its relaxation.
    """
    if program.is_socp:
        raise InvalidInputError("program has no binary variables")
    if program.meta.get("kind") != "misocp":
        raise InvalidInputError("program must come from build_misocp_feasibility")
    return _Search(program, cfg).run()


@dataclass(frozen=True)
class OptResult:
    solution: PrecodingSolution
    pairing: PairingMatrix
    stats: BnBStats
    lower_bound_only: bool


def _fallback_pairing(h: np.ndarray, pairing_cfg: PairingConfig) -> np.ndarray:
    # any covering pairing within budget; used only when t* = 0
    K, M = h.shape
    alpha = np.zeros((M, K), dtype=np.int8)
    alpha[np.argmax(np.abs(h), axis=1), np.arange(K)] = 1
    return alpha


def opt_scheme(
    H,
    pairing_cfg: PairingConfig,
    p_max=PowerBudget(),
    bisection: BisectionParams = BisectionParams(),
    cfg: MisocpConfig = MisocpConfig(),
) -> OptResult:
    """Max-min common SINR jointly over pairing and precoder.

    The pairing found at the previous feasible step is probed first with a
    plain fixed-pairing solve; the tree search only runs when that probe fails.
    """
    h = _channel(H)
    K, M = h.shape
    pairing_cfg.check(M, K)
    totals = BnBStats()
    incumbent: dict = {}

    def oracle(t: float) -> OracleAnswer:
        if "alpha" in incumbent:
            zs = zero_set_from_pairing(incumbent["alpha"])
            verdict = solve_socp(build_feasibility(h, t, zs, p_max), cfg.tol)
            if verdict.feasible:
                W = ComplexLayout(M, K).extract(verdict.solution)
                W[incumbent["alpha"] == 0] = 0.0
                return OracleAnswer(True, (W, incumbent["alpha"]), verdict.status)
        result = solve_misocp_feasibility(build_misocp_feasibility(h, t, pairing_cfg, p_max), cfg)
        totals.merge(result.stats)
        if result.verdict.feasible:
            incumbent["alpha"] = result.pairing
            return OracleAnswer(True, (result.precoder, result.pairing), Status.FEASIBLE)
        return OracleAnswer(False, None, result.verdict.status)

    outcome = bisect(oracle, bisection)
    limited = outcome.time_limited > 0
    flags = ("time-limited",) if limited else ()
    if outcome.payload is None:
        alpha = _fallback_pairing(h, pairing_cfg)
    else:
        W, alpha = outcome.payload
        outcome.payload = W
    solution = solution_from_bisection(h, outcome, bisection, flags)
    return OptResult(solution, pairing_cfg.pairing(alpha), totals, limited)
