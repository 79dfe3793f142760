"""Second-order cone programs over real variables.

A :class:`ConicProgram` collects linear equalities, second-order cone
constraints ``||A x + b|| <= c.x + d`` (a cone whose ``A`` has no rows is a
plain linear inequality ``0 <= c.x + d``), optional box bounds and an optional
list of binary variables.  Continuous programs are handed to Clarabel through
:func:`solve_socp`; :func:`check_solution` re-evaluates a point against every
constraint without going through the solver.

Complex precoders enter through :class:`ComplexLayout`, which stacks real and
imaginary parts of an ``M x K`` matrix into real variables.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

from .network import InvalidInputError

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverTolerances:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-7
    max_iter: int = 200
    time_limit_s: float = float("inf")


@dataclass(frozen=True)
class SolveVerdict:
    status: Status
    solution: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    solver_status: str = ""

    def __post_init__(self):
        if (self.status is Status.FEASIBLE) != (self.solution is not None):
            raise ValueError("a solution is present exactly when the verdict is feasible")

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


@dataclass(frozen=True)
class SocConstraint:
    """``||A x + b||_2 <= c.x + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0
    label: str = ""

    @property
    def dim(self) -> int:
        return self.A.shape[0] + 1

    def slack(self, x: np.ndarray) -> float:
        """Right-hand side minus left-hand side; negative means violated."""
        lhs = np.linalg.norm(self.A @ x + self.b) if self.A.shape[0] else 0.0
        return float(self.c @ x + self.d - lhs)


def linear_inequality(c: np.ndarray, d: float, label: str = "") -> SocConstraint:
    """``c.x + d >= 0`` as a one-dimensional cone."""
    c = np.asarray(c, float)
    return SocConstraint(np.zeros((0, c.size)), np.zeros(0), c, float(d), label)


@dataclass(frozen=True)
class ConicProgram:
    num_vars: int
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    soc_constraints: tuple[SocConstraint, ...]
    objective: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    binaries: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.num_vars
        if n < 1:
            raise InvalidInputError("program needs at least one variable")
        eq = np.asarray(self.eq_matrix, float).reshape(-1, n)
        rhs = np.asarray(self.eq_rhs, float).reshape(-1)
        if eq.shape[0] != rhs.size:
            raise InvalidInputError("equality matrix and right-hand side disagree")
        object.__setattr__(self, "eq_matrix", eq)
        object.__setattr__(self, "eq_rhs", rhs)
        for cone in self.soc_constraints:
            if cone.A.ndim != 2 or cone.A.shape[1] != n or cone.c.shape != (n,):
                raise InvalidInputError(f"cone {cone.label!r} does not match {n} variables")
            if cone.b.shape != (cone.A.shape[0],):
                raise InvalidInputError(f"cone {cone.label!r} has a mismatched offset")
        for name in ("objective", "lower", "upper"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, float)
                if v.shape != (n,):
                    raise InvalidInputError(f"{name} must have length {n}")
                object.__setattr__(self, name, v)
        if any(not 0 <= i < n for i in self.binaries):
            raise InvalidInputError("binary index out of range")
        object.__setattr__(self, "soc_constraints", tuple(self.soc_constraints))
        object.__setattr__(self, "binaries", tuple(int(i) for i in self.binaries))

    @property
    def is_socp(self) -> bool:
        return not self.binaries

    def cones_labelled(self, prefix: str) -> list[SocConstraint]:
        return [c for c in self.soc_constraints if c.label.startswith(prefix)]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "ConicProgram":
        return replace(self, lower=lower, upper=upper)

    def relaxed(self) -> "ConicProgram":
        """Continuous relaxation: binaries become [0, 1] box variables."""
        lo = np.full(self.num_vars, -np.inf) if self.lower is None else self.lower.copy()
        hi = np.full(self.num_vars, np.inf) if self.upper is None else self.upper.copy()
        idx = list(self.binaries)
        lo[idx] = np.maximum(lo[idx], 0.0)
        hi[idx] = np.minimum(hi[idx], 1.0)
        return replace(self, lower=lo, upper=hi, binaries=())


class ComplexLayout:
    """Maps an ``M x K`` complex matrix onto ``2 M K`` real variables.

    Real parts occupy ``offset .. offset + MK - 1`` in row-major ``(m, k)``
    order, imaginary parts the next ``MK`` slots.
    """

    def __init__(self, num_aps: int, num_ues: int, offset: int = 0):
        self.num_aps = num_aps
        self.num_ues = num_ues
        self.offset = offset
        self.size = num_aps * num_ues

    @property
    def num_real(self) -> int:
        return 2 * self.size

    def re(self, m: int, k: int) -> int:
        return self.offset + m * self.num_ues + k

    def im(self, m: int, k: int) -> int:
        return self.offset + self.size + m * self.num_ues + k

    def embed(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, complex)
        return np.concatenate([W.real.ravel(), W.imag.ravel()])

    def extract(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)[self.offset : self.offset + self.num_real]
        re, im = x[: self.size], x[self.size :]
        return (re + 1j * im).reshape(self.num_aps, self.num_ues)

    def linear_rows(self, coeffs: np.ndarray, num_vars: int) -> tuple[np.ndarray, np.ndarray]:
        """Real rows ``(r, s)`` with ``r.x = Re{z}`` and ``s.x = Im{z}`` for ``z = sum C_mk w_mk``."""
        C = np.asarray(coeffs, complex).ravel()
        r = np.zeros(num_vars)
        s = np.zeros(num_vars)
        lo, mid, hi = self.offset, self.offset + self.size, self.offset + 2 * self.size
        # (a + ib)(x + iy) = (ax - by) + i(ay + bx)
        r[lo:mid], r[mid:hi] = C.real, -C.imag
        s[lo:mid], s[mid:hi] = C.imag, C.real
        return r, s

    def entry_rows(self, m: int, k: int, num_vars: int) -> np.ndarray:
        """2 x n selector picking (Re w_mk, Im w_mk)."""
        rows = np.zeros((2, num_vars))
        rows[0, self.re(m, k)] = 1.0
        rows[1, self.im(m, k)] = 1.0
        return rows


def embed_complex(num_aps: int, num_ues: int, offset: int = 0) -> ComplexLayout:
    return ComplexLayout(num_aps, num_ues, offset)


def check_solution(program: ConicProgram, x: np.ndarray, tol: float = 1e-7) -> list[str]:
    """List every constraint of ``program`` violated by ``x`` by more than ``tol``."""
    x = np.asarray(x, float)
    bad = []
    if x.shape != (program.num_vars,):
        return [f"point has shape {x.shape}, expected ({program.num_vars},)"]
    if program.eq_matrix.size:
        res = np.abs(program.eq_matrix @ x - program.eq_rhs)
        for i in np.flatnonzero(res > tol):
            bad.append(f"equality {i} off by {res[i]:.3g}")
    for i, cone in enumerate(program.soc_constraints):
        s = cone.slack(x)
        if s < -tol:
            bad.append(f"cone {i} {cone.label} violated by {-s:.3g}")
    if program.lower is not None and np.any(x < program.lower - tol):
        bad.append("lower bound violated")
    if program.upper is not None and np.any(x > program.upper + tol):
        bad.append("upper bound violated")
    for i in program.binaries:
        if min(abs(x[i]), abs(x[i] - 1)) > tol:
            bad.append(f"binary {i} = {x[i]:.3g}")
    return bad


_STATUS_MAP = {
    "Solved": Status.FEASIBLE,
    "AlmostSolved": Status.FEASIBLE,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
    "MaxTime": Status.TIME_LIMIT,
}


class CompiledSocp:
    """A continuous program in solver form, re-solvable under new box bounds.

    Every variable in ``bounded_vars`` gets a lower and an upper bound row, so
    moving its bounds only touches the right-hand side.  Those bounds must
    stay finite.  By default the variables bounded on both sides are the
    movable ones; one-sided bounds become fixed rows.
    """

    def __init__(self, program: ConicProgram, tol: SolverTolerances = SolverTolerances(),
                 bounded_vars: Optional[Sequence[int]] = None):
        if not program.is_socp:
            raise InvalidInputError("solve_socp takes continuous programs; relax the binaries first")
        self.program = program
        self.tol = tol
        n = program.num_vars
        lo = program.lower if program.lower is not None else np.full(n, -np.inf)
        hi = program.upper if program.upper is not None else np.full(n, np.inf)
        if bounded_vars is None:
            bounded_vars = np.flatnonzero(np.isfinite(lo) & np.isfinite(hi))
        self.bounded = np.asarray(sorted(set(int(i) for i in bounded_vars)), dtype=int)
        movable = np.zeros(n, dtype=bool)
        movable[self.bounded] = True

        blocks, rhs, cones = [], [], []
        if program.eq_matrix.shape[0]:
            blocks.append(program.eq_matrix)
            rhs.append(program.eq_rhs)
            cones.append(clarabel.ZeroConeT(program.eq_matrix.shape[0]))
        # one nonnegative block: 1-D cones, then lower rows, then upper rows
        lin = [c for c in program.soc_constraints if c.A.shape[0] == 0]
        nb = self.bounded.size
        lin_rows = [-c.c for c in lin]
        lin_rhs = [c.d for c in lin]
        eye = np.eye(n)
        for i in np.flatnonzero(~movable & np.isfinite(lo)):
            lin_rows.append(-eye[i])
            lin_rhs.append(-lo[i])
        for i in np.flatnonzero(~movable & np.isfinite(hi)):
            lin_rows.append(eye[i])
            lin_rhs.append(hi[i])
        self._bound_offset = sum(b.shape[0] for b in blocks) + len(lin_rows)
        if nb:
            lin_rows.extend(-eye[self.bounded])
            lin_rows.extend(eye[self.bounded])
            lin_rhs.extend(np.zeros(2 * nb))
        if lin_rows:
            blocks.append(np.vstack(lin_rows))
            rhs.append(np.asarray(lin_rhs, float))
            cones.append(clarabel.NonnegativeConeT(len(lin_rows)))
        for cone in program.soc_constraints:
            if cone.A.shape[0] == 0:
                continue
            # s = [c.x + d; A x + b] in the cone  <=>  -[c; A] x + s = [d; b]
            blocks.append(-np.vstack([cone.c[None, :], cone.A]))
            rhs.append(np.concatenate([[cone.d], cone.b]))
            cones.append(clarabel.SecondOrderConeT(cone.dim))
        self.A = sp.csc_matrix(np.vstack(blocks)) if blocks else sp.csc_matrix((0, n))
        self.b = np.concatenate(rhs) if rhs else np.zeros(0)
        self.q = np.zeros(n) if program.objective is None else program.objective
        self.P = sp.csc_matrix((n, n))
        self.cones = cones
        self.settings = clarabel.DefaultSettings()
        self.settings.verbose = False
        # Clarabel's tolerances are relative; ask for more so absolute residuals land under feas_tol.
        self.settings.tol_feas = tol.feas_tol * 1e-1
        self.settings.tol_gap_abs = tol.gap_tol * 1e-1
        self.settings.tol_gap_rel = tol.gap_tol * 1e-1
        self.settings.max_iter = tol.max_iter
        if np.isfinite(tol.time_limit_s):
            self.settings.time_limit = tol.time_limit_s
        self._retries = []
        for tweaks in (
            {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
             "iterative_refinement_max_iter": 20},
            {"equilibrate_enable": False},
        ):
            retry = clarabel.DefaultSettings()
            for attr in ("verbose", "tol_feas", "tol_gap_abs", "tol_gap_rel", "time_limit", "max_iter"):
                setattr(retry, attr, getattr(self.settings, attr))
            for attr, value in tweaks.items():
                setattr(retry, attr, value)
            self._retries.append(retry)
        self._lo, self._hi = lo, hi

    def solve(self, lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None) -> SolveVerdict:
        lo = self._lo if lower is None else np.asarray(lower, float)
        hi = self._hi if upper is None else np.asarray(upper, float)
        b = self.b.copy()
        nb = self.bounded.size
        if nb:
            blo, bhi = lo[self.bounded], hi[self.bounded]
            if not (np.all(np.isfinite(blo)) and np.all(np.isfinite(bhi))):
                raise InvalidInputError("compiled bounds must be finite")
            if np.any(blo > bhi):
                return SolveVerdict(Status.INFEASIBLE, solver_status="crossed-bounds")
            o = self._bound_offset
            b[o : o + nb] = -blo
            b[o + nb : o + 2 * nb] = bhi
        try:
            solution = clarabel.DefaultSolver(self.P, self.q, self.A, b, self.cones, self.settings).solve()
            name = str(solution.status)
            # stalls happen right at the feasibility boundary; a more careful
            # linear solve or unscaled data usually produces a certificate
            for retry in self._retries:
                if name in _STATUS_MAP:
                    break
                solution = clarabel.DefaultSolver(self.P, self.q, self.A, b, self.cones, retry).solve()
                name = str(solution.status)
        except Exception as exc:  # solver-internal failures (factorization etc.)
            log.warning("conic solver raised: %s", exc)
            return SolveVerdict(Status.NUMERICAL_FAILURE, solver_status=str(exc))
        status = _STATUS_MAP.get(name, Status.NUMERICAL_FAILURE)
        if status is not Status.FEASIBLE:
            return SolveVerdict(status, solver_status=name)
        x = np.asarray(solution.x, float)
        program = self.program if lower is None and upper is None else self.program.with_bounds(lo, hi)
        problems = check_solution(program, x, self.tol.feas_tol)
        if problems:
            log.debug("solver point rejected (%s): %s", name, problems[:3])
            return SolveVerdict(Status.NUMERICAL_FAILURE, solver_status=name)
        obj = None if program.objective is None else float(program.objective @ x)
        return SolveVerdict(status, x, obj, name)


def solve_socp(program: ConicProgram, tol: SolverTolerances = SolverTolerances()) -> SolveVerdict:
    """Solve a continuous SOCP.

    A ``FEASIBLE`` verdict is only returned after the point passes
    :func:`check_solution` at ``tol.feas_tol``; anything else the solver
    reports that is neither a certificate nor a verified point becomes
    ``NUMERICAL_FAILURE``.
    """
    return CompiledSocp(program, tol).solve()


def dump_program(program: ConicProgram) -> str:
    """Plain-text sparse dump of a program, one constraint block per section.

    Format::

        VARS <n>
        BINARIES <i> <j> ...
        OBJ <i>:<v> ...
        EQ <rhs> | <i>:<v> ...
        SOC <label> <dim>
          RHS <d> | <i>:<v> ...
          ROW <b> | <i>:<v> ...
        BOUND <i> <lo> <hi>
    """

    def sparse(row: Sequence[float]) -> str:
        return " ".join(f"{i}:{v:.17g}" for i, v in enumerate(row) if v != 0)

    out = [f"VARS {program.num_vars}"]
    if program.binaries:
        out.append("BINARIES " + " ".join(map(str, program.binaries)))
    if program.objective is not None:
        out.append("OBJ " + sparse(program.objective))
    for row, rhs in zip(program.eq_matrix, program.eq_rhs):
        out.append(f"EQ {rhs:.17g} | {sparse(row)}")
    for cone in program.soc_constraints:
        out.append(f"SOC {cone.label or '-'} {cone.dim}")
        out.append(f"  RHS {cone.d:.17g} | {sparse(cone.c)}")
        for row, off in zip(cone.A, cone.b):
            out.append(f"  ROW {off:.17g} | {sparse(row)}")
    if program.lower is not None or program.upper is not None:
        lo = program.lower if program.lower is not None else np.full(program.num_vars, -np.inf)
        hi = program.upper if program.upper is not None else np.full(program.num_vars, np.inf)
        for i in range(program.num_vars):
            if np.isfinite(lo[i]) or np.isfinite(hi[i]):
                out.append(f"BOUND {i} {lo[i]:.17g} {hi[i]:.17g}")
    return "\n".join(out) + "\n"
