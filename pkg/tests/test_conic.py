import numpy as np
import pytest

from dmimo_pairing.conic import (
    ComplexLayout,
    ConicProgram,
    CompiledSocp,
    SocConstraint,
    SolverTolerances,
    SolveVerdict,
    Status,
    check_solution,
    dump_program,
    embed_complex,
    linear_inequality,
    solve_socp,
)
from dmimo_pairing.network import InvalidInputError


def unit_ball_program(n=2, objective=None, extra=()):
    cone = SocConstraint(np.eye(n), np.zeros(n), np.zeros(n), 1.0, "ball")
    return ConicProgram(n, np.zeros((0, n)), np.zeros(0), (cone, *extra), objective=objective)


def test_layout_indices():
    lay = embed_complex(2, 3)
    assert lay.re(0, 0) == 0
    assert lay.re(1, 2) == 5
    assert lay.im(0, 0) == 6
    assert lay.im(1, 2) == 11
    shifted = ComplexLayout(2, 3, offset=4)
    assert shifted.re(0, 1) == 5 and shifted.im(0, 1) == 11


def test_embed_extract_round_trip(rng):
    W = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    lay = embed_complex(3, 4)
    x = lay.embed(W)
    assert x.shape == (24,)
    np.testing.assert_allclose(lay.extract(x), W, atol=1e-12)


def test_linear_rows_reproduce_complex_product(rng):
    M, K = 2, 3
    lay = embed_complex(M, K)
    W = rng.normal(size=(M, K)) + 1j * rng.normal(size=(M, K))
    C = rng.normal(size=(M, K)) + 1j * rng.normal(size=(M, K))
    r, s = lay.linear_rows(C, lay.num_real)
    z = np.sum(C * W)
    x = lay.embed(W)
    assert r @ x == pytest.approx(z.real)
    assert s @ x == pytest.approx(z.imag)


def test_entry_rows():
    lay = embed_complex(2, 2)
    W = np.array([[1 + 2j, 3], [4j, 5 - 1j]])
    rows = lay.entry_rows(1, 1, lay.num_real)
    np.testing.assert_allclose(rows @ lay.embed(W), [5.0, -1.0])


def test_unit_ball_minimum():
    # min -x0 over ||x|| <= 1 -> x = (1, 0), value -1
    v = solve_socp(unit_ball_program(objective=np.array([-1.0, 0.0])))
    assert v.status is Status.FEASIBLE
    assert v.objective_value == pytest.approx(-1.0, abs=1e-6)
    np.testing.assert_allclose(v.solution, [1.0, 0.0], atol=1e-5)


def test_infeasible_program():
    # ||x|| <= 1 and x0 >= 2
    p = unit_ball_program(extra=(linear_inequality(np.array([1.0, 0.0]), -2.0, "x0>=2"),))
    assert solve_socp(p).status is Status.INFEASIBLE


def test_unbounded_program():
    # min -x0 with only x0 - x1 = 0 and no cone on x0
    p = ConicProgram(2, np.array([[1.0, -1.0]]), np.zeros(1), (), objective=np.array([-1.0, 0.0]))
    assert solve_socp(p).status is Status.UNBOUNDED


def test_equalities_and_bounds():
    p = ConicProgram(
        2, np.array([[1.0, 1.0]]), np.array([1.0]), unit_ball_program().soc_constraints,
        objective=np.array([1.0, 0.0]), lower=np.array([0.25, -np.inf]), upper=np.array([np.inf, np.inf]),
    )
    v = solve_socp(p)
    assert v.feasible
    assert v.solution[0] == pytest.approx(0.25, abs=1e-6)
    assert v.solution.sum() == pytest.approx(1.0, abs=1e-7)


def test_solution_replays_through_checker(rng):
    # random feasible SOCP: several shifted balls that all contain a known point
    n = 4
    x0 = rng.normal(size=n)
    cones = []
    for i in range(5):
        A = rng.normal(size=(3, n))
        b = rng.normal(size=3)
        c = rng.normal(size=n)
        d = np.linalg.norm(A @ x0 + b) - c @ x0 + 0.5
        cones.append(SocConstraint(A, b, c, d, f"c{i}"))
    p = ConicProgram(n, np.zeros((0, n)), np.zeros(0), cones, objective=rng.normal(size=n),
                     lower=np.full(n, -10.0), upper=np.full(n, 10.0))
    v = solve_socp(p)
    assert v.feasible
    assert check_solution(p, v.solution, 1e-7) == []


def test_check_solution_reports_violations():
    p = unit_ball_program()
    assert check_solution(p, np.array([0.5, 0.5])) == []
    bad = check_solution(p, np.array([2.0, 0.0]))
    assert bad and "ball" in bad[0]
    assert check_solution(p, np.zeros(3))


def test_compiled_resolve_with_new_bounds():
    p = unit_ball_program(objective=np.array([-1.0, 0.0]))
    p = p.with_bounds(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    comp = CompiledSocp(p, SolverTolerances())
    assert comp.solve().objective_value == pytest.approx(-1.0, abs=1e-6)
    v = comp.solve(np.array([-1.0, -1.0]), np.array([0.5, 1.0]))
    assert v.objective_value == pytest.approx(-0.5, abs=1e-6)
    assert comp.solve(np.array([0.6, -1.0]), np.array([0.5, 1.0])).status is Status.INFEASIBLE


def test_binaries_rejected_by_continuous_solver():
    p = ConicProgram(1, np.zeros((0, 1)), np.zeros(0), (), binaries=(0,))
    with pytest.raises(InvalidInputError):
        solve_socp(p)
    r = p.relaxed()
    assert r.is_socp and r.lower[0] == 0.0 and r.upper[0] == 1.0


def test_program_validation():
    with pytest.raises(InvalidInputError):
        ConicProgram(0, np.zeros((0, 0)), np.zeros(0), ())
    with pytest.raises(InvalidInputError):
        ConicProgram(2, np.ones((1, 2)), np.zeros(2), ())
    with pytest.raises(InvalidInputError):
        ConicProgram(2, np.zeros((0, 2)), np.zeros(0), (SocConstraint(np.eye(3), np.zeros(3), np.zeros(3), 1.0),))
    with pytest.raises(InvalidInputError):
        ConicProgram(2, np.zeros((0, 2)), np.zeros(0), (), binaries=(5,))


def test_verdict_invariant():
    with pytest.raises(ValueError):
        SolveVerdict(Status.FEASIBLE)
    with pytest.raises(ValueError):
        SolveVerdict(Status.INFEASIBLE, np.zeros(1))


def test_dump_program_format():
    p = unit_ball_program(objective=np.array([-1.0, 0.0])).with_bounds(np.array([0.0, -np.inf]), None)
    text = dump_program(p)
    lines = text.splitlines()
    assert lines[0] == "VARS 2"
    assert "OBJ 0:-1" in lines
    assert "SOC ball 3" in lines
    assert "  RHS 1 | " in lines
    assert "  ROW 0 | 0:1" in lines and "  ROW 0 | 1:1" in lines
    assert lines[-1] == "BOUND 0 0 inf"
