import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmimo_pairing.conic import Status, solve_socp
from dmimo_pairing.network import PowerBudget, all_sinr
from dmimo_pairing.precoding import (
    BisectionError,
    BisectionParams,
    InfeasiblePairingError,
    OracleAnswer,
    bisect,
    build_feasibility,
    max_common_sinr,
)
from conftest import rayleigh
from oracles import grid_max_min_sinr, sinr_loop

EPS = BisectionParams().epsilon


def test_structure_single_link():
    p = build_feasibility(np.array([[1.0 + 0.5j]]), 1.0)
    assert len(p.soc_constraints) == 2
    assert p.eq_matrix.shape[0] == 1


def test_structure_two_by_two():
    p = build_feasibility(rayleigh(2, 2, 0), 1.0)
    sinr = p.cones_labelled("sinr")
    power = p.cones_labelled("power")
    assert len(sinr) == 2 and len(power) == 2
    # SINR cone: t-side plus [1; h_k w_i, i != k], i.e. K + 1 = 3 entries counted as complex
    for c in sinr:
        assert c.dim == 1 + 1 + 2 * (2 - 1)
        assert 1 + 1 + (c.A.shape[0] - 1) // 2 == 3
    # power cone: t-side plus Re/Im of K entries
    assert all(c.dim == 5 for c in power)
    assert p.eq_matrix.shape[0] == 2


def test_zero_set_adds_equalities():
    p = build_feasibility(rayleigh(2, 3, 1), 1.0, {(0, 1), (2, 0)})
    assert p.eq_matrix.shape[0] == 2 + 2 * 2


def test_zero_set_emptying_column_rejected():
    with pytest.raises(InfeasiblePairingError):
        build_feasibility(rayleigh(2, 2, 0), 1.0, {(0, 0), (1, 0)})
    with pytest.raises(InfeasiblePairingError):
        max_common_sinr(rayleigh(2, 2, 0), {(0, 1), (1, 1)})


def test_huge_target_infeasible():
    assert solve_socp(build_feasibility(np.eye(2), 1e9)).status is Status.INFEASIBLE


def test_nonpositive_target_rejected():
    with pytest.raises(ValueError):
        build_feasibility(np.eye(2), 0.0)


def test_twenty_iterations():
    sol = max_common_sinr(rayleigh(3, 3, 5, scale=3.0))
    assert sol.iterations_used == 20
    assert BisectionParams().expected_iterations == 20


def test_phase_aligned_single_ue():
    sol = max_common_sinr(np.array([[1.0, 1.0]]))
    assert sol.t_star == pytest.approx(4.0, abs=EPS)


def test_identity_channel_matches_grid_search():
    grid = grid_max_min_sinr(np.eye(2), 1.0, steps=11)
    sol = max_common_sinr(np.eye(2))
    assert grid == pytest.approx(1.0)
    assert sol.t_star == pytest.approx(grid, abs=EPS)


def test_bisection_on_synthetic_oracle():
    res = bisect(lambda t: OracleAnswer(t <= 3.3, t, Status.FEASIBLE if t <= 3.3 else Status.INFEASIBLE),
                 BisectionParams(0.0, 10.0, 1e-3))
    assert res.t_star == pytest.approx(3.3, abs=1e-3)
    assert res.payload == res.t_star
    assert res.iterations == BisectionParams(0.0, 10.0, 1e-3).expected_iterations


def test_bisection_never_feasible():
    res = bisect(lambda t: OracleAnswer(False), BisectionParams())
    assert res.payload is None and res.t_star == 0.0


def test_bisection_iteration_cap():
    with pytest.raises(BisectionError):
        bisect(lambda t: OracleAnswer(True, t, Status.FEASIBLE), BisectionParams(0.0, 1e4, 0.01, max_iters=5))


def test_no_feasible_point_flagged():
    # t_low above the optimum: every midpoint is infeasible
    sol = max_common_sinr(np.eye(2), params=BisectionParams(t_low=2.0, t_high=10.0))
    assert sol.t_star == 0.0
    assert "no-feasible-point-above-t_low" in sol.flags
    assert np.all(sol.precoder.entries == 0)


def test_params_validation():
    with pytest.raises(ValueError):
        BisectionParams(t_low=5.0, t_high=1.0)
    with pytest.raises(ValueError):
        BisectionParams(epsilon=0.0)


@settings(max_examples=12)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
def test_returned_precoder_is_feasible(seed, K, M):
    H = rayleigh(K, M, seed, scale=2.0)
    sol = max_common_sinr(H, p_max=PowerBudget(0.7))
    W = sol.precoder.entries
    assert sinr_loop(H, W).min() >= sol.t_star - (EPS + 1e-5)
    assert np.all(np.sum(np.abs(W) ** 2, axis=1) <= 0.7 + 1e-6)
    np.testing.assert_allclose(sol.sinr_report.per_ue_sinr, all_sinr(H, W))


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_feasibility_monotone_in_target(seed):
    H = rayleigh(2, 3, seed, scale=2.0)
    t_star = max_common_sinr(H).t_star
    if t_star <= 0:
        return
    assert solve_socp(build_feasibility(H, t_star)).feasible
    assert solve_socp(build_feasibility(H, t_star / 2)).feasible


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_nested_zero_sets_lower_t(seed):
    H = rayleigh(3, 3, seed, scale=2.0)
    rng = np.random.default_rng(seed)
    order = [(m, k) for m in range(1, 3) for k in range(3)]
    rng.shuffle(order)
    zs, prev = set(), max_common_sinr(H).t_star
    for mk in order[:4]:
        zs.add(tuple(mk))
        sol = max_common_sinr(H, zs)
        for m, k in zs:
            assert abs(sol.precoder.entries[m, k]) <= 1e-6
        assert sol.t_star <= prev + 2 * EPS
        prev = sol.t_star
