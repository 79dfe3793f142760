"""Acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the pytest terminal
summary) before asserting.  Criteria 3 and 6 share one Monte-Carlo run of
20 dense 4 x 4 drops over the budget sweep {K, 2K, 3K, MK}.

Run with ``pytest tests/test_acceptance.py -v``; the full module takes
about six minutes on one core.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from dmimo_pairing.baselines import BaselineKind, baseline_scheme
from dmimo_pairing.channel import dense_config, generate_drop
from dmimo_pairing.greedy import greedy_pairing
from dmimo_pairing.harness import ExperimentConfig, Scheme, run_experiment
from dmimo_pairing.misocp import opt_scheme
from dmimo_pairing.network import ConstraintVariant, PairingConfig, PowerBudget, pairing_violations
from dmimo_pairing.precoding import BisectionParams, max_common_sinr
from conftest import report_criterion
from oracles import enumerate_opt, grid_max_min_sinr, sinr_loop

pytestmark = pytest.mark.slow

EPS = BisectionParams().epsilon
TOTAL, PER_UE = ConstraintVariant.TOTAL, ConstraintVariant.PER_UE


def drop_channel(m, k, seed):
    return generate_drop(dense_config(m_aps=m, k_ues=k, seed=seed)).channel.entries


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_bisection_iterations():
    counts = []
    for (m, k), seed in [((1, 1), 0), ((2, 2), 1), ((4, 4), 2), ((6, 6), 3)]:
        counts.append(max_common_sinr(drop_channel(m, k, seed)).iterations_used)
    ok = all(c == 20 for c in counts)
    report_criterion(1, ok, f"feasibility solves per bisection = {counts} (expected 20 each)")
    assert ok


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_exact_vs_enumeration():
    worst, cases, misses = 0.0, 0, []
    for m, k in [(2, 2), (3, 2), (3, 3)]:
        for b in (k, k + 1, m * k):
            for seed in range(20):
                h = drop_channel(m, k, seed)
                ref, _ = enumerate_opt(h, TOTAL, b)
                got = opt_scheme(h, PairingConfig(TOTAL, b)).solution.t_star
                gap = abs(got - ref)
                worst = max(worst, gap)
                cases += 1
                if gap > 2 * EPS:
                    misses.append((m, k, b, seed, got, ref))
    ok = not misses
    report_criterion(2, ok, f"{cases} cases, max |t_opt - t_enum| = {worst:.4f} (tol 0.02), misses {misses[:3]}")
    assert ok


# -- 3 and 6 share this run ----------------------------------------------------

BUDGETS = (4, 8, 12, 16)


@pytest.fixture(scope="module")
def fig3_run():
    cfg = ExperimentConfig(
        drop=dense_config(m_aps=4, k_ues=4),
        schemes=tuple(Scheme),
        budgets=BUDGETS,
        num_drops=20,
        base_seed=0,
    )
    return run_experiment(cfg)


def _t_table(records):
    return {(r.drop_index, r.scheme, r.b_tot): r.t_star for r in records}


def test_criterion_3_ordering_invariants(fig3_run):
    recs = fig3_run.records
    t = _t_table(recs)
    flagged = [(r.drop_index, r.scheme, r.b_tot, r.flags) for r in recs if r.flags]
    bad = []
    for i in range(20):
        for b in BUDGETS:
            if t[i, "opt", b] < t[i, "approx", b] - 2 * EPS:
                bad.append(("opt<approx", i, b))
            if t[i, "opt", b] < t[i, "opt_per_ue", b] - 2 * EPS:
                bad.append(("opt<opt_per_ue", i, b))
            for base in ("clust1", "clust2", "random"):
                if t[i, "opt_per_ue", b] < t[i, base, b] - 2 * EPS:
                    bad.append((f"opt_per_ue<{base}", i, b))
        for s in Scheme:
            seq = [t[i, s.value, b] for b in BUDGETS]
            if any(y < x - 2 * EPS for x, y in zip(seq, seq[1:])):
                bad.append((f"{s.value} not monotone", i, seq))
    ok = not bad and not flagged
    report_criterion(3, ok, f"20 drops x {len(BUDGETS)} budgets x 6 schemes: {len(bad)} violations {bad[:3]}, "
                            f"{len(flagged)} flagged records {flagged[:3]}")
    assert ok


def test_criterion_6_fig3_qualitative(fig3_run):
    rows = {(r["scheme"], r["b_tot"]): r for r in fig3_run.summary["schemes"]}
    b = 8  # 2K: the pairing budget is binding for every scheme
    mean = {s.value: rows[s.value, b]["mean_rate_bps"] for s in Scheme}
    ratio = mean["approx"] / mean["opt"]
    best_clust = max(mean["clust1"], mean["clust2"])
    ordered = mean["opt"] >= mean["approx"] >= best_clust >= mean["random"]
    ok = ordered and ratio >= 0.75
    context = ", ".join(
        f"b={bb}: APPROX/OPT={rows['approx', bb]['ratio_to_opt_mean']:.3f}"
        f" OPT-perUE/OPT={rows['opt_per_ue', bb]['ratio_to_opt_mean']:.3f}"
        for bb in BUDGETS
    )
    worst = rows["approx", b]["ratio_to_opt_worst"]
    report_criterion(
        6, ok,
        f"b_tot=8 mean rates kbit/s OPT={mean['opt'] / 1e3:.1f} APPROX={mean['approx'] / 1e3:.1f} "
        f"CLUST1={mean['clust1'] / 1e3:.1f} CLUST2={mean['clust2'] / 1e3:.1f} RANDOM={mean['random'] / 1e3:.1f}; "
        f"APPROX/OPT mean {ratio:.3f} (need >= 0.75), worst drop {worst:.3f}; [{context}]",
    )
    assert ok


# -- 4 ------------------------------------------------------------------------

def _check_solution(h, sol, alpha, variant, budget, p_max):
    W = sol.precoder.entries
    problems = []
    if sinr_loop(h, W).min() < sol.t_star - (EPS + 1e-5):
        problems.append("min SINR below t*")
    if np.any(np.sum(np.abs(W) ** 2, axis=1) > p_max + 1e-6):
        problems.append("AP power above budget")
    problems += pairing_violations(alpha, variant, budget)
    if np.any(alpha.sum(axis=0) < 1):
        problems.append("empty column")
    if np.any(np.abs(W[alpha == 0]) > 1e-6):
        problems.append("precoder outside pairing")
    return problems


def test_criterion_4_feasibility_all_schemes():
    rng = np.random.default_rng(2024)
    failures, checked = [], 0
    for inst in range(50):
        m, k = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        variant = TOTAL if rng.random() < 0.5 else PER_UE
        budget = int(rng.integers(k, m * k + 1))
        p = float(rng.choice([0.5, 1.0, 2.0]))
        h = drop_channel(m, k, 500 + inst)
        cfg = PairingConfig(variant, budget)
        per_ue = PairingConfig(PER_UE, budget)
        runs = {
            "opt": (opt_scheme(h, cfg, PowerBudget(p)), cfg),
            "opt_per_ue": (opt_scheme(h, per_ue, PowerBudget(p)), per_ue),
            "approx": (greedy_pairing(h, cfg, PowerBudget(p)), cfg),
        }
        for kind in BaselineKind:
            runs[kind.value] = (baseline_scheme(h, kind, budget, PowerBudget(p), seed=inst), per_ue)
        for name, (res, c) in runs.items():
            checked += 1
            probs = _check_solution(h, res.solution, res.pairing.entries, c.variant, c.budget, p)
            if res.solution.flags:
                probs.append(f"flags {res.solution.flags}")
            if probs:
                failures.append((inst, name, probs))
    ok = not failures
    report_criterion(4, ok, f"{checked} solutions over 50 instances, {len(failures)} infeasible {failures[:3]}")
    assert ok


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_closed_forms():
    rng = np.random.default_rng(7)
    errs = []
    for m in (1, 2, 3, 4):
        for p in (0.5, 1.0):
            h = (rng.normal(size=(1, m)) + 1j * rng.normal(size=(1, m))) * 3.0
            expect = p * np.sum(np.abs(h)) ** 2
            got = max_common_sinr(h, p_max=PowerBudget(p)).t_star
            errs.append(("single-UE", m, p, abs(got - expect)))
    grid = grid_max_min_sinr(np.eye(2), 1.0, steps=11)
    for n, p in ((2, 1.0), (2, 2.0), (3, 1.0)):
        got = max_common_sinr(np.eye(n), p_max=PowerBudget(p)).t_star
        errs.append(("identity", n, p, abs(got - p)))
    errs.append(("identity-grid", 2, 1.0, abs(max_common_sinr(np.eye(2)).t_star - grid)))
    worst = max(e[-1] for e in errs)
    ok = worst <= EPS and abs(grid - 1.0) < 1e-12
    report_criterion(5, ok, f"{len(errs)} closed-form checks, max error {worst:.4f} (tol {EPS}), grid oracle {grid:.3f}")
    assert ok


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_approx_complexity():
    sizes = [(3, 3), (4, 4), (6, 6)]
    times = []
    for m, k in sizes:
        samples = []
        for seed in range(3):
            h = drop_channel(m, k, 900 + seed)
            start = time.perf_counter()
            greedy_pairing(h, PairingConfig(TOTAL, k))
            samples.append(time.perf_counter() - start)
        times.append(float(np.median(samples)))
    mk = np.array([m * k for m, k in sizes], float)
    # cubic growth anchored at the smallest size, with a 2x allowance
    allowed = 2.0 * times[0] * (mk / mk[0]) ** 3
    exponent = float(np.polyfit(np.log(mk), np.log(times), 1)[0])
    ok = all(t <= a for t, a in zip(times, allowed))
    detail = ", ".join(f"MK={int(n)}: {t:.2f}s (cap {a:.1f}s)" for n, t, a in zip(mk, times, allowed))
    report_criterion(7, ok, f"APPROX wall time {detail}; fitted exponent {exponent:.2f} (advisory)")
    assert ok
