"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion NN [PASS|FAIL]`` line through
``record_acceptance`` and then asserts. The bench-style criteria (4, 7, 8)
cache their runs so the cross-suite checks (5, 6) reuse them.
"""
from __future__ import annotations

import math
import time
from functools import lru_cache

import numpy as np

from conftest import record_acceptance
from spars0 import cli
from spars0.apps import basis_pursuit, classification, dictionary, fixtures, portfolio
from spars0.bench import RunConfig, SUITES, run_solve
from spars0.inner import multiplier_free_residuals, step2_residuals
from spars0.oracle import enumerate_supports, gradient_check
from spars0.outer import OuterConfig, solve
from spars0.penalty import PenaltyKind, PenaltySpec, validate_spec
from spars0.problem import build_penalized, reformulation_gap, split_free_variables
from spars0.stationarity import as_trace, biactive

KINDS = (PenaltyKind.QUADRATIC_SHIFTED, PenaltyKind.NATURAL_QUADRATIC, PenaltyKind.HUBER_SHIFTED)
TAU0 = 1e-6


def report(number, title, passed, detail):
    record_acceptance(number, title, bool(passed), detail)
    assert passed, detail


def random_spec(kind, rng, n=1):
    rho = float(rng.uniform(0.01, 10.0))
    eps = None
    if kind is PenaltyKind.HUBER_SHIFTED:
        eps = float(rng.uniform(0.01, 0.99)) * math.sqrt(2.0 * rho)
    return PenaltySpec(kind, rho, n, huber_eps=eps)


# --- cached suite runs ------------------------------------------------------------


@lru_cache(maxsize=None)
def suite_runs(suite: str, count: int, params: tuple = ()):
    """``(loaded, report)`` per seed and the total wall time in seconds."""
    t0 = time.perf_counter()
    runs = []
    for seed in range(count):
        loaded = SUITES[suite](seed, dict(params))
        rep, _ = run_solve(loaded, RunConfig())
        runs.append((loaded, rep))
    return runs, time.perf_counter() - t0


@lru_cache(maxsize=None)
def portfolio_runs():
    """Criterion-4 runs plus their oracle values; time covers both."""
    t0 = time.perf_counter()
    runs, _ = suite_runs("portfolio", 30, (("n", 8),))
    best = [enumerate_supports(l.problem, 8, keep_table=False, skip_dominated=True).best_value
            for l, _ in runs]
    return runs, best, time.perf_counter() - t0


def all_bench_runs():
    return (portfolio_runs()[0] + suite_runs("basis_pursuit", 50)[0]
            + suite_runs("dictionary", 20)[0])


# --- criteria ----------------------------------------------------------------------


def test_criterion_01_penalty_axioms():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad, worst_drop = [], 0.0
    for kind in KINDS:
        for _ in range(1000):
            p = random_spec(kind, rng)
            if validate_spec(p):
                bad.append((kind.value, p.rho, p.huber_eps))
            worst_drop = max(worst_drop, abs(p.component(0.0) - p.component(p.minimizer) - p.rho))
    dt = time.perf_counter() - t0
    ok = not bad and worst_drop <= 1e-12 and dt < 1.0
    report(1, "penalty axioms", ok,
           f"{3000 - len(bad)}/3000 valid, max |p(0)-p(s)-rho| = {worst_drop:.1e}, {dt:.2f} s")


def test_criterion_02_reformulation_bound():
    rng = np.random.default_rng(2)
    n = 6
    t0 = time.perf_counter()
    violations = mismatched = 0
    for kind in KINDS:
        for _ in range(10_000):
            p = random_spec(kind, rng, n)
            nonzero = rng.random(n) < 0.5
            x = np.where(nonzero, rng.uniform(0.5, 3.0, n), 0.0)
            canonical = rng.random() < 0.3
            y = np.where(nonzero, 0.0, p.minimizer)
            if not canonical:
                # each zero-set entry is off y_star, on y_star, or both terms mixed
                y = np.where(nonzero, 0.0, rng.uniform(0.0, 3.0, n) * (rng.random(n) < 0.5)
                             + y * (rng.random(n) < 0.5))
            try:
                lhs, rhs, tight = reformulation_gap(None, p, x, y)
            except AssertionError:
                violations += 1
                continue
            on_star = bool(np.all(np.abs(y[~nonzero] - p.minimizer) <= 1e-12))
            if abs(lhs - rhs) <= 1e-10 and not on_star or on_star and abs(lhs - rhs) > 1e-10:
                mismatched += 1
    dt = time.perf_counter() - t0
    ok = violations == 0 and mismatched == 0 and dt < 5.0
    report(2, "reformulation lower bound", ok,
           f"30000 pairs, {violations} bound violations, {mismatched} tightness mismatches, "
           f"{dt:.2f} s")


def test_criterion_03_closed_form_stationarity():
    t0 = time.perf_counter()
    worst_res = worst_x = worst_comp = 0.0
    compared = 0
    pen = PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, 1.0, 1)
    for a in (1.0, 2.0, 5.0):
        sub = build_penalized(fixtures.linear_descent(), pen, a)
        x, y = fixtures.linear_descent_stationary(a)
        r = step2_residuals(sub, x, y, [], [], [0.0], [0.0])
        worst_res = max(worst_res, r.max(), *multiplier_free_residuals(sub, x, y))
        rep = solve(fixtures.linear_descent(), pen, OuterConfig(alpha0=a, beta=2.0), start=(x, y))
        for it in rep.trace:
            if it.x[0] > TAU0 and it.y[0] > TAU0:
                xk, yk = fixtures.linear_descent_stationary(it.alpha)
                worst_x = max(worst_x, abs(it.x[0] - xk[0]))
                worst_comp = max(worst_comp, abs(it.comp - xk[0] * yk[0]))
                compared += 1
    dt = time.perf_counter() - t0
    ok = worst_res <= 1e-10 and compared >= 3 and max(worst_x, worst_comp) <= 1e-6 and dt < 1.0
    report(3, "closed-form stationarity", ok,
           f"residuals <= {worst_res:.1e}; {compared} interior iterations, x error "
           f"{worst_x:.1e}, comp error {worst_comp:.1e}, {dt:.2f} s")


def test_criterion_04_oracle_equivalence():
    runs, best, dt = portfolio_runs()
    values = np.array([rep.l0_objective for _, rep in runs])
    best = np.array(best)
    match = np.abs(values - best) <= 1e-4 * np.abs(best)
    below = values < best - 1e-6
    ok = match.mean() >= 0.8 and not below.any() and dt < 120.0
    report(4, "oracle equivalence", ok,
           f"{int(match.sum())}/30 match, {int(below.sum())} below oracle, {dt:.1f} s")


def test_criterion_05_complementarity_in_the_limit():
    runs = all_bench_runs()
    bad = []
    counts = {"Step3": 0, "MaxOuter": 0, "InnerFailure": 0}
    for loaded, rep in runs:
        counts[rep.status] += 1
        if rep.status == "Step3" and not rep.comp <= 1e-6:
            bad.append(loaded.name)
        if rep.status == "MaxOuter":
            tail = [it.comp for it in rep.trace[-5:]]
            if any(b > a for a, b in zip(tail, tail[1:])):
                bad.append(loaded.name)
    report(5, "complementarity in the limit", not bad,
           f"{len(runs)} runs {counts}, {len(bad)} violations {bad[:3]}")


def test_criterion_06_s_stationarity_at_termination():
    runs = [(l, r) for l, r in all_bench_runs() if r.status == "Step3"]
    bad = []
    worst = 0.0
    for loaded, rep in runs:
        worst = max(worst, rep.s_residual)
        if rep.s_residual > 1e-5 or biactive(rep.x[rep.mask_idx], rep.y, TAU0).size:
            bad.append(loaded.name)
    report(6, "S-stationarity at termination", runs and not bad,
           f"{len(runs)} Step3 runs, worst residual {worst:.1e}, {len(bad)} failures {bad[:3]}")


def test_criterion_07_basis_pursuit():
    runs, dt = suite_runs("basis_pursuit", 50)
    feasible = sparse = 0
    for loaded, rep in runs:
        inst = loaded.instance
        feasible += inst.residual(rep.x) <= inst.eps + 1e-8
        sparse += len(rep.support) <= 4
    ok = feasible == 50 and sparse >= 35 and dt < 120.0
    report(7, "basis pursuit", ok,
           f"{feasible}/50 feasible, {sparse}/50 with ||x||_0 <= 4, {dt:.1f} s")


def test_criterion_08_dictionary_learning():
    runs, dt = suite_runs("dictionary", 20)
    bad = []
    worst_comp = worst_res = 0.0
    for loaded, rep in runs:
        inst = loaded.instance
        f0 = loaded.problem.f(loaded.start[0])
        res = dictionary.dictionary_residual(inst, rep.x)
        worst_comp, worst_res = max(worst_comp, rep.comp), max(worst_res, res)
        if rep.comp > 1e-6 or rep.objective > f0 or res > 1e-3:
            bad.append(loaded.name)
    ok = not bad and dt < 180.0
    report(8, "dictionary learning", ok,
           f"{20 - len(bad)}/20 pass, worst comp {worst_comp:.1e}, worst D residual "
           f"{worst_res:.1e}, {dt:.1f} s")


def test_criterion_09_penalized_hessian_boundary():
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(20):
        Q = portfolio.random_spd(int(rng.integers(2, 9)), rng)
        bound = math.sqrt(2.0 * np.linalg.eigvalsh(Q)[0])
        inside = np.linalg.eigvalsh(portfolio.penalized_hessian(Q, 0.95 * bound))[0]
        outside = np.linalg.eigvalsh(portfolio.penalized_hessian(Q, 1.05 * bound))[0]
        bad += not (inside > 1e-10 and outside <= 1e-10)
    dt = time.perf_counter() - t0
    report(9, "penalized Hessian boundary", bad == 0 and dt < 5.0,
           f"{20 - bad}/20 matrices switch definiteness at the bound, {dt:.2f} s")


def test_criterion_10_counterexample_fixtures():
    t0 = time.perf_counter()
    sphere = fixtures.degenerate_sphere(3)
    d = cli.diagnose_point(sphere, np.ones(3))
    trace, reached = as_trace(sphere, fixtures.degenerate_sphere_sequence(3, 10_000))
    rep = solve(fixtures.ball_sum(3), PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, 1.0, 3),
                OuterConfig(), start=(np.full(3, 0.5), None))
    xinf = float(np.max(np.abs(rep.x)))
    dt = time.perf_counter() - t0
    ok = (abs(d["s_residual"] - 1.0) <= 1e-12 and d["sp_mfcq"] is False and reached
          and xinf <= 1e-6 and dt < 5.0)
    report(10, "counterexample fixtures", ok,
           f"s_residual {d['s_residual']!r}, sp_mfcq {d['sp_mfcq']}, final AS residual "
           f"{trace[-1]:.1e}; ball solve ||x||_inf {xinf:.1e}; {dt:.2f} s")


def _gradient_suites(rng):
    """``name -> (functions, draw)``; each function returns a value and its gradient."""
    pf = portfolio.build_portfolio(portfolio.gen_portfolio(6, 0))
    bp = basis_pursuit.build_basis_pursuit(basis_pursuit.gen_basis_pursuit(8, 16, 2, seed=0))
    data = classification.gen_classification(20, 5, 2, seed=0)
    lg, _ = classification.build_logistic(data)
    svm, _, _ = classification.build_svm(data)
    dinst = dictionary.gen_dictionary(3, 4, 5, 2, seed=0)
    lay = dinst.layout
    k = 2 * lay.n_code
    z_dict = lay.project(rng.standard_normal(lay.size))

    def rows(con, n):
        return [lambda v, i=i: (con(v)[0][i], con(v)[1][i]) for i in range(n)]

    def dict_block(sl):
        # the other block stays at its value in z_dict
        def fun(w):
            z = z_dict.copy()
            z[sl] = w
            v, g = dictionary.dictionary_objective(dinst, z)
            return v, g[sl]
        return fun

    code, atoms = slice(0, k), slice(k, None)
    return {
        "portfolio": ([pf.objective, *rows(pf.ineq, pf.n_ineq), *rows(pf.eq, pf.n_eq)],
                      lambda: rng.uniform(0, 1, pf.n)),
        "basis pursuit": ([bp.objective, *rows(bp.ineq, bp.n_ineq)],
                          lambda: rng.uniform(0, 1, bp.n)),
        "logistic": ([lg.objective], lambda: rng.uniform(0, 2, lg.n)),
        "svm": ([svm.objective, *rows(svm.ineq, svm.n_ineq)], lambda: rng.uniform(0, 2, svm.n)),
        "dictionary code": ([dict_block(code)], lambda: rng.uniform(0, 2, k)),
        "dictionary atoms": ([dict_block(atoms)],
                             lambda: lay.project(rng.standard_normal(lay.size))[atoms]),
    }


def test_criterion_11_gradient_suites():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = {}
    for name, (funs, draw) in _gradient_suites(rng).items():
        worst[name] = 0.0
        for _ in range(20):
            z = draw()
            worst[name] = max(worst[name], *(gradient_check(f, z) for f in funs))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and dt < 10.0
    report(11, "gradient suites", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {dt:.2f} s")


def test_criterion_12_splitting_semantics():
    split, smap = split_free_variables(fixtures.free_square())
    rays = [float(smap.to_original([lam, lam])[0]) for lam in (0.0, 1.0, 10.0)]
    rep = solve(split, PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, 1.0, 2), OuterConfig(),
                start=(np.array([1.0, 1.0]), None))
    rep_nnz = int(np.count_nonzero(np.abs(smap.shrink(rep.x)) > TAU0))
    rng = np.random.default_rng(12)
    gaps = []
    for _ in range(10):
        B = rng.standard_normal((2, 2))
        base = fixtures.quadratic_problem(B @ B.T + 0.1 * np.eye(2), rng.standard_normal(2) * 2,
                                          rho=float(rng.uniform(0.1, 2.0)), lower=-3.0,
                                          upper=3.0)
        sp, _ = split_free_variables(base)
        gaps.append(abs(enumerate_supports(sp, 4).best_value
                        - enumerate_supports(base, 2).best_value))
    ok = all(r == 0.0 for r in rays) and rep_nnz == 0 and max(gaps) <= 1e-8
    report(12, "splitting semantics", ok,
           f"rays map to {rays}, shrunk solution nnz {rep_nnz}, max oracle gap {max(gaps):.1e}")
