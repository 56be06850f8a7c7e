import numpy as np
import pytest

from spars0 import stationarity as st
from spars0.apps import fixtures, portfolio
from spars0.oracle import enumerate_supports
from spars0.problem import PreconditionError, SparseProblem, y_star

from conftest import natural


def toy_portfolio():
    inst = portfolio.PortfolioInstance(np.eye(2), [1.0, 2.0], 1.5, [1.0, 1.0], rho=0.1)
    return portfolio.build_portfolio(inst)


def single_ineq(n=1):
    """``sum(x)`` with ``g(x) = x_1 - 1``."""
    J = np.zeros((1, n))
    J[0, 0] = 1.0
    return fixtures.quadratic_problem(np.zeros((n, n)), np.zeros(n), A_ub=J, b_ub=[1.0])


class TestSResidual:
    def test_degenerate_sphere(self):
        p = fixtures.degenerate_sphere(3)
        for mu in (0.0, 5.0, -100.0):
            assert st.s_residual(p, np.ones(3), None, [mu]) == pytest.approx(1.0, abs=1e-12)

    def test_unconstrained_stationary(self):
        assert st.s_residual(fixtures.shifted_square(), [2.0]) == 0.0

    def test_ball_sum_origin(self):
        assert st.s_residual(fixtures.ball_sum(3), np.zeros(3), [0.0]) == 0.0

    def test_negative_multiplier_counts(self):
        assert st.s_residual(fixtures.ball_sum(3), np.zeros(3), [-0.5]) == pytest.approx(0.5)

    def test_inactive_row_rescaling(self):
        A = np.array([[1.0, 1.0], [1.0, 0.0]])
        x = np.array([0.2, 0.3])
        base = fixtures.quadratic_problem(np.eye(2), -x, A_ub=A, b_ub=[10.0, 5.0])
        scaled = fixtures.quadratic_problem(np.eye(2), -x, A_ub=A * [[1.0], [7.0]],
                                            b_ub=[10.0, 35.0])
        assert st.s_residual(base, x, [0.0, 0.0]) == st.s_residual(scaled, x, [0.0, 0.0]) == 0.0
        assert st.best_multiplier_residual(base, x + 0.1)[0] == pytest.approx(
            st.best_multiplier_residual(scaled, x + 0.1)[0])


class TestBestMultipliers:
    def test_degenerate_sphere(self):
        res, _, _ = st.best_multiplier_residual(fixtures.degenerate_sphere(2), np.ones(2))
        assert res == pytest.approx(1.0, abs=1e-12)

    def test_portfolio_toy_oracle_optimum(self):
        p = toy_portfolio()
        o = enumerate_supports(p)
        res, lam, mu = st.best_multiplier_residual(p, o.best_x)
        assert res <= 1e-8 and np.all(lam >= 0)

    def test_unconstrained(self):
        res, lam, mu = st.best_multiplier_residual(fixtures.two_targets(), [2.0, 0.5])
        assert res == 0.0 and lam.size == 0 and mu.size == 0


class TestBiactive:
    def test_empty(self):
        assert st.biactive([0.0, 1.0], [1.4, 0.0]).tolist() == []

    def test_one(self):
        assert st.biactive([0.0, 1.0], [0.0, 0.0]).tolist() == [0]

    def test_penalized_path_limit(self):
        assert st.biactive([0.0], [0.0]).tolist() == [0]


class TestConstraintQualifications:
    def test_ball_sum_origin(self):
        p = fixtures.ball_sum(3)
        assert st.check_sp_licq(p, np.zeros(3)) is True
        assert st.check_sp_mfcq(p, np.zeros(3)) is True

    def test_degenerate_sphere(self):
        p = fixtures.degenerate_sphere(2)
        assert st.check_sp_licq(p, np.ones(2)) is False
        assert st.check_sp_mfcq(p, np.ones(2)) is False

    def test_single_active_inequality(self):
        p = single_ineq(1)
        assert st.check_sp_licq(p, [1.0]) is True
        assert st.check_sp_mfcq(p, [1.0]) is True

    def test_mfcq_without_licq(self):
        # two copies of the same active inequality are dependent but positively independent
        A = np.array([[1.0, 1.0], [2.0, 2.0]])
        p = fixtures.quadratic_problem(np.eye(2), np.zeros(2), A_ub=A, b_ub=[1.0, 2.0])
        x = np.array([0.5, 0.5])
        assert st.check_sp_licq(p, x) is False
        assert st.check_sp_mfcq(p, x) is True

    def test_opposite_inequalities_fail_mfcq(self):
        A = np.array([[1.0, 1.0], [-1.0, -1.0]])
        p = fixtures.quadratic_problem(np.eye(2), np.zeros(2), A_ub=A, b_ub=[1.0, -1.0])
        assert st.check_sp_mfcq(p, np.array([0.5, 0.5])) is False

    def test_licq_implies_mfcq(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(0, 3))
            p_ = int(rng.integers(0, 2))
            x = rng.uniform(0.5, 1.0, n) * (rng.random(n) < 0.7)
            A = rng.standard_normal((m, n))
            E = rng.standard_normal((p_, n))
            prob = fixtures.quadratic_problem(
                np.eye(n), np.zeros(n), A_ub=A if m else None, b_ub=A @ x if m else None,
                A_eq=E if p_ else None, b_eq=E @ x if p_ else None)
            if st.check_sp_licq(prob, x):
                assert st.check_sp_mfcq(prob, x) is True


class TestSecondOrder:
    def test_strict_minimum(self):
        assert st.check_sp_sosc(fixtures.shifted_square(), [2.0]) is st.SoscStatus.HOLDS

    def test_pinned_concave(self):
        p = fixtures.quadratic_problem([[-2.0]], [0.0])
        assert st.check_sp_sosc(p, [0.0]) is st.SoscStatus.HOLDS

    def test_concave_off_support_fails(self):
        # -(x1 - 1)^2 at its stationary point x1 = 1 with free coordinate
        p = fixtures.quadratic_problem([[-2.0]], [2.0])
        assert st.check_sp_sosc(p, [1.0]) is st.SoscStatus.FAILS
        assert st.check_sp_sonc(p, [1.0]) is False

    def test_portfolio_toy(self):
        p = toy_portfolio()
        x = enumerate_supports(p).best_x
        _, lam, mu = st.best_multiplier_residual(p, x)
        assert st.check_sp_sosc(p, x, lam, mu) is st.SoscStatus.HOLDS
        # the return constraint is active with a zero multiplier, so the
        # cone is polyhedral and the necessary condition is left undecided
        assert st.check_sp_sonc(p, x, lam, mu) is None

    def test_precondition(self):
        with pytest.raises(PreconditionError):
            st.check_sp_sosc(fixtures.shifted_square(), [1.0])

    def test_hessian_finite_differences(self):
        p = fixtures.two_targets()
        H = st.lagrangian_hessian(p, np.array([1.0, 1.0]))
        assert H == pytest.approx(2 * np.eye(2), abs=1e-6)


class TestAsTrace:
    def test_degenerate_sphere_sequence(self):
        p = fixtures.degenerate_sphere(2)
        res, ok = st.as_trace(p, fixtures.degenerate_sphere_sequence(2, 10_000))
        assert ok and res[-1] < 1e-3 and res[0] > res[-1]

    def test_constant_stationary_sequence(self):
        p = fixtures.ball_sum(3)
        res, ok = st.as_trace(p, [(np.zeros(3), np.zeros(1), None)] * 5)
        assert ok and res == [0.0] * 5

    def test_ball_sum_positive_limit(self):
        p = fixtures.ball_sum(3)
        x_lim = np.array([0.5, 0.0, 0.0])
        seq = [(x_lim + 1.0 / k, np.array([float(k)]), None) for k in range(1, 50)]
        seq.append((x_lim, np.array([3.0]), None))
        res, ok = st.as_trace(p, seq)
        assert not ok and min(res) >= 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            st.as_trace(fixtures.ball_sum(3), [])


def test_s_stationarity_matches_reformulation(rng):
    """Stationarity of x and KKT of the complementarity reformulation at (x, y_star(x))."""
    agree = 0
    for trial in range(100):
        n = 4
        B = rng.standard_normal((n, n))
        H = B @ B.T + 0.1 * np.eye(n)
        x = rng.uniform(0.5, 2.0, n) * (rng.random(n) < 0.6)
        c = -(H @ x)  # gradient vanishes everywhere
        if trial % 2:
            c = c + rng.standard_normal(n)
        p = fixtures.quadratic_problem(H, c)
        pen = natural(1.0, n)
        tau = 1e-6
        s = st.s_residual(p, x, tau0=tau)
        r = st.reformulation_kkt_residual(p, pen, x, y_star(x, pen, tau), tau0=tau)
        assert (s <= 1e-8) == (r <= 1e-8)
        agree += s <= 1e-8
    assert 0 < agree < 100


def test_sp_lagrangian_value():
    p = fixtures.ball_sum(2)
    ev = st.sp_lagrangian(p, np.array([0.5, 0.5]), [2.0], with_hessian=True)
    assert ev.value == pytest.approx(1.0 + 2.0 * (0.5 - 1.0))
    assert ev.gradient == pytest.approx([3.0, 3.0])
    assert ev.hessian == pytest.approx(4 * np.eye(2), abs=1e-6)


def test_custom_projection_problem_residual():
    proj = lambda v: np.clip(v, 0.0, 1.0)
    p = SparseProblem(n=1, objective=lambda x: (float(-x[0]), np.array([-1.0])), rho=1.0,
                      upper=1.0, project=proj)
    assert st.s_residual(p, [1.0]) == 0.0
    assert st.s_residual(p, [0.5]) == pytest.approx(0.5)
