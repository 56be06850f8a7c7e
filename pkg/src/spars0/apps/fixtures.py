"""Small closed-form problems used as fixtures and in the CLI.

``quadratic_problem`` is the generic dense builder behind the ``quadratic``
problem family; the rest are hand-checkable instances with known
stationary points.
"""
from __future__ import annotations

import numpy as np

from ..problem import SparseProblem


def quadratic_problem(H, c, const=0.0, *, rho=1.0, upper=np.inf, lower=None,
                      A_ub=None, b_ub=None, A_eq=None, b_eq=None, mask=None,
                      name="quadratic") -> SparseProblem:
    """``min 0.5 x'Hx + c'x + const`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, bounds."""
    H = np.atleast_2d(np.asarray(H, float))
    c = np.asarray(c, float).reshape(-1)
    n = c.size
    if H.shape != (n, n):
        raise ValueError("H must be n x n")
    H = 0.5 * (H + H.T)

    def objective(x):
        Hx = H @ x
        return 0.5 * float(x @ Hx) + float(c @ x) + const, Hx + c

    ineq = eq = None
    m = p = 0
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, float))
        b_ub = np.asarray(b_ub, float).reshape(-1)
        m = A_ub.shape[0]
        ineq = lambda x: (A_ub @ x - b_ub, A_ub)
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, float))
        b_eq = np.asarray(b_eq, float).reshape(-1)
        p = A_eq.shape[0]
        eq = lambda x: (A_eq @ x - b_eq, A_eq)
    convex = bool(np.linalg.eigvalsh(H)[0] >= -1e-12) if n else True
    return SparseProblem(n=n, objective=objective, rho=rho, upper=upper, lower=lower,
                         ineq=ineq, n_ineq=m, eq=eq, n_eq=p, mask=mask, name=name,
                         convex_restricted=convex, linear=(A_ub, b_ub, A_eq, b_eq))


def shifted_square(target=2.0, rho=1.0) -> SparseProblem:
    """``(x - target)^2`` on ``x >= 0``."""
    return quadratic_problem([[2.0]], [-2.0 * target], target**2, rho=rho,
                             name="shifted_square")


def two_targets(rho=1.0) -> SparseProblem:
    """``(x1 - 2)^2 + (x2 - 0.5)^2`` on ``x >= 0``."""
    return quadratic_problem(2.0 * np.eye(2), [-4.0, -1.0], 4.25, rho=rho, name="two_targets")


def linear_descent(rho=1.0) -> SparseProblem:
    """``f(x) = -x`` on ``x >= 0``; its penalized subproblems are unbounded below."""
    return SparseProblem(n=1, objective=lambda x: (-float(x[0]), np.array([-1.0])), rho=rho,
                         upper=np.inf, name="linear_descent")


def linear_descent_stationary(alpha: float):
    """Closed-form stationary point ``(x, y)`` of the penalized ``linear_descent`` with rho=1."""
    return (np.array([(np.sqrt(2.0) - 1.0 / alpha) / alpha]), np.array([1.0 / alpha]))


def ball_sum(n=3, rho=1.0) -> SparseProblem:
    """``sum(x)`` s.t. ``||x||^2 <= 1``, ``x >= 0``. Only ``x = 0`` is stationary."""

    def objective(x):
        return float(np.sum(x)), np.ones(n)

    def ineq(x):
        return np.array([float(x @ x) - 1.0]), 2.0 * x[None, :]

    return SparseProblem(n=n, objective=objective, rho=rho, upper=np.inf, ineq=ineq,
                         n_ineq=1, name="ball_sum", convex_restricted=True)


def degenerate_sphere(n=2, rho=1.0) -> SparseProblem:
    """``x_1`` s.t. ``0.5*||x - e||^2 = 0``, ``x >= 0``; feasible set ``{e}``, degenerate there."""
    e = np.ones(n)

    def objective(x):
        g = np.zeros(n)
        g[0] = 1.0
        return float(x[0]), g

    def eq(x):
        d = x - e
        return np.array([0.5 * float(d @ d)]), d[None, :]

    return SparseProblem(n=n, objective=objective, rho=rho, upper=np.inf, eq=eq, n_eq=1,
                         name="degenerate_sphere")


def degenerate_sphere_sequence(n=2, k_max=10_000):
    """The approximately stationary sequence ``x^k = (1 - 1/k, 1, ...)`` with ``mu^k = k``."""
    for k in range(1, k_max + 1):
        x = np.ones(n)
        x[0] = 1.0 - 1.0 / k
        yield x, None, np.array([float(k)])


def free_square(r=10.0, rho=1.0) -> SparseProblem:
    """``a^2`` over the free variable ``a in [-r, r]``."""
    return quadratic_problem([[2.0]], [0.0], rho=rho, upper=r, lower=-r, name="free_square")


FIXTURES = {
    "shifted_square": shifted_square,
    "two_targets": two_targets,
    "linear_descent": linear_descent,
    "ball_sum": ball_sum,
    "degenerate_sphere": degenerate_sphere,
    "free_square": free_square,
}
