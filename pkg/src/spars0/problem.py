"""Sparse problems, the penalized subproblem, and the free-variable split."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .penalty import _KERNEL_CODE, PenaltyKind, PenaltySpec, penalty_minimizer

Objective = Callable[[np.ndarray], tuple]
Constraint = Callable[[np.ndarray], tuple]

COMPLEMENTARITY_TOL = 1e-8
TIGHT_TOL = 1e-10


class PreconditionError(ValueError):
    pass


def zero_tolerance(x, tau0: float | None = None) -> float:
    """Default threshold below which a coordinate counts as zero."""
    if tau0 is not None:
        return tau0
    x = np.asarray(x, dtype=float)
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    return 1e-6 * max(1.0, scale)


@dataclass(frozen=True, eq=False)
class SparseProblem:
    """``min f(x) + rho * ||x[mask]||_0`` s.t. ``g(x) <= 0, h(x) = 0, lower <= x <= upper``.

    ``objective`` returns ``(f, grad)``; ``ineq``/``eq`` return
    ``(values, jacobian)`` with a dense ``(m, n)`` / ``(p, n)`` Jacobian.
    The penalized reformulation needs lower bound 0 on masked coordinates;
    free masked coordinates are handled by :func:`split_free_variables`.
    ``project`` optionally replaces the box projection for problems whose
    simple set is not a box; it must keep masked coordinates in
    ``[0, upper]``. ``linear = (A_ub, b_ub, A_eq, b_eq)`` optionally records
    that ``g = A_ub x - b_ub`` and ``h = A_eq x - b_eq`` (either pair may be
    None); solvers then evaluate the constraints with one product.
    """

    n: int
    objective: Objective
    rho: float
    upper: np.ndarray
    lower: Optional[np.ndarray] = None
    ineq: Optional[Constraint] = None
    n_ineq: int = 0
    eq: Optional[Constraint] = None
    n_eq: int = 0
    mask: Optional[np.ndarray] = None
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "problem"
    convex_restricted: bool = False
    meta: dict = field(default_factory=dict)
    linear: Optional[tuple] = None

    def __post_init__(self):
        up = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.n,)).copy()
        lo = (
            np.zeros(self.n)
            if self.lower is None
            else np.broadcast_to(np.asarray(self.lower, dtype=float), (self.n,)).copy()
        )
        mask = (
            np.ones(self.n, dtype=bool)
            if self.mask is None
            else np.asarray(self.mask, dtype=bool).copy()
        )
        if mask.shape != (self.n,):
            raise ValueError("mask must have length n")
        if np.any(lo > up):
            raise ValueError("lower bounds exceed upper bounds")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        for a in (up, lo, mask):
            a.setflags(write=False)
        object.__setattr__(self, "upper", up)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "mask", mask)
        if self.ineq is None:
            object.__setattr__(self, "n_ineq", 0)
        if self.eq is None:
            object.__setattr__(self, "n_eq", 0)

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())

    def f(self, x) -> float:
        return self.objective(x)[0]

    def constraints(self, x):
        """``(g, Jg, h, Jh)`` with empty arrays for absent blocks."""
        if self.ineq is not None:
            g, Jg = _block(*self.ineq(x))
        else:
            g, Jg = np.zeros(0), np.zeros((0, self.n))
        if self.eq is not None:
            h, Jh = _block(*self.eq(x))
        else:
            h, Jh = np.zeros(0), np.zeros((0, self.n))
        return g, Jg, h, Jh

    def affine_blocks(self):
        """``(A, b, m)`` with ``g, h = (A x - b)[:m], (A x - b)[m:]``, or None."""
        if self.linear is None:
            return None
        A_ub, b_ub, A_eq, b_eq = self.linear
        rows, rhs = [], []
        for A, b in ((A_ub, b_ub), (A_eq, b_eq)):
            if A is not None:
                rows.append(np.atleast_2d(np.asarray(A, float)))
                rhs.append(np.asarray(b, float).reshape(-1))
        if not rows:
            return np.zeros((0, self.n)), np.zeros(0), 0
        m = 0 if A_ub is None else rows[0].shape[0]
        return np.ascontiguousarray(np.vstack(rows)), np.concatenate(rhs), m

    def project_x(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        if self.project is not None:
            return self.project(x)
        return kernels.project_box(x, self.lower, self.upper)

    def infeasibility(self, x) -> float:
        g, _, h, _ = self.constraints(x)
        v = 0.0
        if g.size:
            v = max(v, float(np.max(np.maximum(g, 0.0))))
        if h.size:
            v = max(v, float(np.max(np.abs(h))))
        bound = np.max(np.maximum(self.lower - x, 0.0), initial=0.0)
        bound = max(bound, np.max(np.maximum(x - self.upper, 0.0), initial=0.0))
        return max(v, float(bound))

    def lagrangian_gradient(self, x, lam=None, mu=None) -> np.ndarray:
        """Gradient of ``f + lam.g + mu.h`` (bounds excluded)."""
        _, grad = self.objective(x)
        grad = np.array(grad, dtype=float)
        g, Jg, h, Jh = self.constraints(x)
        if g.size and lam is not None:
            grad += Jg.T @ np.asarray(lam, float)
        if h.size and mu is not None:
            grad += Jh.T @ np.asarray(mu, float)
        return grad

    def with_bounds(self, lower=None, upper=None, name=None) -> "SparseProblem":
        return SparseProblem(
            n=self.n,
            objective=self.objective,
            rho=self.rho,
            upper=self.upper if upper is None else upper,
            lower=self.lower if lower is None else lower,
            ineq=self.ineq,
            n_ineq=self.n_ineq,
            eq=self.eq,
            n_eq=self.n_eq,
            mask=self.mask,
            project=self.project,
            name=self.name if name is None else name,
            convex_restricted=self.convex_restricted,
            meta=self.meta,
            linear=self.linear,
        )


def _block(v, J):
    v = np.asarray(v, dtype=float)
    J = np.asarray(J, dtype=float)
    if v.ndim != 1:
        v = v.reshape(-1)
    if J.ndim != 2:
        J = J.reshape(v.size, -1)
    return v, J


def support(problem: SparseProblem, x, tau0: float | None = None) -> np.ndarray:
    """Indices of masked coordinates with ``|x_i| > tau0``."""
    x = np.asarray(x, dtype=float)
    tau = zero_tolerance(x, tau0)
    return np.flatnonzero(problem.mask & (np.abs(x) > tau))


def l0_objective(problem: SparseProblem, x, tau0: float | None = None) -> float:
    x = np.asarray(x, dtype=float)
    return float(problem.f(x) + problem.rho * support(problem, x, tau0).size)


def y_star(x, penalty: PenaltySpec, tau0: float | None = None) -> np.ndarray:
    """Canonical auxiliary vector: the penalty minimizer on the zero set, 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    tau = zero_tolerance(x, tau0)
    return np.where(np.abs(x) <= tau, penalty.minimizer, 0.0)


def reformulation_gap(problem: SparseProblem, penalty: PenaltySpec, x, y, tau0=None):
    """Compare ``rho*||x||_0`` with ``p(y) - M`` for a complementary pair.

    ``x`` and ``y`` are the masked coordinates. Returns ``(lhs, rhs, tight)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.max(np.abs(x * y), initial=0.0) > COMPLEMENTARITY_TOL:
        raise PreconditionError("x and y are not complementary")
    tau = zero_tolerance(x, tau0)
    lhs = penalty.rho * float(np.count_nonzero(np.abs(x) > tau))
    _, _, M = penalty_minimizer(penalty.with_n(y.size))
    rhs = penalty.with_n(y.size).value(y) - M
    if lhs > rhs + TIGHT_TOL:
        raise AssertionError(f"lower bound violated: {lhs} > {rhs}")
    return lhs, rhs, abs(lhs - rhs) <= TIGHT_TOL


class PenalizedSubproblem:
    """``F(x, y) = f(x) + p(y) + alpha * x[mask].y`` over the stacked vector ``z = (x, y)``.

    One ``y`` per masked coordinate; ``y >= 0``; the constraints on ``x``
    are those of the base problem.
    """

    def __init__(self, base: SparseProblem, penalty: PenaltySpec, alpha: float):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if np.any(base.lower[base.mask] != 0.0):
            raise ValueError("penalized coordinates need lower bound 0; split free variables first")
        self.base = base
        self.penalty = penalty.with_n(base.n_masked)
        if penalty.kind is PenaltyKind.SHIFTED_ABS:
            raise ValueError("the shifted absolute value cannot drive a gradient method")
        self._kind = _KERNEL_CODE[penalty.kind]
        self._rho = float(self.penalty.rho)
        self._eps = float(self.penalty._eps())
        self.alpha = float(alpha)
        self.n = base.n
        self.nm = base.n_masked
        self._idx = np.flatnonzero(base.mask)
        self._full = self.nm == self.n
        self.lower = np.concatenate([base.lower, np.zeros(self.nm)])
        self.upper = np.concatenate([base.upper, np.full(self.nm, np.inf)])

    def split(self, z):
        return z[: self.n], z[self.n :]

    def join(self, x, y):
        return np.concatenate([np.asarray(x, float), np.asarray(y, float)])

    def value_and_gradient(self, z):
        x, y = z[: self.n], z[self.n :]
        f, gf = self.base.objective(x)
        if self._full:
            v, grad = kernels.coupled_eval(self._kind, z, np.ascontiguousarray(gf, dtype=float),
                                           self.alpha, self._rho, self._eps)
            return f + v, grad
        pv, gp = kernels.penalty_eval(self._kind, y, self._rho, self._eps)
        xm = x[self._idx]
        gx = np.array(gf, dtype=float)
        gx[self._idx] += self.alpha * y
        gy = gp + self.alpha * xm
        return f + pv + self.alpha * float(xm @ y), np.concatenate([gx, gy])

    def __call__(self, z):
        return self.value_and_gradient(z)

    def project(self, z):
        z = np.ascontiguousarray(z, dtype=float)
        if self.base.project is None:
            return kernels.project_box(z, self.lower, self.upper)
        x, y = self.split(z)
        return np.concatenate([self.base.project(x), np.maximum(y, 0.0)])

    def constraints(self, z):
        """Constraint blocks of the base problem; the Jacobians cover the
        ``x`` columns of ``z`` only (``y`` enters no constraint)."""
        return self.base.constraints(z[: self.n])

    def comp(self, z) -> float:
        x, y = self.split(z)
        return float(x[self._idx] @ y)


def build_penalized(problem: SparseProblem, penalty: PenaltySpec, alpha: float):
    return PenalizedSubproblem(problem, penalty, alpha)


# --- free variables -------------------------------------------------------


class SplitMap:
    """Maps a split point ``(x_fixed, a+, a-)`` back to the original variables.

    The split vector keeps every original coordinate in place (free ones
    hold ``a+``) and appends one ``a-`` per free coordinate.
    """

    def __init__(self, n_orig: int, free: np.ndarray):
        self.n_orig = n_orig
        self.free = np.asarray(free, dtype=int)
        self.n_split = n_orig + self.free.size
        P = np.zeros((n_orig, self.n_split))
        P[np.arange(n_orig), np.arange(n_orig)] = 1.0
        P[self.free, n_orig + np.arange(self.free.size)] = -1.0
        self.P = P

    def to_original(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        a = z[: self.n_orig].copy()
        a[self.free] -= z[self.n_orig :]
        return a

    def shrink(self, z) -> np.ndarray:
        """Subtract the common minimum of each ``(a+, a-)`` pair."""
        z = np.array(z, dtype=float)
        plus = z[self.free]
        minus = z[self.n_orig :]
        common = np.minimum(plus, minus)
        z[self.free] = plus - common
        z[self.n_orig :] = minus - common
        return z

    def from_original(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        z = np.concatenate([a, np.zeros(self.free.size)])
        z[self.free] = np.maximum(a[self.free], 0.0)
        z[self.n_orig :] = np.maximum(-a[self.free], 0.0)
        return z

    def __call__(self, z):
        return self.to_original(z), self.shrink(z)


def split_free_variables(problem: SparseProblem, free=None):
    """Replace each free coordinate ``a_i in [-r_i, r_i]`` by ``a+ - a-``.

    ``free`` defaults to the coordinates with a negative lower bound. Both
    halves receive the bounds ``[0, r_i]`` with ``r_i = max(-lower_i, upper_i)``.
    Returns the split problem and its :class:`SplitMap`.
    """
    lo0 = np.asarray(problem.lower, float)
    up0 = np.asarray(problem.upper, float)
    if free is None:
        free = np.flatnonzero(lo0 < 0)
    free = np.asarray(free, dtype=int)
    smap = SplitMap(problem.n, free)
    P = smap.P
    n = smap.n_split

    r = np.maximum(-lo0[free], up0[free])
    upper = np.concatenate([up0, r])
    upper[free] = r
    lower = np.zeros(n)
    keep = np.setdiff1d(np.arange(problem.n), free)
    lower[keep] = lo0[keep]
    mask = np.concatenate([problem.mask, problem.mask[free]])

    def objective(z):
        fv, gr = problem.objective(P @ z)
        return fv, P.T @ np.asarray(gr, float)

    def wrap(con):
        if con is None:
            return None

        def lifted(z):
            v, J = con(P @ z)
            return v, np.atleast_2d(np.asarray(J, float)) @ P

        return lifted

    linear = None
    if problem.linear is not None:
        A_ub, b_ub, A_eq, b_eq = problem.linear
        linear = (None if A_ub is None else np.atleast_2d(np.asarray(A_ub, float)) @ P, b_ub,
                  None if A_eq is None else np.atleast_2d(np.asarray(A_eq, float)) @ P, b_eq)
    split = SparseProblem(
        n=n,
        objective=objective,
        rho=problem.rho,
        upper=upper,
        lower=lower,
        ineq=wrap(problem.ineq),
        n_ineq=problem.n_ineq,
        eq=wrap(problem.eq),
        n_eq=problem.n_eq,
        mask=mask,
        name=problem.name + "-split",
        convex_restricted=problem.convex_restricted,
        meta={**problem.meta, "split_free": free.tolist()},
        linear=linear,
    )
    return split, smap
