"""Global certification by support enumeration.

For every support ``S`` of the penalized coordinates the smooth problem
with ``x_i = 0`` off ``S`` is solved; the best ``f + rho*|S|`` over all
supports is the global value whenever the restricted problems are convex.
"""
from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .inner import AlmConfig, Status, augmented_lagrangian, spg_solve
from .problem import SparseProblem

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
TIE_TOL = 1e-9


class RestrictedStatus(enum.Enum):
    SOLVED = "solved"
    INFEASIBLE = "infeasible"


@dataclass
class RestrictedResult:
    support: tuple
    status: RestrictedStatus
    value: float  # restricted minimum of f (inf when infeasible)
    x: np.ndarray
    starts: int = 0

    @property
    def feasible(self) -> bool:
        return self.status is RestrictedStatus.SOLVED


@dataclass
class OracleResult:
    best_support: tuple
    best_x: np.ndarray
    best_value: float
    table: list = field(default_factory=list)
    enumerated_count: int = 0

    def to_dict(self) -> dict:
        return {
            "best_support": [int(i) for i in self.best_support],
            "best_x": [float(v) for v in self.best_x],
            "best_value": float(self.best_value),
            "enumerated_count": int(self.enumerated_count),
        }

    def table_rows(self):
        """``(support, value, l0_value, feasible)`` per enumerated support."""
        for r, rho_term in self.table:
            yield (r.support, r.value, r.value + rho_term, r.feasible)


def _starts(lo, hi, rng):
    zero = np.clip(np.zeros_like(lo), lo, hi)
    finite_lo = np.where(np.isfinite(lo), lo, 0.0)
    width = np.where(np.isfinite(hi), hi - finite_lo, 1.0)
    rand = finite_lo + rng.random(lo.size) * width
    centre = np.where(np.isfinite(hi), finite_lo + 0.5 * width, finite_lo + 1.0)
    return [zero, np.clip(rand, lo, hi), np.clip(centre, lo, hi)]


def restricted_solve(problem: SparseProblem, supp, *, seed: int = 0, tol: float = 1e-7,
                     cfg: AlmConfig | None = None, multistart: bool | None = None):
    """Minimize ``f`` over the feasible set with ``x_i = 0`` for masked ``i`` outside ``supp``.

    Tries up to three starts (the projected origin, a seeded random point,
    the box centre) and keeps the best feasible result. Box-constrained
    problems go to scipy's SLSQP first; starts where it fails, and problems
    with a custom projection, fall back to a feasibility phase followed by
    the augmented Lagrangian solver. ``multistart`` defaults to ``not
    problem.convex_restricted``: a convex restricted problem stops after the
    first feasible start.
    """
    supp = tuple(sorted(int(i) for i in supp))
    if multistart is None:
        multistart = not problem.convex_restricted
    cfg = cfg or AlmConfig(max_inner=5000, max_outer=40)
    masked = np.flatnonzero(problem.mask)
    off = np.setdiff1d(masked, supp)
    keep = np.setdiff1d(np.arange(problem.n), off)  # free variables of the restricted problem
    n = problem.n

    def embed(z):
        x = np.zeros(n)
        x[keep] = z
        return x

    if problem.project is None:
        lo, hi = problem.lower[keep], problem.upper[keep]
        kw = {"bounds": (np.ascontiguousarray(lo), np.ascontiguousarray(hi))}
    else:
        lo, hi = np.full(keep.size, -np.inf), np.full(keep.size, np.inf)
        kw = {"project": lambda z: problem.project(embed(z))[keep]}

    def fun(z):
        f, g = problem.objective(embed(z))
        return f, np.asarray(g, float)[keep]

    def cons(z):
        g, Jg, h, Jh = problem.constraints(embed(z))
        return g, Jg[:, keep], h, Jh[:, keep]

    if keep.size == 0:
        x = np.zeros(n)
        if problem.infeasibility(x) > FEAS_TOL:
            return RestrictedResult(supp, RestrictedStatus.INFEASIBLE, np.inf, x, 0)
        return RestrictedResult(supp, RestrictedStatus.SOLVED, float(problem.f(x)), x, 0)

    if problem.linear is not None and problem.project is None \
            and not _affine_feasible(problem, keep, lo, hi):
        return RestrictedResult(supp, RestrictedStatus.INFEASIBLE, np.inf, np.zeros(n), 0)

    def violation(z):
        g, Jg, h, Jh = cons(z)
        gp = np.maximum(g, 0.0)
        return 0.5 * (float(h @ h) + float(gp @ gp)), Jh.T @ h + Jg.T @ gp

    rng = np.random.default_rng([seed, len(supp)] + list(supp))
    best = None
    used = 0
    for z0 in _starts(lo, hi, rng):
        used += 1
        if problem.project is None:
            z = _sqp(fun, cons, z0, lo, hi, tol)
            if z is not None and problem.infeasibility(embed(z)) <= FEAS_TOL:
                x = embed(z)
                val = float(problem.f(x))
                if best is None or val < best[0]:
                    best = (val, x)
                if not multistart:
                    break
                continue
        # phase 1: a stationary point of the violation that is still infeasible
        # rules the start out without the slow penalty growth of the ALM
        ph1 = spg_solve(violation, z0, tol=1e-9, max_iter=2000, **kw)
        if problem.infeasibility(embed(ph1.x)) > FEAS_TOL:
            if ph1.status is Status.CONVERGED:
                if problem.convex_restricted:
                    # a stationary point of a convex violation is its minimum
                    break
                continue
        else:
            z0 = ph1.x
        res = augmented_lagrangian(fun, cons, z0, opt_tol=tol, feas_tol=1e-9, cfg=cfg, **kw)
        x = embed(res.z)
        feas = problem.infeasibility(x)
        if res.status is Status.INFEASIBLE or feas > FEAS_TOL:
            continue
        val = float(problem.f(x))
        if best is None or val < best[0]:
            best = (val, x)
        if not multistart:
            break
    if best is None:
        log.debug("restricted problem on support %s looks infeasible", supp)
        return RestrictedResult(supp, RestrictedStatus.INFEASIBLE, np.inf, np.zeros(n), used)
    return RestrictedResult(supp, RestrictedStatus.SOLVED, best[0], best[1], used)


def _affine_feasible(problem: SparseProblem, keep, lo, hi) -> bool:
    """Exact feasibility test of affine constraints by a zero-objective LP."""
    A, b, m = problem.affine_blocks()
    A = A[:, keep]
    res = linprog(np.zeros(keep.size), A_ub=A[:m] if m else None, b_ub=b[:m] if m else None,
                  A_eq=A[m:] if A.shape[0] > m else None, b_eq=b[m:] if A.shape[0] > m else None,
                  bounds=list(zip(np.where(np.isfinite(lo), lo, None),
                                  np.where(np.isfinite(hi), hi, None))),
                  method="highs")
    # status 2 is a proof of infeasibility; anything else goes to the solvers
    return res.status != 2


def _sqp(fun, cons, z0, lo, hi, tol):
    """Sequential quadratic programming on a box; None when it fails."""
    g0, _, h0, _ = cons(z0)
    constraints = []
    if g0.size:
        constraints.append({"type": "ineq", "fun": lambda z: -cons(z)[0],
                            "jac": lambda z: -cons(z)[1]})
    if h0.size:
        constraints.append({"type": "eq", "fun": lambda z: cons(z)[2],
                            "jac": lambda z: cons(z)[3]})
    bounds = [(a if np.isfinite(a) else None, b if np.isfinite(b) else None)
              for a, b in zip(lo, hi)]
    try:
        res = minimize(fun, z0, jac=True, method="SLSQP", bounds=bounds,
                       constraints=constraints, options={"ftol": tol * 1e-3, "maxiter": 500})
    except (ValueError, np.linalg.LinAlgError):
        return None
    # status 8 means the line search can no longer improve, which SLSQP also
    # reports at a solution resolved to machine precision; feasibility is
    # checked by the caller
    if res.status not in (0, 8) or not np.all(np.isfinite(res.x)):
        return None
    return np.clip(res.x, lo, hi)


def _better(val, supp, best_val, best_supp) -> bool:
    if best_supp is None:
        return True
    if val < best_val - TIE_TOL:
        return True
    if abs(val - best_val) <= TIE_TOL:
        return (len(supp), supp) < (len(best_supp), best_supp)
    return False


def enumerate_supports(problem: SparseProblem, max_n: int = 14, *, seed: int = 0,
                       keep_table: bool = True, skip_dominated: bool = False,
                       **kw) -> OracleResult:
    """Global minimum of ``f + rho*||x||_0`` by trying every support.

    Ties within 1e-9 go to the smaller support, then the lexicographically
    smaller one. Refuses problems with more than ``max_n`` penalized
    coordinates.

    With ``skip_dominated`` the full support is solved first; its value
    bounds every restricted minimum from below, so supports of size ``k``
    with ``f_full + rho*k`` at or above the incumbent cannot win and are
    not solved. The result is unchanged; only the table gets shorter.
    """
    masked = [int(i) for i in np.flatnonzero(problem.mask)]
    if len(masked) > max_n:
        raise ValueError(f"support enumeration refused: {len(masked)} > max_n={max_n} "
                         "penalized coordinates")
    best_val, best_supp, best_x = np.inf, None, None
    table = []
    count = 0
    floor = -np.inf
    full = None
    if skip_dominated:
        full = restricted_solve(problem, tuple(masked), seed=seed, **kw)
        if not full.feasible:
            raise ValueError("no feasible support found")
        floor = full.value
    for size in range(len(masked) + 1):
        if floor + problem.rho * size >= best_val - TIE_TOL:
            break
        for supp in itertools.combinations(masked, size):
            count += 1
            if full is not None and size == len(masked):
                r = full
            else:
                r = restricted_solve(problem, supp, seed=seed, **kw)
            rho_term = problem.rho * size
            if keep_table:
                table.append((r, rho_term))
            if not r.feasible:
                continue
            val = r.value + rho_term
            if _better(val, supp, best_val, best_supp):
                best_val, best_supp, best_x = val, supp, r.x
    if best_supp is None:
        raise ValueError("no feasible support found")
    return OracleResult(best_supp, best_x, float(best_val), table, count)


def gradient_check(fun, x, h: float = 1e-6) -> float:
    """Largest ``|g_i - fd_i| / (1 + |fd_i|)`` against central differences.

    ``fun(x)`` returns ``(value, gradient)``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    _, g = fun(x)
    g = np.asarray(g, float).reshape(-1)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        fd = (fun(x + e)[0] - fun(x - e)[0]) / (2.0 * h)
        worst = max(worst, abs(g[i] - fd) / (1.0 + abs(fd)))
    return float(worst)
