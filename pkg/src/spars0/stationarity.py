"""First- and second-order stationarity diagnostics for sparse problems.

The residuals here drop the rows of coordinates that sit at zero: on the
zero set of ``x`` the gradient of ``f + lam.g + mu.h`` is unrestricted, off
it the gradient must vanish (or point into an active bound).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog, lsq_linear

from .penalty import PenaltySpec
from .problem import PreconditionError, SparseProblem, zero_tolerance

ACTIVE_TOL = 1e-6
RANK_RTOL = 1e-10
CURVATURE_TOL = 1e-10
MFCQ_TOL = 1e-10
SOSC_SAMPLES = 1000


class SoscStatus(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


INDETERMINATE = "indeterminate"


@dataclass
class SPLagrangianEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray | None = None


def sp_lagrangian(problem: SparseProblem, x, lam=None, mu=None, with_hessian=False):
    """Value and gradient (optionally a finite-difference Hessian) of ``f + lam.g + mu.h``."""
    x = np.asarray(x, dtype=float)
    f, _ = problem.objective(x)
    g, _, h, _ = problem.constraints(x)
    value = float(f)
    if g.size and lam is not None:
        value += float(np.asarray(lam, float) @ g)
    if h.size and mu is not None:
        value += float(np.asarray(mu, float) @ h)
    grad = problem.lagrangian_gradient(x, lam, mu)
    hess = lagrangian_hessian(problem, x, lam, mu) if with_hessian else None
    return SPLagrangianEval(value, grad, hess)


def lagrangian_hessian(problem: SparseProblem, x, lam=None, mu=None) -> np.ndarray:
    """Central differences of the analytic Lagrangian gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    base = np.sqrt(np.finfo(float).eps)
    for i in range(n):
        step = base * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = step
        H[:, i] = (problem.lagrangian_gradient(x + e, lam, mu)
                   - problem.lagrangian_gradient(x - e, lam, mu)) / (2.0 * step)
    return 0.5 * (H + H.T)


# --- index sets ---------------------------------------------------------------


def pinned(problem: SparseProblem, x, tau0=None) -> np.ndarray:
    """Boolean mask of the zero set: masked coordinates with ``|x_i| <= tau0``."""
    x = np.asarray(x, dtype=float)
    return problem.mask & (np.abs(x) <= zero_tolerance(x, tau0))


def active_ineq(problem: SparseProblem, x, tau_g: float = ACTIVE_TOL) -> np.ndarray:
    g, _, _, _ = problem.constraints(np.asarray(x, float))
    return np.flatnonzero(g >= -tau_g)


def _bound_sets(problem: SparseProblem, x, free, tau):
    """Free coordinates resting on their upper / lower bound."""
    if problem.project is not None:
        return np.zeros_like(free), np.zeros_like(free)
    at_hi = free & np.isfinite(problem.upper) & (x >= problem.upper - tau)
    at_lo = free & (x <= problem.lower + tau) & ~at_hi
    return at_hi, at_lo


def biactive(x, y, tau0=None) -> np.ndarray:
    """Indices where both ``x_i`` and ``y_i`` vanish."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tau = zero_tolerance(x, tau0)
    return np.flatnonzero((np.abs(x) <= tau) & (np.abs(y) <= tau))


# --- first order ----------------------------------------------------------------


def stationarity_components(problem: SparseProblem, x, lam=None, mu=None, tau0=None) -> dict:
    """The pieces of the S-stationarity residual, each an infinity norm."""
    x = np.asarray(x, dtype=float)
    tau = zero_tolerance(x, tau0)
    g, _, h, _ = problem.constraints(x)
    lam = np.zeros(g.size) if lam is None else np.asarray(lam, float)
    mu = np.zeros(h.size) if mu is None else np.asarray(mu, float)
    gl = problem.lagrangian_gradient(x, lam, mu)
    free = ~pinned(problem, x, tau)
    if problem.project is not None:
        r = np.abs(problem.project(x - gl) - x)
    else:
        at_hi, at_lo = _bound_sets(problem, x, free, tau)
        r = np.abs(gl)
        r = np.where(at_hi, np.maximum(gl, 0.0), r)
        r = np.where(at_lo, np.maximum(-gl, 0.0), r)
        r = np.where(at_hi & at_lo, 0.0, r)
    return {
        "stationarity": float(np.max(r[free], initial=0.0)),
        "feas_h": float(np.max(np.abs(h), initial=0.0)),
        "feas_g": float(np.max(np.maximum(g, 0.0), initial=0.0)),
        "comp_g": float(np.max(np.abs(np.minimum(-g, lam)), initial=0.0)),
        "sign_lambda": float(np.max(np.maximum(-lam, 0.0), initial=0.0)),
    }


def s_residual(problem: SparseProblem, x, lam=None, mu=None, tau0=None) -> float:
    """S-stationarity residual of ``x`` for the given multipliers.

    Zero exactly when the gradient of ``f + lam.g + mu.h`` vanishes off the
    zero set (up to active bound multipliers), ``h = 0``, ``g <= 0``,
    ``lam >= 0`` and ``min(-g, lam) = 0``.
    """
    return max(stationarity_components(problem, x, lam, mu, tau0).values())


def best_multiplier_residual(problem: SparseProblem, x, tau0=None, tau_g=ACTIVE_TOL):
    """Smallest S-stationarity residual over multipliers.

    Solves a bound-constrained least-squares problem in ``(lam on I_g, mu)``
    plus multipliers of active bounds, then evaluates :func:`s_residual` at
    the minimizer. Returns ``(residual, lam, mu)``.
    """
    x = np.asarray(x, dtype=float)
    tau = zero_tolerance(x, tau0)
    g, Jg, h, Jh = problem.constraints(x)
    _, grad_f = problem.objective(x)
    grad_f = np.asarray(grad_f, float)
    free = ~pinned(problem, x, tau)
    act = np.flatnonzero(g >= -tau_g)
    at_hi, at_lo = _bound_sets(problem, x, free, tau)
    rows = np.flatnonzero(free)
    cols = [Jg[act][:, rows].T, Jh[:, rows].T]
    lb = [np.zeros(act.size), np.full(h.size, -np.inf)]
    for sel, sign in ((at_hi, 1.0), (at_lo, -1.0)):
        E = np.zeros((rows.size, int(sel.sum())))
        E[np.searchsorted(rows, np.flatnonzero(sel)), np.arange(E.shape[1])] = sign
        cols.append(E)
        lb.append(np.zeros(E.shape[1]))
    A = np.hstack(cols) if cols else np.zeros((rows.size, 0))
    lb = np.concatenate(lb)
    lam = np.zeros(g.size)
    mu = np.zeros(h.size)
    if A.shape[1] and rows.size:
        b = -grad_f[rows]
        sol = lsq_linear(A, b, bounds=(lb, np.full(lb.size, np.inf)), method="bvls", tol=1e-14)
        w = sol.x
        lam[act] = np.maximum(w[: act.size], 0.0)
        mu = w[act.size : act.size + h.size].copy()
    return s_residual(problem, x, lam, mu, tau), lam, mu


# --- constraint qualifications --------------------------------------------------


def _tight_rows(problem: SparseProblem, x, tau0, tau_g=ACTIVE_TOL):
    """Equality rows (h gradients, pinned unit vectors) and inequality rows
    (active g gradients, active bounds) of the tightened program."""
    x = np.asarray(x, dtype=float)
    n = x.size
    tau = zero_tolerance(x, tau0)
    g, Jg, h, Jh = problem.constraints(x)
    pin = pinned(problem, x, tau)
    I = np.eye(n)
    eq_rows = np.vstack([Jh, I[pin]])
    at_hi, at_lo = _bound_sets(problem, x, ~pin, tau)
    ineq_rows = np.vstack([Jg[g >= -tau_g], I[at_hi], -I[at_lo]])
    return eq_rows, ineq_rows, pin


def _full_row_rank(M: np.ndarray) -> bool:
    if M.shape[0] == 0:
        return True
    if M.shape[0] > M.shape[1]:
        return False
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return False
    return int(np.sum(sv > RANK_RTOL * sv[0])) == M.shape[0]


def check_sp_licq(problem: SparseProblem, x, tau0=None) -> bool:
    """Linear independence of active constraint gradients and pinned unit vectors."""
    eq_rows, ineq_rows, _ = _tight_rows(problem, x, tau0)
    return _full_row_rank(np.vstack([ineq_rows, eq_rows]))


def check_sp_mfcq(problem: SparseProblem, x, tau0=None):
    """Mangasarian-Fromovitz condition for the tightened program.

    Returns ``True``/``False``, or ``"indeterminate"`` when the linear
    program fails.
    """
    eq_rows, ineq_rows, pin = _tight_rows(problem, x, tau0)
    if not _full_row_rank(eq_rows):
        return False
    if ineq_rows.shape[0] == 0:
        return True
    n = eq_rows.shape[1]
    # variables (d, t); maximize t s.t. G d + t <= 0, H d = 0, d = 0 on the zero set
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([ineq_rows, np.ones((ineq_rows.shape[0], 1))])
    b_ub = np.zeros(ineq_rows.shape[0])
    A_eq = np.hstack([eq_rows, np.zeros((eq_rows.shape[0], 1))]) if eq_rows.shape[0] else None
    b_eq = np.zeros(eq_rows.shape[0]) if eq_rows.shape[0] else None
    bounds = [(0.0, 0.0) if p else (-1.0, 1.0) for p in pin] + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    if res.status != 0:
        return INDETERMINATE
    return bool(-res.fun > MFCQ_TOL)


# --- second order -----------------------------------------------------------------


def _critical_rows(problem: SparseProblem, x, lam, mu, tau, tau_g=ACTIVE_TOL):
    x = np.asarray(x, dtype=float)
    n = x.size
    g, Jg, h, Jh = problem.constraints(x)
    lam = np.zeros(g.size) if lam is None else np.asarray(lam, float)
    pin = pinned(problem, x, tau)
    act = g >= -tau_g
    lam_tol = 1e-8 * max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    strong = act & (lam > lam_tol)
    weak = act & ~strong
    I = np.eye(n)
    gl = problem.lagrangian_gradient(x, lam, mu)
    at_hi, at_lo = _bound_sets(problem, x, ~pin, tau)
    hi_strong = at_hi & (gl < -lam_tol)
    lo_strong = at_lo & (gl > lam_tol)
    eq_rows = np.vstack([Jh, Jg[strong], I[pin], I[hi_strong], I[lo_strong]])
    weak_rows = np.vstack([Jg[weak], I[at_hi & ~hi_strong], -I[at_lo & ~lo_strong]])
    return eq_rows, weak_rows


def _critical_curvature(problem, x, lam, mu, tau0):
    x = np.asarray(x, dtype=float)
    tau = zero_tolerance(x, tau0)
    if s_residual(problem, x, lam, mu, tau) > 1e-6:
        raise PreconditionError("second-order check needs an S-stationary point")
    eq_rows, weak_rows = _critical_rows(problem, x, lam, mu, tau)
    Z = null_space(eq_rows) if eq_rows.shape[0] else np.eye(x.size)
    if Z.shape[1] == 0:
        return Z, None, None, weak_rows
    H = lagrangian_hessian(problem, x, lam, mu)
    M = Z.T @ H @ Z
    evals, evecs = np.linalg.eigh(0.5 * (M + M.T))
    return Z, H, (evals, evecs), weak_rows


def check_sp_sosc(problem: SparseProblem, x, lam=None, mu=None, tau0=None, seed=0) -> SoscStatus:
    """Second-order sufficient condition on the critical cone with pinned zeros.

    With only strongly active constraints the cone is a subspace and the
    test is an eigenvalue test. Weakly active constraints turn it into a
    polyhedral cone; then only sampled negative curvature is conclusive.
    """
    Z, H, eig, weak_rows = _critical_curvature(problem, x, lam, mu, tau0)
    if eig is None:
        return SoscStatus.HOLDS
    evals, evecs = eig
    if evals[0] > CURVATURE_TOL:
        return SoscStatus.HOLDS
    if weak_rows.shape[0] == 0:
        return SoscStatus.FAILS if evals[0] < -CURVATURE_TOL else SoscStatus.INCONCLUSIVE
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((Z.shape[1], SOSC_SAMPLES))
    cand = np.hstack([evecs, -evecs, W])
    D = Z @ cand
    norms = np.linalg.norm(D, axis=0)
    ok = np.all(weak_rows @ D <= 1e-12 * norms, axis=0) & (norms > 0)
    curv = np.einsum("ij,ij->j", D, H @ D)
    if np.any(ok & (curv < -CURVATURE_TOL * norms**2)):
        return SoscStatus.FAILS
    return SoscStatus.INCONCLUSIVE


def check_sp_sonc(problem: SparseProblem, x, lam=None, mu=None, tau0=None):
    """Second-order necessary condition on the critical subspace.

    Returns ``None`` when weakly active constraints make the cone polyhedral.
    """
    Z, H, eig, weak_rows = _critical_curvature(problem, x, lam, mu, tau0)
    if eig is None:
        return True
    if weak_rows.shape[0]:
        return None
    return bool(eig[0][0] >= -1e-8)


# --- sequences and the reformulation ------------------------------------------------


def as_trace(problem: SparseProblem, iterates, tau0=None, tol=1e-3):
    """Approximate S-stationarity residuals along ``iterates = [(x, lam, mu), ...]``.

    The zero set is taken from the last iterate. Returns the per-iterate
    residuals and whether the last one is at most ``tol``.
    """
    iterates = list(iterates)
    if not iterates:
        raise ValueError("as_trace needs at least one iterate")
    x_fin = np.asarray(iterates[-1][0], dtype=float)
    free = ~pinned(problem, x_fin, tau0)
    out = []
    for x, lam, mu in iterates:
        x = np.asarray(x, dtype=float)
        g, _, h, _ = problem.constraints(x)
        lam_v = np.zeros(g.size) if lam is None else np.asarray(lam, float)
        gl = problem.lagrangian_gradient(x, lam_v, mu)
        out.append(max(
            float(np.max(np.abs(gl[free]), initial=0.0)),
            float(np.max(np.abs(np.minimum(-g, lam_v)), initial=0.0)),
            float(np.max(np.abs(h), initial=0.0)),
            float(np.max(np.abs(x - x_fin), initial=0.0)),
        ))
    return out, out[-1] <= tol


def reformulation_kkt_residual(problem: SparseProblem, penalty: PenaltySpec, x, y,
                               lam=None, mu=None, tau0=None) -> float:
    """KKT residual of the complementarity reformulation at ``(x, y)``.

    The multipliers of ``x_i y_i = 0`` are chosen explicitly: on the zero set
    ``gamma_i = -grad_i / s`` absorbs the x-gradient, off it
    ``gamma_i = -p'(y_i) / x_i`` absorbs the y-gradient. What remains is the
    gradient off the zero set, ``p'(y_i)`` on it, ``|x_i y_i|`` and the
    feasibility terms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tau = zero_tolerance(x, tau0)
    idx = np.flatnonzero(problem.mask)
    pen = penalty.with_n(idx.size)
    comps = stationarity_components(problem, x, lam, mu, tau)
    gl = problem.lagrangian_gradient(x, lam, mu)
    dp = pen.gradient(y)
    xm = x[idx]
    zero = np.abs(xm) <= tau
    r = [comps["feas_h"], comps["feas_g"], comps["comp_g"], comps["sign_lambda"],
         float(np.max(np.abs(xm * y), initial=0.0)),
         float(np.max(np.maximum(-y, 0.0), initial=0.0))]
    # y stationarity on the zero set (x_i = 0, so gamma cannot help)
    r.append(float(np.max(np.abs(dp[zero]), initial=0.0)))
    # x stationarity off the zero set after gamma absorbs p'(y_i)
    nz = ~zero
    shift = np.zeros(x.size)
    shift[idx[nz]] = -dp[nz] * y[nz] / xm[nz]
    r.append(stationarity_components(_shifted(problem, shift), x, lam, mu, tau)["stationarity"])
    return max(r)


def _shifted(problem: SparseProblem, shift: np.ndarray) -> SparseProblem:
    """Same problem with a constant added to the objective gradient."""
    base = problem.objective

    def objective(x):
        f, grad = base(x)
        return f, np.asarray(grad, float) + shift

    return SparseProblem(n=problem.n, objective=objective, rho=problem.rho, upper=problem.upper,
                         lower=problem.lower, ineq=problem.ineq, n_ineq=problem.n_ineq,
                         eq=problem.eq, n_eq=problem.n_eq, mask=problem.mask,
                         project=problem.project, name=problem.name)
