"""Inner solvers for the penalized subproblems.

A spectral projected gradient method (Barzilai-Borwein steps with a
nonmonotone Armijo search) handles the simple constraints. A safeguarded
augmented Lagrangian loop on top of it handles ``g(x) <= 0`` and
``h(x) = 0``.
"""
from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

STEP_MIN = 1e-10
STEP_MAX = 1e10
ARMIJO = 1e-4
UNBOUNDED = -1e30
DIVERGED = 1e12
INFEASIBLE_GAP = 1e-6  # violation that counts as infeasible at the penalty cap


class Status(enum.Enum):
    CONVERGED = "converged"
    ITER_LIMIT = "iter_limit"
    STALLED = "stalled"
    INFEASIBLE = "infeasible"


def project_box(v, lo, hi) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=float)
    lo = np.ascontiguousarray(np.broadcast_to(lo, v.shape), dtype=float)
    hi = np.ascontiguousarray(np.broadcast_to(hi, v.shape), dtype=float)
    if np.any(lo > hi):
        raise ValueError("project_box: lower bound exceeds upper bound")
    return kernels.project_box(v, lo, hi)


def extract_bound_multipliers(x, grad, lo, hi, tau):
    """Bound multipliers read off the gradient at a projected-gradient point.

    Returns ``(nu_lower, nu_upper)``; ``nu_lower_i = max(0, grad_i)`` on
    coordinates within ``tau`` of their lower bound and
    ``nu_upper_i = max(0, -grad_i)`` on those within ``tau`` of the upper one.
    """
    x = np.ascontiguousarray(x, dtype=float)
    grad = np.ascontiguousarray(grad, dtype=float)
    lo = np.ascontiguousarray(np.broadcast_to(lo, x.shape), dtype=float)
    hi = np.ascontiguousarray(np.broadcast_to(hi, x.shape), dtype=float)
    return kernels.bound_multipliers(x, grad, lo, hi, float(tau))


@dataclass
class SpgResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    pg_residual: float
    iters: int
    status: Status
    n_evals: int = 0


def spg_solve(fun, x0, *, bounds=None, project=None, tol=1e-6, max_iter=10000,
              memory=10, step0=None) -> SpgResult:
    """Minimize ``fun`` over a closed convex set by spectral projected gradient.

    ``fun(x)`` returns ``(value, gradient)``. Give either ``bounds=(lo, hi)``
    for a box or a ``project`` callable. Stops when
    ``||P(x - grad) - x||_inf <= tol``.
    """
    if bounds is not None:
        lo = np.ascontiguousarray(bounds[0], dtype=float)
        hi = np.ascontiguousarray(bounds[1], dtype=float)
        proj = lambda v: kernels.project_box(v, lo, hi)
        pg = lambda x, g: kernels.pg_residual(x, g, lo, hi)
        trial = lambda x, g, s: kernels.spg_trial(x, g, s, lo, hi)
        accept = lambda x, xn, g, gn: kernels.spg_accept(x, xn, g, gn, lo, hi)
    elif project is not None:
        proj = project

        def pg(x, g):
            return float(np.max(np.abs(proj(x - g) - x), initial=0.0))

        def trial(x, g, s):
            d = proj(x - s * g) - x
            return d, float(g @ d)

        def accept(x, xn, g, gn):
            s = xn - x
            return (float(s @ (gn - g)), float(s @ s), pg(xn, gn),
                    float(np.max(np.abs(xn), initial=0.0)))
    else:
        raise ValueError("spg_solve needs bounds or a projection")

    x = proj(np.ascontiguousarray(x0, dtype=float))
    f, g = fun(x)
    n_evals = 1
    if not np.isfinite(f):
        return SpgResult(x, f, g, np.inf, 0, Status.STALLED, n_evals)
    hist = deque([f], maxlen=memory)
    r = pg(x, g)
    if step0 is None:
        step = 1.0 / r if r > 0 else 1.0
    else:
        step = step0
    step = min(STEP_MAX, max(STEP_MIN, step))

    it = 0
    status = Status.ITER_LIMIT
    while it < max_iter:
        if r <= tol:
            status = Status.CONVERGED
            # snap onto nearly active bounds when that does not cost objective
            xs = proj(x - g)
            if np.any(xs != x):
                fs, gs = fun(xs)
                n_evals += 1
                rs = pg(xs, gs)
                if np.isfinite(fs) and fs <= f and rs <= tol:
                    x, f, g, r = xs, fs, gs, rs
            break
        it += 1
        d, slope = trial(x, g, step)
        if slope >= 0.0:
            # projected direction lost descent to roundoff
            status = Status.STALLED
            break
        fref = max(hist)
        t = 1.0
        while True:
            xn = x + t * d
            fn, gn = fun(xn)
            n_evals += 1
            if np.isfinite(fn) and fn <= fref + ARMIJO * t * slope:
                break
            if np.isfinite(fn):
                denom = fn - f - t * slope
                tq = -0.5 * t * t * slope / denom if denom > 0 else 0.5 * t
                t = tq if 0.1 * t <= tq <= 0.9 * t else 0.5 * t
            else:
                t *= 0.5
            if t < 1e-16:
                fn = None
                break
        if fn is None:
            status = Status.STALLED
            break
        sy, ss, r, amax = accept(x, xn, g, gn)
        step = STEP_MAX if sy <= 0 else min(STEP_MAX, max(STEP_MIN, ss / sy))
        x, f, g = xn, fn, gn
        hist.append(f)
        if f < UNBOUNDED or amax > DIVERGED:
            status = Status.STALLED
            break
    return SpgResult(x, float(f), g, float(r), it, status, n_evals)


# --- augmented Lagrangian ---------------------------------------------------


@dataclass(frozen=True)
class AlmConfig:
    """Settings of the safeguarded augmented Lagrangian loop."""

    penalty0: float | None = None  # None: scale-based initial penalty
    penalty_growth: float = 10.0
    decrease_ratio: float = 0.5
    penalty_max: float = 1e12
    lambda_max: float = 1e12
    mu_max: float = 1e12
    max_outer: int = 60
    max_inner: int = 5000
    feas_tol: float = 1e-8
    inner_factor: float = 0.1
    inner_floor: float = 1e-10

    def __post_init__(self):
        for name in ("penalty_growth", "penalty_max", "lambda_max", "mu_max",
                     "max_outer", "max_inner", "feas_tol", "inner_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"AlmConfig.{name} must be positive")


@dataclass
class AlmResult:
    z: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    grad_lagrangian: np.ndarray
    pg_residual: float
    infeasibility: float
    complementarity: float
    iters: int
    outer_iters: int
    status: Status


def augmented_lagrangian(fun, constraints, z0, *, bounds=None, project=None,
                         opt_tol=1e-6, feas_tol=1e-8, cfg: AlmConfig = AlmConfig(),
                         lam0=None, mu0=None, affine=None) -> AlmResult:
    """Approximate KKT point of ``min fun(z)`` s.t. ``g(z) <= 0, h(z) = 0, z in set``.

    ``constraints(z)`` returns ``(g, Jg, h, Jh)``; the Jacobians may cover
    only the leading columns of ``z`` (the rest is treated as zero). When
    the constraints are affine, ``affine = (A, b, m)`` with ``(g, h)`` the
    split of ``A z[:k] - b`` after ``m`` rows lets the augmented Lagrangian
    skip ``constraints`` in its inner evaluations. The simple set is given
    by ``bounds`` or ``project`` as in :func:`spg_solve`. The returned
    multipliers are the first-order updates, so ``grad_lagrangian`` equals
    the gradient of the final augmented Lagrangian.
    """
    spg_kw = {"bounds": bounds} if bounds is not None else {"project": project}
    if bounds is not None:
        proj = lambda v: kernels.project_box(np.ascontiguousarray(v, float), bounds[0], bounds[1])
    else:
        proj = project
    z = proj(np.ascontiguousarray(z0, dtype=float))
    g, Jg, h, Jh = constraints(z)
    m, p = g.size, h.size
    inner_tol = max(cfg.inner_factor * opt_tol, cfg.inner_floor)

    if m == 0 and p == 0:
        res = spg_solve(fun, z, tol=inner_tol, max_iter=cfg.max_inner, **spg_kw)
        return AlmResult(res.x, np.zeros(0), np.zeros(0), res.grad, res.pg_residual,
                         0.0, 0.0, res.iters, 0, res.status)

    # each constraint is divided by the largest entry of its gradient at the
    # start (at least 1); the loop below runs on the scaled constraints and
    # reports multipliers and feasibility in the original units
    w_g = 1.0 / np.maximum(1.0, np.max(np.abs(Jg), axis=1, initial=0.0))
    w_h = 1.0 / np.maximum(1.0, np.max(np.abs(Jh), axis=1, initial=0.0))

    def scaled(zz):
        gv, Jgv, hv, Jhv = constraints(zz)
        return w_g * gv, w_g[:, None] * Jgv, w_h * hv, w_h[:, None] * Jhv

    lam = np.zeros(m) if lam0 is None else np.clip(np.asarray(lam0, float), 0.0, cfg.lambda_max)
    mu = np.zeros(p) if mu0 is None else np.clip(np.asarray(mu0, float), -cfg.mu_max, cfg.mu_max)
    lam, mu = lam / w_g, mu / w_h
    f0, _ = fun(z)
    if cfg.penalty0 is not None:
        pen = cfg.penalty0
    else:
        hs, gs = w_h * h, w_g * g
        c2 = 0.5 * (float(hs @ hs) + float(np.sum(np.maximum(gs, 0.0) ** 2)))
        pen = max(1e-8, min(10.0 * max(1.0, abs(f0)) / max(1.0, c2), 1e8))

    def make_affine_lagrangian(lam_bar, mu_bar, pen):
        w = np.concatenate([w_g, w_h])
        A = np.ascontiguousarray(w[:, None] * affine[0], dtype=float)
        b_s = w * affine[1] - np.concatenate([lam_bar, mu_bar]) / pen

        def L(zz):
            fv, gf = fun(zz)
            v, grad = kernels.affine_al(A, zz, b_s, m, pen, np.ascontiguousarray(gf, dtype=float))
            return float(fv + v), grad
        return L

    def make_lagrangian(lam_bar, mu_bar, pen):
        if affine is not None:
            return make_affine_lagrangian(lam_bar, mu_bar, pen)
        mu_s = mu_bar / pen
        lam_s = lam_bar / pen

        def L(zz):
            fv, gf = fun(zz)
            gv, Jgv, hv, Jhv = scaled(zz)
            sh = hv + mu_s
            sg = np.maximum(gv + lam_s, 0.0)
            val = fv + 0.5 * pen * (sh @ sh + sg @ sg)
            grad = np.array(gf, dtype=float)
            if m:
                grad[: Jgv.shape[1]] += (pen * sg) @ Jgv
            if p:
                grad[: Jhv.shape[1]] += (pen * sh) @ Jhv
            return float(val), grad
        return L

    total = 0
    prev_v = np.inf
    status = Status.ITER_LIMIT
    lam_bar, mu_bar = lam.copy(), mu.copy()
    res = None
    stuck = None
    for outer in range(1, cfg.max_outer + 1):
        L = make_lagrangian(lam_bar, mu_bar, pen)
        res = spg_solve(L, z, tol=inner_tol, max_iter=cfg.max_inner, **spg_kw)
        total += res.iters
        z = res.x
        gs, Jgs, hs, Jhs = scaled(z)
        lam = np.maximum(lam_bar + pen * gs, 0.0)
        mu = mu_bar + pen * hs
        g, h = gs / w_g, hs / w_h
        feas = max(np.max(np.abs(h), initial=0.0), np.max(np.maximum(g, 0.0), initial=0.0))
        compl = np.max(np.abs(np.minimum(-g, w_g * lam)), initial=0.0)
        stat = res.pg_residual
        log.debug("alm %d: pen=%.3g feas=%.3g compl=%.3g pg=%.3g spg=%s/%d", outer, pen, feas,
                  compl, stat, res.status.value, res.iters)
        if (res.status is Status.CONVERGED or stat <= opt_tol) and feas <= feas_tol \
                and compl <= opt_tol:
            status = Status.CONVERGED
            break
        if res.status is Status.STALLED and not np.isfinite(res.f):
            status = Status.STALLED
            break
        v = max(np.max(np.abs(h), initial=0.0),
                np.max(np.abs(np.minimum(-g, w_g * lam_bar / pen)), initial=0.0))
        if feas > feas_tol and _stationary_infeasible(z, gs, Jgs, hs, Jhs, proj, feas):
            if pen >= 1e6:
                status = Status.INFEASIBLE
                break
        if res.status is Status.ITER_LIMIT:
            # two capped SPG runs without progress: the subproblem sits near a
            # saddle of the augmented Lagrangian and a larger penalty only
            # worsens its conditioning
            if stuck is not None and stat > 0.5 * stuck:
                status = Status.ITER_LIMIT
                break
            stuck = stat
        else:
            stuck = None
        if v > feas_tol and (v > cfg.decrease_ratio * prev_v
                             or feas > 1e3 * feas_tol and v > 0.9 * prev_v):
            pen *= cfg.penalty_growth
        if pen > cfg.penalty_max:
            status = Status.INFEASIBLE if feas > INFEASIBLE_GAP else Status.ITER_LIMIT
            break
        prev_v = v
        lam_bar = np.clip(lam, 0.0, cfg.lambda_max)
        mu_bar = np.clip(mu, -cfg.mu_max, cfg.mu_max)
    else:
        outer = cfg.max_outer

    # the final augmented-Lagrangian gradient is the Lagrangian gradient at the
    # updated multipliers
    grad_l = res.grad
    lam, mu = w_g * lam, w_h * mu
    feas = max(np.max(np.abs(h), initial=0.0), np.max(np.maximum(g, 0.0), initial=0.0))
    compl = np.max(np.abs(np.minimum(-g, lam)), initial=0.0)
    return AlmResult(z, lam, mu, grad_l, res.pg_residual, float(feas), float(compl),
                     total, outer, status)


def _stationary_infeasible(z, g, Jg, h, Jh, proj, feas) -> bool:
    """True when ``z`` is (nearly) stationary for the infeasibility measure."""
    grad = np.zeros_like(z)
    grad[: Jh.shape[1]] += Jh.T @ h
    grad[: Jg.shape[1]] += Jg.T @ np.maximum(g, 0.0)
    scale = max(np.linalg.norm(grad, np.inf), 1e-300)
    r = float(np.max(np.abs(proj(z - grad / scale) - z), initial=0.0))
    return r <= 1e-6 and feas > 1e-4


# --- penalized subproblem ---------------------------------------------------


@dataclass
class KKTResiduals:
    """The six step-2 residuals (infinity norms) of the penalized subproblem."""

    stat_x: float
    stat_y: float
    feas_g: float
    feas_h: float
    comp_x: float
    comp_y: float

    def max(self) -> float:
        return max(self.stat_x, self.stat_y, self.feas_g, self.feas_h, self.comp_x, self.comp_y)

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("stat_x", "stat_y", "feas_g", "feas_h", "comp_x", "comp_y")}


@dataclass
class InnerResult:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    nu_x: np.ndarray
    nu_y: np.ndarray
    pg_residual: float
    inner_iters: int
    status: Status
    residuals: KKTResiduals
    nu_x_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multiplier_free: tuple = (0.0, 0.0)
    feasibility: float = 0.0


def step2_residuals(sub, x, y, lam, mu, nu_x, nu_y, nu_x_upper=None) -> KKTResiduals:
    """Residuals of the six inexact-KKT tests for ``Pen(alpha)``.

    For problems with a non-box simple set the ``x`` stationarity entry is
    the projected-gradient residual and ``comp_x`` covers only the masked
    lower bounds.
    """
    base = sub.base
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    idx = sub._idx
    g, _, h, _ = base.constraints(x)
    gl = base.lagrangian_gradient(x, lam, mu)
    gl[idx] += sub.alpha * y
    gy = sub.penalty.gradient(y) + sub.alpha * x[idx]
    nu_x = np.asarray(nu_x, float)
    nu_y = np.asarray(nu_y, float)
    nu_up = np.zeros_like(x) if nu_x_upper is None or np.size(nu_x_upper) == 0 \
        else np.asarray(nu_x_upper, float)
    if base.project is None:
        stat_x = np.max(np.abs(gl - nu_x + nu_up), initial=0.0)
        comp_x = np.max(np.minimum(x - base.lower, nu_x), initial=0.0)
        comp_x = max(comp_x, np.max(np.minimum(base.upper - x, nu_up), initial=0.0))
    else:
        stat_x = np.max(np.abs(base.project(x - gl) - x), initial=0.0)
        comp_x = 0.0
    stat_y = np.max(np.abs(gy - nu_y), initial=0.0)
    comp_y = np.max(np.minimum(y, nu_y), initial=0.0)
    feas_g = np.max(np.abs(np.minimum(-g, lam)), initial=0.0) if g.size else 0.0
    feas_h = np.max(np.abs(h), initial=0.0) if h.size else 0.0
    return KKTResiduals(float(stat_x), float(stat_y), float(feas_g), float(feas_h),
                        float(max(comp_x, 0.0)), float(max(comp_y, 0.0)))


def multiplier_free_residuals(sub, x, y, lam=None, mu=None):
    """Projection residuals that replace the two stationarity tests when no
    bound multipliers are available."""
    base = sub.base
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    gl = base.lagrangian_gradient(x, lam, mu)
    gl[sub._idx] += sub.alpha * y
    r_x = np.max(np.abs(base.project_x(x - gl) - x), initial=0.0)
    gy = sub.penalty.gradient(y) + sub.alpha * x[sub._idx]
    r_y = np.max(np.abs(np.maximum(y - gy, 0.0) - y), initial=0.0)
    return float(r_x), float(r_y)


def alm_solve(sub, start, eps_k: float, cfg: AlmConfig = AlmConfig(),
              multipliers=None) -> InnerResult:
    """Inexact KKT point of ``Pen(alpha)`` meeting the step-2 tests at ``eps_k``.

    ``start`` is ``(x0, y0)`` and ``multipliers`` an optional ``(lam0, mu0)``
    warm start. Without ``g``/``h`` the augmented Lagrangian layer is
    bypassed and the spectral gradient method runs alone.
    """
    if not eps_k > 0:
        raise ValueError("eps_k must be positive")
    x0, y0 = start
    z0 = sub.join(x0, y0)
    base = sub.base
    kw = {"bounds": (sub.lower, sub.upper)} if base.project is None else {"project": sub.project}
    feas_tol = min(eps_k, cfg.feas_tol)
    lam0, mu0 = (None, None) if multipliers is None else multipliers
    ar = augmented_lagrangian(sub.value_and_gradient, sub.constraints, z0,
                              opt_tol=eps_k, feas_tol=feas_tol, cfg=cfg, lam0=lam0, mu0=mu0,
                              affine=base.affine_blocks(), **kw)
    x, y = sub.split(ar.z)
    tau = max(cfg.inner_factor * eps_k, cfg.inner_floor)
    grad = ar.grad_lagrangian
    if base.project is None:
        nu_lo, nu_hi = extract_bound_multipliers(ar.z, grad, sub.lower, sub.upper, tau)
        nu_x, nu_x_up, nu_y = nu_lo[: sub.n], nu_hi[: sub.n], nu_lo[sub.n :]
    else:
        gy = grad[sub.n :]
        nu_y = np.where((y <= tau) & (gy > 0), gy, 0.0)
        nu_x, nu_x_up = np.zeros(sub.n), np.zeros(sub.n)
    resid = step2_residuals(sub, x, y, ar.lam, ar.mu, nu_x, nu_y, nu_x_up)
    mf = multiplier_free_residuals(sub, x, y, ar.lam, ar.mu)
    status = ar.status
    if status is Status.CONVERGED and resid.max() > eps_k:
        log.debug("alm: residual %.3g above eps %.3g after convergence", resid.max(), eps_k)
        status = Status.ITER_LIMIT
    return InnerResult(x=x, y=y, lam=ar.lam, mu=ar.mu, nu_x=nu_x, nu_y=nu_y,
                       pg_residual=ar.pg_residual, inner_iters=ar.iters, status=status,
                       residuals=resid, nu_x_upper=nu_x_up, multiplier_free=mf,
                       feasibility=ar.infeasibility)
