"""Exact penalty outer loop.

Each outer iteration solves ``Pen(alpha_k)`` inexactly to tolerance
``eps_k``, then stops once ``eps_k <= delta`` and ``x.y <= delta``;
otherwise ``alpha`` grows geometrically and the next solve is warm started.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .inner import AlmConfig, InnerResult, KKTResiduals, Status, alm_solve, step2_residuals
from .inner import multiplier_free_residuals  # noqa: F401  (re-exported)
from .penalty import PenaltySpec
from .problem import (SparseProblem, build_penalized, l0_objective,
                      support, zero_tolerance)

log = logging.getLogger(__name__)


class Termination(enum.Enum):
    STEP3 = "Step3"
    MAX_OUTER = "MaxOuter"
    INNER_FAILURE = "InnerFailure"


@dataclass(frozen=True)
class Geometric:
    """``eps_k = max(eps0 * factor**k, eps_min)``."""

    eps0: float = 1e-2
    factor: float = 0.5
    eps_min: float = 1e-8

    def __post_init__(self):
        if not (self.eps0 > 0 and 0 < self.factor < 1 and self.eps_min >= 0):
            raise ValueError("geometric schedule needs eps0 > 0, 0 < factor < 1, eps_min >= 0")

    def __call__(self, k: int, alpha: float) -> float:
        return max(self.eps0 * self.factor**k, self.eps_min)


@dataclass(frozen=True)
class Coupled:
    """``eps_k = c / (alpha_k * (k + 1))`` so that ``eps_k * alpha_k -> 0``."""

    c: float = 1e-2

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("coupled schedule needs c > 0")

    def __call__(self, k: int, alpha: float) -> float:
        return self.c / (alpha * (k + 1))


@dataclass(frozen=True)
class OuterConfig:
    alpha0: float = 1.0
    beta: float = 1.1
    delta: float = 1e-6
    schedule: Geometric | Coupled = field(default_factory=Geometric)
    max_outer: int = 300
    retries: int = 1
    multiplier_free: bool = False
    seed: int = 0
    alm: AlmConfig = field(default_factory=AlmConfig)

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.retries < 0:
            raise ValueError("retries must be nonnegative")

    def alpha(self, k: int) -> float:
        return self.alpha0 * self.beta**k


@dataclass
class Iterate:
    k: int
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    nu_x: np.ndarray
    nu_y: np.ndarray
    alpha: float
    eps: float
    residuals: KKTResiduals
    comp: float
    inner_status: Status
    inner_iters: int
    multiplier_free: tuple = (0.0, 0.0)

    @property
    def accepted(self) -> bool:
        return self.inner_status is Status.CONVERGED

    def summary(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "eps": self.eps,
            "comp": self.comp,
            "inner_status": self.inner_status.value,
            "inner_iters": self.inner_iters,
            "residuals": self.residuals.as_dict(),
            "multiplier_free": [float(v) for v in self.multiplier_free],
        }


@dataclass
class SolveReport:
    termination: Termination
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    objective: float
    l0_objective: float
    support: np.ndarray
    comp: float
    residuals: KKTResiduals
    trace: list
    s_residual: float
    biactive: np.ndarray
    wall_time_ms: float = 0.0
    tau0: float = 1e-6
    mask_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def status(self) -> str:
        return self.termination.value

    def to_dict(self, include_time: bool = True) -> dict:
        d = {
            "status": self.status,
            "objective": float(self.objective),
            "l0_objective": float(self.l0_objective),
            "support": [int(i) for i in self.support],
            "comp": float(self.comp),
            "residuals": self.residuals.as_dict(),
            "s_residual": float(self.s_residual),
            "biactive": [int(i) for i in self.biactive],
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
            "lambda": [float(v) for v in self.lam],
            "mu": [float(v) for v in self.mu],
            "trace": [it.summary() for it in self.trace],
        }
        if include_time:
            d["wall_time_ms"] = float(self.wall_time_ms)
        return d


def step3_check(eps_k: float, comp: float, delta: float) -> bool:
    """Termination test of the outer loop: ``eps_k <= delta`` and ``x.y <= delta``."""
    return eps_k <= delta and comp <= delta


def _usable(res: InnerResult) -> bool:
    return bool(np.all(np.isfinite(res.x)) and np.all(np.isfinite(res.y))
                and np.max(np.abs(res.x), initial=0.0) < 1e12)


def solve(problem: SparseProblem, penalty: PenaltySpec, cfg: OuterConfig = OuterConfig(),
          start=None) -> SolveReport:
    """Run the exact penalty method from ``start = (x0, y0)``.

    ``x0`` defaults to the projection of 0 and ``y0`` to the penalty
    minimizer on every masked coordinate. Returns a :class:`SolveReport`
    whose ``termination`` is Step3, MaxOuter or InnerFailure.
    """
    from .stationarity import best_multiplier_residual, biactive

    t0 = time.perf_counter()
    penalty = penalty.with_n(problem.n_masked)
    idx = np.flatnonzero(problem.mask)
    if start is None:
        x0, y0 = None, None
    else:
        x0, y0 = start
    x = problem.project_x(np.zeros(problem.n) if x0 is None else np.asarray(x0, float))
    y = np.full(idx.size, penalty.minimizer) if y0 is None else np.maximum(np.asarray(y0, float), 0.0)
    if y.shape != (idx.size,):
        raise ValueError(f"y0 must have {idx.size} entries")

    trace: list[Iterate] = []
    last: Iterate | None = None
    failures = 0
    termination = Termination.MAX_OUTER
    for k in range(cfg.max_outer):
        alpha = cfg.alpha(k)
        eps = cfg.schedule(k, alpha)
        sub = build_penalized(problem, penalty, alpha)
        res = alm_solve(sub, (x, y), eps, cfg.alm,
                        multipliers=None if last is None else (last.lam, last.mu))
        iters = res.inner_iters
        for _ in range(cfg.retries):
            # an unfinished inner solve resumes from where it stopped
            if not _usable(res) or _accept_result(res, eps, cfg.multiplier_free):
                break
            res = alm_solve(sub, (res.x, res.y), eps, cfg.alm, multipliers=(res.lam, res.mu))
            iters += res.inner_iters
        if not _usable(res):
            log.info("outer %d: inner solve diverged (%s)", k, res.status.value)
            failures += 1
            if failures >= 2:
                termination = Termination.INNER_FAILURE
                break
            continue
        it = Iterate(k=k, x=res.x, y=res.y, lam=res.lam, mu=res.mu, nu_x=res.nu_x,
                     nu_y=res.nu_y, alpha=alpha, eps=eps, residuals=res.residuals,
                     comp=float(res.x[idx] @ res.y), inner_status=res.status,
                     inner_iters=iters, multiplier_free=res.multiplier_free)
        ok = _accept_result(res, eps, cfg.multiplier_free)
        if ok:
            failures = 0
        else:
            it.inner_status = res.status if res.status is not Status.CONVERGED else Status.ITER_LIMIT
            failures += 1
        trace.append(it)
        last = it
        x, y = res.x, res.y
        log.debug("outer %d alpha=%.3g eps=%.3g comp=%.3g status=%s", k, alpha, eps,
                  it.comp, it.inner_status.value)
        if ok and step3_check(eps, it.comp, cfg.delta):
            termination = Termination.STEP3
            break
        if failures >= 2:
            termination = Termination.INNER_FAILURE
            break

    if last is None:
        g, _, h, _ = problem.constraints(x)
        sub = build_penalized(problem, penalty, cfg.alpha0)
        resid = step2_residuals(sub, x, y, np.zeros(g.size), np.zeros(h.size),
                                np.zeros(problem.n), np.zeros(idx.size))
        lam, mu = np.zeros(g.size), np.zeros(h.size)
        comp = float(x[idx] @ y)
    else:
        x, y, lam, mu, resid, comp = last.x, last.y, last.lam, last.mu, last.residuals, last.comp

    tau0 = zero_tolerance(x)
    sres, _, _ = best_multiplier_residual(problem, x, tau0)
    report = SolveReport(
        termination=termination, x=x, y=y, lam=lam, mu=mu,
        objective=float(problem.f(x)), l0_objective=l0_objective(problem, x, tau0),
        support=support(problem, x, tau0), comp=comp, residuals=resid, trace=trace,
        s_residual=float(sres), biactive=biactive(x[idx], y, tau0),
        wall_time_ms=1e3 * (time.perf_counter() - t0), tau0=tau0, mask_idx=idx,
    )
    return report


def _accept_result(res: InnerResult, eps: float, multiplier_free: bool) -> bool:
    """Whether the inner result meets the step-2 tests at ``eps``."""
    r = res.residuals
    if multiplier_free:
        return max(max(res.multiplier_free), r.feas_g, r.feas_h) <= eps
    return res.status is Status.CONVERGED and r.max() <= eps


def off_support_coupling(report: SolveReport) -> list:
    """``max_{i not in I_0(x_final)} alpha_k * y_i^k`` along the trace."""
    idx = report.mask_idx
    off = np.abs(report.x[idx]) > report.tau0
    return [float(np.max(it.alpha * it.y[off], initial=0.0)) for it in report.trace]
