"""Sparse mean-variance portfolios.

``min x'Qx + rho*||x||_0`` s.t. ``e'x = 1``, ``mean'x >= s``, ``0 <= x <= u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..penalty import PenaltyKind, PenaltySpec
from ..problem import SparseProblem


@dataclass(frozen=True, eq=False)
class PortfolioInstance:
    Q: np.ndarray
    mean: np.ndarray
    s: float
    u: np.ndarray
    rho: float = 1.0
    name: str = "portfolio"

    def __post_init__(self):
        Q = np.asarray(self.Q, float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric square matrix")
        if np.linalg.eigvalsh(Q)[0] < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        u = np.broadcast_to(np.asarray(self.u, float), (Q.shape[0],)).copy()
        if np.sum(np.minimum(u, 1.0)) < 1.0:
            raise ValueError("bounds u cannot sum to one")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "mean", np.asarray(self.mean, float))
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])

    def alpha_bound(self) -> float:
        """Largest ``alpha`` keeping the natural-quadratic subproblem strictly convex."""
        return float(np.sqrt(2.0 * self.lambda_min))

    def recommended_alpha0(self, c: float = 0.95) -> float:
        return c * self.alpha_bound()

    def penalty(self) -> PenaltySpec:
        return PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, self.rho, self.n)

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "mean": self.mean.tolist(), "s": float(self.s),
                "u": self.u.tolist()}


def penalized_hessian(Q, alpha: float) -> np.ndarray:
    """``0.5*[[2Q, alpha I], [alpha I, I]]``, the Hessian of the natural-quadratic subproblem
    halved; positive definite exactly when ``alpha**2 < 2*lambda_min(Q)``."""
    Q = np.asarray(Q, float)
    n = Q.shape[0]
    I = np.eye(n)
    return 0.5 * np.block([[2.0 * Q, alpha * I], [alpha * I, I]])


def random_spd(n: int, rng, sigma: float = 0.05) -> np.ndarray:
    B = rng.standard_normal((n, n))
    return B.T @ B + sigma * np.eye(n)


def gen_portfolio(n: int, seed: int, *, rho: float = 1.0, sigma: float = 0.05,
                  return_fraction: float = 0.8, u: float = 1.0,
                  max_tries: int = 100) -> PortfolioInstance:
    """Random instance with ``Q = B'B + sigma*I`` and positive mean returns.

    The minimum return is ``return_fraction`` times the largest mean return,
    which a single asset can reach since ``u = 1``. Draws that fail the
    feasibility checks are replaced from the next substream.
    """
    if n < 2:
        raise ValueError("portfolio needs n >= 2")
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        Q = random_spd(n, rng, sigma)
        mean = rng.uniform(0.5, 1.5, n)
        s = return_fraction * float(np.max(mean))
        try:
            inst = PortfolioInstance(Q, mean, s, np.full(n, u), rho, name=f"portfolio-n{n}-s{seed}")
        except ValueError:
            continue
        if inst.lambda_min > 0 and np.max(mean) >= s:
            return inst
    raise RuntimeError("could not draw a feasible portfolio instance")


def build_portfolio(inst: PortfolioInstance) -> SparseProblem:
    Q, mean, s, n = inst.Q, inst.mean, inst.s, inst.n
    J_ineq = -mean[None, :]
    J_eq = np.ones((1, n))

    def objective(x):
        Qx = Q @ x
        return float(x @ Qx), 2.0 * Qx

    def ineq(x):
        return s + J_ineq @ x, J_ineq

    def eq(x):
        return J_eq @ x - 1.0, J_eq

    return SparseProblem(n=n, objective=objective, rho=inst.rho, upper=inst.u, ineq=ineq,
                         n_ineq=1, eq=eq, n_eq=1, name=inst.name, convex_restricted=True,
                         meta={"family": "portfolio"},
                         linear=(J_ineq, np.array([-s]), J_eq, np.ones(1)))
