"""Sparse nonnegative signal recovery under a residual ball.

``min ||x||_0`` s.t. ``||Ax - b||^2 <= eps``, ``x >= 0``, with ``b = A x0 + r``
for a planted ``k``-sparse ``x0`` and ``eps = ||r||^2 (1 + slack)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..penalty import PenaltyKind, PenaltySpec
from ..problem import SparseProblem


@dataclass(frozen=True, eq=False)
class BasisPursuitInstance:
    A: np.ndarray
    b: np.ndarray
    eps: float
    x_true: np.ndarray | None = None
    noise: np.ndarray | None = None
    rho: float = 1.0
    name: str = "basis_pursuit"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, float))
        b = np.asarray(self.b, float).reshape(-1)
        if b.size != A.shape[0]:
            raise ValueError("b must have one entry per row of A")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def residual(self, x) -> float:
        r = self.A @ np.asarray(x, float) - self.b
        return float(r @ r)

    def penalty(self) -> PenaltySpec:
        return PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, self.rho, self.n)

    def start(self) -> tuple[np.ndarray, np.ndarray]:
        """Zero signal with every ``y`` at one."""
        return np.zeros(self.n), np.ones(self.n)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "eps": float(self.eps)}


def gen_basis_pursuit(m: int = 32, n: int = 128, k: int = 4, *, sigma: float | None = None,
                      slack: float = 0.1, seed: int = 0,
                      matrix: str = "gaussian") -> BasisPursuitInstance:
    """Random instance with a planted ``k``-sparse signal.

    ``matrix="gaussian"`` uses standard normal entries with unit-norm
    columns; ``"integer"`` draws ``A`` uniformly from ``{0, ..., 99}``. The
    planted ``x0 >= 0`` has ``k`` entries from ``U(0, 1)`` and the noise is
    Gaussian with standard deviation ``sigma`` (default 0.1 for the gaussian
    matrix, ``sqrt(0.5)`` for the integer one), so
    ``||A x0 - b||^2 = ||r||^2 < eps``.

    The integer matrix has a dominant all-positive direction that makes the
    residual constraint badly conditioned; solves on it take one to two
    orders of magnitude more gradient steps.
    """
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    if m < 1:
        raise ValueError("need m >= 1")
    if not slack > 0:
        raise ValueError("slack must be positive")
    if sigma is None:
        sigma = np.sqrt(0.5) if matrix == "integer" else 0.1
    if not sigma >= 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    if matrix == "integer":
        A = rng.integers(0, 100, size=(m, n)).astype(float)
    elif matrix == "gaussian":
        A = rng.standard_normal((m, n))
        A /= np.linalg.norm(A, axis=0)
    else:
        raise ValueError(f"unknown matrix distribution {matrix!r}")
    x0 = np.zeros(n)
    x0[rng.choice(n, size=k, replace=False)] = rng.uniform(0.0, 1.0, k)
    r = sigma * rng.standard_normal(m)
    b = A @ x0 + r
    eps = max(float(r @ r) * (1.0 + slack), 1e-12)
    return BasisPursuitInstance(A, b, eps, x0, r, name=f"basis_pursuit-m{m}-n{n}-k{k}-s{seed}")


def build_basis_pursuit(inst: BasisPursuitInstance) -> SparseProblem:
    A, b, eps, n = inst.A, inst.b, inst.eps, inst.n

    def objective(x):
        return 0.0, np.zeros(n)

    def ineq(x):
        r = A @ x - b
        return np.array([float(r @ r) - eps]), 2.0 * (r @ A)[None, :]

    return SparseProblem(n=n, objective=objective, rho=inst.rho, upper=np.inf, ineq=ineq,
                         n_ineq=1, name=inst.name, convex_restricted=True,
                         meta={"family": "basis_pursuit"})
