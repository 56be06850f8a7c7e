"""Separable penalties on the auxiliary variable ``y``.

Each member ``p(y) = sum_i p_i(y_i)`` is convex with a unique minimizer
``s > 0`` and satisfies ``p_i(0) - p_i(s) = rho``, so that
``rho * ||x||_0 <= p(y) - M`` on every complementary pair ``x * y = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels


class PenaltyKind(enum.Enum):
    QUADRATIC_SHIFTED = "quadratic"
    NATURAL_QUADRATIC = "natural"
    HUBER_SHIFTED = "huber"
    SHIFTED_ABS = "abs"


_KERNEL_CODE = {
    PenaltyKind.QUADRATIC_SHIFTED: 0,
    PenaltyKind.NATURAL_QUADRATIC: 1,
    PenaltyKind.HUBER_SHIFTED: 2,
}


class PenaltyDomainError(ValueError):
    """Raised for non-finite arguments or unsupported queries."""


@dataclass(frozen=True)
class PenaltySpec:
    """One member of the penalty family, replicated over ``n`` components.

    Parameters
    ----------
    kind : PenaltyKind
    rho : float
        Sparsity weight; the drop ``p_i(0) - p_i(s)`` equals ``rho``.
    n : int
        Number of components (the number of penalized coordinates).
    huber_eps : float, optional
        Half-width of the quadratic zone for ``HUBER_SHIFTED``.
    """

    kind: PenaltyKind
    rho: float
    n: int
    huber_eps: float | None = None

    def __post_init__(self):
        if not isinstance(self.kind, PenaltyKind):
            object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise PenaltyDomainError(f"rho must be positive and finite, got {self.rho}")
        if self.n < 0:
            raise PenaltyDomainError("n must be nonnegative")
        if self.kind is PenaltyKind.HUBER_SHIFTED:
            if self.huber_eps is None or not self.huber_eps > 0:
                raise PenaltyDomainError("huber penalty needs huber_eps > 0")

    # scalar data -------------------------------------------------------
    @property
    def minimizer(self) -> float:
        if self.kind in (PenaltyKind.QUADRATIC_SHIFTED, PenaltyKind.SHIFTED_ABS):
            return 1.0
        return math.sqrt(2.0 * self.rho)

    @property
    def huber_scale(self) -> float:
        """The factor ``xi`` that restores the unit drop for the Huber member."""
        eps = self.huber_eps
        return self.rho / (eps * math.sqrt(2.0 * self.rho) - 0.5 * eps * eps)

    def component(self, t: float) -> float:
        """Value of a single component ``p_i(t)``."""
        return float(self.elementwise(np.array([t], dtype=float))[0])

    def elementwise(self, t) -> np.ndarray:
        """Per-component values ``p_i(t_i)`` (not summed)."""
        t = _as_finite(t)
        rho = self.rho
        if self.kind is PenaltyKind.QUADRATIC_SHIFTED:
            return rho * t * (t - 2.0)
        if self.kind is PenaltyKind.SHIFTED_ABS:
            return rho * np.abs(t - 1.0)
        d = t - math.sqrt(2.0 * rho)
        if self.kind is PenaltyKind.NATURAL_QUADRATIC:
            return 0.5 * d * d
        eps = self.huber_eps
        out = np.where(
            d > eps,
            eps * (d - eps) + 0.5 * eps * eps,
            np.where(d < -eps, -eps * (d + eps) + 0.5 * eps * eps, 0.5 * d * d),
        )
        return self.huber_scale * out

    def value(self, y, n_check=True) -> float:
        y = _as_finite(y)
        if n_check and y.shape[0] != self.n:
            raise PenaltyDomainError(f"expected {self.n} components, got {y.shape[0]}")
        if self.kind is PenaltyKind.SHIFTED_ABS:
            return float(self.rho * np.sum(np.abs(y - 1.0)))
        val, _ = kernels.penalty_eval(_KERNEL_CODE[self.kind], y, self.rho, self._eps())
        return val

    def gradient(self, y) -> np.ndarray:
        return self.value_and_gradient(y)[1]

    def value_and_gradient(self, y):
        y = _as_finite(y)
        if self.kind is PenaltyKind.SHIFTED_ABS:
            raise PenaltyDomainError("the shifted absolute value has no gradient")
        return kernels.penalty_eval(_KERNEL_CODE[self.kind], y, self.rho, self._eps())

    def second_derivative(self, y) -> np.ndarray:
        """Diagonal of the Hessian (piecewise for the Huber member)."""
        y = _as_finite(y)
        if self.kind is PenaltyKind.QUADRATIC_SHIFTED:
            return np.full_like(y, 2.0 * self.rho)
        if self.kind is PenaltyKind.NATURAL_QUADRATIC:
            return np.ones_like(y)
        if self.kind is PenaltyKind.HUBER_SHIFTED:
            inside = np.abs(y - self.minimizer) <= self.huber_eps
            return np.where(inside, self.huber_scale, 0.0)
        raise PenaltyDomainError("the shifted absolute value has no second derivative")

    def _eps(self) -> float:
        return float(self.huber_eps) if self.huber_eps is not None else 0.0

    # serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "rho": self.rho}
        if self.huber_eps is not None:
            d["huber_eps"] = self.huber_eps
        return d

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "PenaltySpec":
        return cls(PenaltyKind(d["kind"]), float(d["rho"]), n, d.get("huber_eps"))

    def with_n(self, n: int) -> "PenaltySpec":
        return PenaltySpec(self.kind, self.rho, n, self.huber_eps)


def _as_finite(y) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise PenaltyDomainError("penalty argument must be finite")
    return y


def penalty_value(spec: PenaltySpec, y) -> float:
    return spec.value(y)


def penalty_gradient(spec: PenaltySpec, y) -> np.ndarray:
    return spec.gradient(y)


def penalty_minimizer(spec: PenaltySpec):
    """Return ``(s, m, M)``: componentwise minimizers, minimal values, their sum."""
    s = np.full(spec.n, spec.minimizer)
    m_i = spec.component(spec.minimizer)
    m = np.full(spec.n, m_i)
    return s, m, float(m_i * spec.n)


def validate_spec(spec: PenaltySpec, grid_size: int = 2001) -> list[str]:
    """Numerically check the axioms on a one-dimensional grid.

    Returns the list of violated properties; an empty list means valid.
    """
    problems = []
    s = spec.minimizer
    if spec.kind is PenaltyKind.HUBER_SHIFTED:
        eps = spec.huber_eps
        if not eps < math.sqrt(2.0 * spec.rho):
            problems.append("huber_eps must satisfy 0 < eps < sqrt(2*rho)")
        if not eps * math.sqrt(2.0 * spec.rho) - 0.5 * eps * eps > 0:
            problems.append("huber scaling factor is not positive")
            return problems

    p0 = spec.component(0.0)
    ps = spec.component(s)
    if abs(p0 - ps - spec.rho) > 1e-12 * max(1.0, spec.rho):
        problems.append(f"unit drop violated: p(0) - p(s) = {p0 - ps!r} != rho")

    hi = 2.0 * s + 2.0 + (spec.huber_eps or 0.0)
    t = np.linspace(-1.0, hi, grid_size)
    t = t[(np.abs(t - s) > 1e-6) & (np.abs(t) > 1e-6)]
    t = np.unique(np.concatenate([t, [0.0, s]]))
    vals = spec.elementwise(t)
    slopes = np.diff(vals) / np.diff(t)
    scale = max(1.0, float(np.max(np.abs(slopes))))
    if np.any(np.diff(slopes) < -1e-9 * scale):
        problems.append("convexity violated: finite-difference slopes decrease")
    left = t <= s
    right = t >= s
    if np.any(np.diff(vals[left]) >= 0):
        problems.append("minimizer not unique: p not strictly decreasing left of s")
    if np.any(np.diff(vals[right]) <= 0):
        problems.append("minimizer not unique: p not strictly increasing right of s")
    if not s > 0:
        problems.append("minimizer must be positive")
    return problems
