"""Dictionary learning with a sparse code.

``min 0.5*||Z - D'C||_F^2 + rho*||C||_0`` over a code ``C`` (l x m) and a
dictionary ``D`` (l x n) whose rows lie in the unit ball. The code is split
as ``C = C+ - C-`` and only the two code blocks are penalized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..penalty import PenaltyKind, PenaltySpec
from ..problem import SparseProblem


@dataclass(frozen=True, eq=False)
class DictionaryInstance:
    Z: np.ndarray
    l: int
    C_true: np.ndarray | None = None
    D_true: np.ndarray | None = None
    rho: float = 0.1
    name: str = "dictionary"

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, float))
        if self.l < 1:
            raise ValueError("dictionary size l must be positive")
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def layout(self) -> "DictionaryLayout":
        return DictionaryLayout(self.n, self.l, self.m)

    def penalty(self) -> PenaltySpec:
        return PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, self.rho, 2 * self.l * self.m)

    def random_start(self, seed: int = 0) -> np.ndarray:
        """Standard normal ``(C+, C-, D)`` projected onto the feasible set."""
        lay = self.layout
        z = np.random.default_rng(seed).standard_normal(lay.size)
        return lay.project(z)

    def to_dict(self) -> dict:
        return {"Z": self.Z.tolist(), "l": int(self.l)}


@dataclass(frozen=True)
class DictionaryLayout:
    """Flat vector ``(C+, C-, D)`` with row-major ``l x m`` code blocks."""

    n: int
    l: int
    m: int

    @property
    def n_code(self) -> int:
        return self.l * self.m

    @property
    def size(self) -> int:
        return 2 * self.n_code + self.l * self.n

    def unpack(self, z):
        k = self.n_code
        Cp = z[:k].reshape(self.l, self.m)
        Cm = z[k : 2 * k].reshape(self.l, self.m)
        D = z[2 * k :].reshape(self.l, self.n)
        return Cp, Cm, D

    def pack(self, Cp, Cm, D) -> np.ndarray:
        return np.concatenate([np.ravel(Cp), np.ravel(Cm), np.ravel(D)])

    def code(self, z) -> np.ndarray:
        Cp, Cm, _ = self.unpack(np.asarray(z, float))
        return Cp - Cm

    def project(self, z) -> np.ndarray:
        """Code blocks clipped at zero, dictionary rows scaled into the unit ball."""
        z = np.array(z, dtype=float)
        k = 2 * self.n_code
        np.maximum(z[:k], 0.0, out=z[:k])
        D = z[k:].reshape(self.l, self.n)
        norms = np.linalg.norm(D, axis=1)
        big = norms > 1.0
        D[big] /= norms[big, None]
        return z


def gen_dictionary(n: int = 10, l: int = 20, m: int = 30, nnz: int = 3, *, seed: int = 0,
                   rho: float = 0.1) -> DictionaryInstance:
    """``Z = D'C`` from a normal dictionary with unit rows and a code with
    ``nnz`` normal entries per column."""
    if not 0 < nnz <= l:
        raise ValueError("need 0 < nnz <= l")
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((l, n))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    C = np.zeros((l, m))
    for j in range(m):
        C[rng.choice(l, size=nnz, replace=False), j] = rng.standard_normal(nnz)
    return DictionaryInstance(D.T @ C, l, C, D, rho=rho, name=f"dictionary-n{n}-l{l}-m{m}-s{seed}")


def dictionary_objective(inst: DictionaryInstance, z) -> tuple[float, np.ndarray]:
    """``0.5*||Z - D'(C+ - C-)||_F^2`` and its gradient in ``(C+, C-, D)``."""
    lay = inst.layout
    Cp, Cm, D = lay.unpack(np.asarray(z, float))
    C = Cp - Cm
    R = D.T @ C - inst.Z  # n x m
    gC = D @ R  # D D'C - D Z
    gD = C @ R.T  # C C'D - C Z'
    return 0.5 * float(np.sum(R * R)), lay.pack(gC, -gC, gD)


def build_dictionary(inst: DictionaryInstance) -> SparseProblem:
    lay = inst.layout
    k = 2 * lay.n_code
    mask = np.zeros(lay.size, bool)
    mask[:k] = True
    lower = np.concatenate([np.zeros(k), np.full(lay.size - k, -1.0)])
    upper = np.concatenate([np.full(k, np.inf), np.ones(lay.size - k)])

    def objective(z):
        return dictionary_objective(inst, z)

    return SparseProblem(n=lay.size, objective=objective, rho=inst.rho, upper=upper,
                         lower=lower, mask=mask, project=lay.project, name=inst.name,
                         meta={"family": "dictionary"})


def dictionary_residual(inst: DictionaryInstance, z) -> float:
    """Projected-gradient residual of the dictionary block."""
    lay = inst.layout
    z = np.asarray(z, float)
    _, g = dictionary_objective(inst, z)
    k = 2 * lay.n_code
    step = z.copy()
    step[k:] -= g[k:]
    return float(np.max(np.abs(lay.project(step)[k:] - z[k:]), initial=0.0))
