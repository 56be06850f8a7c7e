"""Sparse logistic regression and sparse-slack SVMs on labelled data.

Both models work on a :class:`ClassificationDataset` of rows ``z_i`` with
labels ``t_i in {-1, +1}``. Logistic regression splits the free weights
into nonnegative halves; the SVM keeps one slack per sample and penalizes
only the slack count.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..penalty import PenaltyKind, PenaltySpec
from ..problem import SparseProblem, SplitMap, split_free_variables


class LibsvmParseError(ValueError):
    """Malformed LIBSVM input; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class ClassificationDataset:
    Z: np.ndarray
    t: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, float))
        t = np.asarray(self.t, float).reshape(-1)
        if t.size != Z.shape[0]:
            raise ValueError("need one label per sample")
        if t.size == 0:
            raise ValueError("dataset has no samples")
        if not np.all(np.isin(t, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "t", t)

    @property
    def m(self) -> int:
        return self.Z.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[1]

    def accuracy(self, scores) -> float:
        """Share of samples whose score has the sign of the label."""
        return float(np.mean(np.where(np.asarray(scores) >= 0, 1.0, -1.0) == self.t))


def parse_libsvm(text: str, name: str = "dataset") -> ClassificationDataset:
    """Dataset from LIBSVM text (``label idx:val ...``, 1-based indices).

    Labels ``{0, 1}`` are mapped to ``{-1, +1}``; any other label set than
    two values out of ``{-1, 0, 1}`` is rejected.
    """
    labels, rows = [], []
    n = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *items = line.split()
        try:
            label = float(head)
        except ValueError:
            raise LibsvmParseError(f"line {lineno}: bad label {head!r}") from None
        row = {}
        last = 0
        for item in items:
            idx, sep, val = item.partition(":")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise LibsvmParseError(f"line {lineno}: bad entry {item!r}") from None
            if not sep or j < 1:
                raise LibsvmParseError(f"line {lineno}: bad entry {item!r}")
            if j <= last:
                raise LibsvmParseError(f"line {lineno}: indices must increase ({j} after {last})")
            last = j
            row[j - 1] = v
        n = max(n, last)
        labels.append(label)
        rows.append(row)
    if not rows:
        raise LibsvmParseError("no samples (m = 0)")
    t = np.asarray(labels)
    values = set(np.unique(t).tolist())
    if values <= {0.0, 1.0}:
        t = np.where(t > 0, 1.0, -1.0)
    elif not values <= {-1.0, 1.0}:
        raise ValueError(f"labels must be binary, found {sorted(values)}")
    Z = np.zeros((len(rows), n))
    for i, row in enumerate(rows):
        for j, v in row.items():
            Z[i, j] = v
    return ClassificationDataset(Z, t, name)


def load_libsvm(path) -> ClassificationDataset:
    path = Path(path)
    return parse_libsvm(path.read_text(), name=path.stem)


def dump_libsvm(data: ClassificationDataset) -> str:
    lines = []
    for z, t in zip(data.Z, data.t):
        items = " ".join(f"{j + 1}:{z[j]:.17g}" for j in np.flatnonzero(z))
        lines.append(f"{int(t):+d} {items}".rstrip())
    return "\n".join(lines) + "\n"


def gen_classification(m: int = 40, n: int = 20, k: int = 3, *, noise: float = 0.1,
                       seed: int = 0) -> ClassificationDataset:
    """Samples labelled by a planted ``k``-sparse linear rule.

    ``t_i = sign(z_i' w + noise * N(0, 1))`` with Gaussian ``z_i``.
    """
    if not 0 < k <= n:
        raise ValueError("need 0 < k <= n")
    if m < 1:
        raise ValueError("need m >= 1")
    rng = np.random.default_rng(seed)
    w = np.zeros(n)
    w[rng.choice(n, size=k, replace=False)] = rng.choice([-1.0, 1.0], k) * rng.uniform(1, 2, k)
    Z = rng.standard_normal((m, n))
    t = np.where(Z @ w + noise * rng.standard_normal(m) >= 0, 1.0, -1.0)
    return ClassificationDataset(Z, t, name=f"synth-m{m}-n{n}-k{k}-s{seed}")


# --- logistic regression ----------------------------------------------------


def _log1pexp(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_loss(data: ClassificationDataset, a) -> tuple[float, np.ndarray]:
    """Mean logistic loss of weights ``a`` and its gradient."""
    margins = data.t * (data.Z @ a)
    val = float(np.mean(_log1pexp(-margins)))
    grad = data.Z.T @ (-data.t * _sigmoid(-margins)) / data.m
    return val, grad


def build_logistic(data: ClassificationDataset, rho: float | None = None, r: float = 10.0,
                   *, rho_scale: float = 0.1) -> tuple[SparseProblem, SplitMap]:
    """Split sparse logistic regression over ``(a+, a-) in [0, r]^2n``.

    ``rho`` defaults to ``rho_scale / m``.
    """
    if not r > 0:
        raise ValueError("box radius r must be positive")
    rho = rho_scale / data.m if rho is None else rho
    n = data.n

    def objective(a):
        return logistic_loss(data, a)

    base = SparseProblem(n=n, objective=objective, rho=rho, upper=np.full(n, r),
                         lower=np.full(n, -r), name=f"logistic-{data.name}",
                         convex_restricted=True, meta={"family": "logistic"})
    return split_free_variables(base)


# --- support vector machine -------------------------------------------------


@dataclass(frozen=True)
class SvmLayout:
    """Index blocks of the split SVM vector ``(c+, gamma+, u, c-, gamma-)``."""

    n: int
    m: int

    @property
    def u(self) -> slice:
        return slice(self.n + 1, self.n + 1 + self.m)

    def weights(self, z) -> tuple[np.ndarray, float]:
        """``(c, gamma)`` of a split point."""
        z = np.asarray(z, float)
        n, off = self.n, self.n + 1 + self.m
        c = z[:n] - z[off : off + n]
        gamma = z[n] - z[off + n]
        return c, float(gamma)


def build_svm(data: ClassificationDataset, rho: float | None = None
              ) -> tuple[SparseProblem, SplitMap, SvmLayout]:
    """Sparse-slack SVM ``min |c|^2/(2m) + rho*||u||_0``.

    Constraints ``u >= 0`` and ``e - t*(Z c - gamma) - u <= 0``; ``c`` and
    ``gamma`` are split into nonnegative halves and only ``u`` is penalized.
    ``rho`` defaults to ``1/m``.
    """
    m, n = data.m, data.n
    rho = 1.0 / m if rho is None else rho
    N = n + 1 + m
    # g = e - t*(Z c - gamma) - u = A v - b
    A = np.hstack([-data.t[:, None] * data.Z, data.t[:, None], -np.eye(m)])
    b = -np.ones(m)

    def objective(v):
        grad = np.zeros(N)
        grad[:n] = v[:n] / m
        return float(v[:n] @ v[:n]) / (2 * m), grad

    def ineq(v):
        return A @ v - b, A

    lower = np.concatenate([np.full(n + 1, -np.inf), np.zeros(m)])
    mask = np.concatenate([np.zeros(n + 1, bool), np.ones(m, bool)])
    base = SparseProblem(n=N, objective=objective, rho=rho, upper=np.inf, lower=lower,
                         ineq=ineq, n_ineq=m, mask=mask, name=f"svm-{data.name}",
                         convex_restricted=True, meta={"family": "svm"},
                         linear=(A, b, None, None))
    split, smap = split_free_variables(base, free=np.arange(n + 1))
    return split, smap, SvmLayout(n, m)


def penalty_for(problem: SparseProblem) -> PenaltySpec:
    """Natural quadratic penalty on the masked coordinates of ``problem``."""
    return PenaltySpec(PenaltyKind.NATURAL_QUADRATIC, problem.rho, problem.n_masked)
