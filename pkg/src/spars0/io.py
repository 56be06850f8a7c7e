"""Problem files, point files and deterministic JSON output.

A problem file is ``{"family": ..., "payload": {...}}`` with optional
``"name"`` and ``"rho"``. Families and their payloads:

``portfolio``      ``Q``, ``mean``, ``s``, ``u``
``basis_pursuit``  ``A``, ``b``, ``eps``
``logistic``       ``libsvm_path``, ``r``, ``rho_scale``
``svm``            ``libsvm_path``
``dictionary``     ``Z``, ``l``
``quadratic``      ``H``, ``c`` and optionally ``const``, ``A_ub``, ``b_ub``,
                   ``A_eq``, ``b_eq``, ``lower``, ``upper``
``fixture``        ``fixture`` (a name from ``apps.fixtures.FIXTURES``), ``params``

Relative ``libsvm_path`` entries resolve against the problem file.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .apps import basis_pursuit, classification, dictionary, fixtures, portfolio
from .problem import SparseProblem

FAMILIES = ("portfolio", "basis_pursuit", "logistic", "svm", "dictionary", "quadratic",
            "fixture")
SCHEMAS = ("problem", "point", "report", "diagnose", "oracle", "bench")


class InputError(ValueError):
    """Invalid problem or point input."""


@dataclass
class LoadedProblem:
    """A problem ready to solve plus what is needed to read its solution back."""

    problem: SparseProblem
    family: str
    instance: Any = None
    to_original: Optional[Callable[[np.ndarray], np.ndarray]] = None
    start: Optional[tuple] = None
    extras: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.problem.name


# --- schemas ---------------------------------------------------------------------


@lru_cache(maxsize=None)
def schema(kind: str) -> dict:
    if kind not in SCHEMAS:
        raise KeyError(kind)
    text = resources.files("spars0").joinpath("schemas", f"{kind}.schema.json").read_text()
    return json.loads(text)


def validate(doc, kind: str) -> None:
    """Raise :class:`InputError` when ``doc`` violates the shipped schema."""
    import jsonschema

    try:
        jsonschema.validate(doc, schema(kind))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{kind} schema violation at {where}: {exc.message}") from None


# --- output ------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    """Sorted-key JSON with shortest round-trip floats and a trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from None


# --- problems ------------------------------------------------------------------------


def _arr(payload, key, ndim=None):
    try:
        a = np.asarray(payload[key], dtype=float)
    except KeyError:
        raise InputError(f"payload is missing {key!r}") from None
    except (TypeError, ValueError):
        raise InputError(f"payload entry {key!r} is not numeric") from None
    if ndim is not None and a.ndim != ndim:
        raise InputError(f"payload entry {key!r} must have {ndim} dimension(s)")
    return a


def _opt(payload, key, ndim=None):
    return _arr(payload, key, ndim) if payload.get(key) is not None else None


def problem_from_dict(doc: dict, base_dir=None) -> LoadedProblem:
    """Build the problem described by a parsed problem file."""
    validate(doc, "problem")
    fam = doc["family"]
    pay = doc["payload"]
    rho = doc.get("rho")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        out = _BUILDERS[fam](pay, rho, base_dir)
    except InputError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{fam} payload rejected: {exc}") from None
    if doc.get("name"):
        out.problem = replace(out.problem, name=str(doc["name"]))
    return out


def load_problem(path) -> LoadedProblem:
    path = Path(path)
    return problem_from_dict(read_json(path), base_dir=path.parent)


def _portfolio(pay, rho, base):
    inst = portfolio.PortfolioInstance(_arr(pay, "Q", 2), _arr(pay, "mean", 1), float(pay["s"]),
                                       _arr(pay, "u"), rho=1.0 if rho is None else rho)
    return LoadedProblem(portfolio.build_portfolio(inst), "portfolio", inst,
                         extras={"alpha0": inst.recommended_alpha0()})


def _basis_pursuit(pay, rho, base):
    inst = basis_pursuit.BasisPursuitInstance(_arr(pay, "A", 2), _arr(pay, "b", 1),
                                              float(pay["eps"]), rho=1.0 if rho is None else rho)
    return LoadedProblem(basis_pursuit.build_basis_pursuit(inst), "basis_pursuit", inst,
                         start=inst.start())


def _dataset(pay, base):
    p = Path(pay["libsvm_path"])
    p = p if p.is_absolute() else base / p
    try:
        return classification.load_libsvm(p)
    except OSError as exc:
        raise InputError(f"cannot read {p}: {exc.strerror}") from None


def _logistic(pay, rho, base):
    data = _dataset(pay, base)
    prob, smap = classification.build_logistic(data, rho, float(pay.get("r", 10.0)),
                                               rho_scale=float(pay.get("rho_scale", 0.1)))
    return LoadedProblem(prob, "logistic", data, to_original=smap.to_original,
                         extras={"shrink": smap.shrink})


def _svm(pay, rho, base):
    data = _dataset(pay, base)
    prob, smap, layout = classification.build_svm(data, rho)
    return LoadedProblem(prob, "svm", data, to_original=smap.to_original,
                         extras={"shrink": smap.shrink, "layout": layout})


def _dictionary(pay, rho, base):
    inst = dictionary.DictionaryInstance(_arr(pay, "Z", 2), int(pay["l"]),
                                         rho=0.1 if rho is None else rho)
    return LoadedProblem(dictionary.build_dictionary(inst), "dictionary", inst,
                         start=(inst.random_start(0), None))


def _quadratic(pay, rho, base):
    kw = {k: _opt(pay, k) for k in ("A_ub", "b_ub", "A_eq", "b_eq", "lower")}
    up = _opt(pay, "upper")
    prob = fixtures.quadratic_problem(_arr(pay, "H", 2), _arr(pay, "c", 1),
                                      float(pay.get("const", 0.0)), rho=1.0 if rho is None else rho,
                                      upper=np.inf if up is None else up, **kw)
    return LoadedProblem(prob, "quadratic")


def _fixture(pay, rho, base):
    name = pay["fixture"]
    if name not in fixtures.FIXTURES:
        raise InputError(f"unknown fixture {name!r}; known: {', '.join(sorted(fixtures.FIXTURES))}")
    params = dict(pay.get("params") or {})
    if rho is not None:
        params["rho"] = rho
    return LoadedProblem(fixtures.FIXTURES[name](**params), "fixture")


_BUILDERS = {
    "portfolio": _portfolio,
    "basis_pursuit": _basis_pursuit,
    "logistic": _logistic,
    "svm": _svm,
    "dictionary": _dictionary,
    "quadratic": _quadratic,
    "fixture": _fixture,
}


# --- points ---------------------------------------------------------------------


@dataclass
class Point:
    x: np.ndarray
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None


def point_from_dict(doc: dict, problem: SparseProblem) -> Point:
    """Point file ``{"x": [...], "lambda": [...], "mu": [...]}`` checked against ``problem``."""
    validate(doc, "point")
    x = np.asarray(doc["x"], float)
    if x.shape != (problem.n,):
        raise InputError(f"point has {x.size} entries, problem has n = {problem.n}")
    lam = mu = None
    if doc.get("lambda") is not None:
        lam = np.asarray(doc["lambda"], float)
        if lam.shape != (problem.n_ineq,):
            raise InputError(f"lambda needs {problem.n_ineq} entries")
    if doc.get("mu") is not None:
        mu = np.asarray(doc["mu"], float)
        if mu.shape != (problem.n_eq,):
            raise InputError(f"mu needs {problem.n_eq} entries")
    return Point(x, lam, mu)


def load_point(path, problem: SparseProblem) -> Point:
    return point_from_dict(read_json(path), problem)


# --- writing problems ---------------------------------------------------------------


def problem_document(family: str, payload: dict, name: str | None = None,
                     rho: float | None = None) -> dict:
    doc = {"family": family, "payload": _plain(payload)}
    if name:
        doc["name"] = name
    if rho is not None:
        doc["rho"] = float(rho)
    return doc
