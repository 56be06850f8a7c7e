"""Seeded benchmark suites and per-family solver defaults.

A suite turns a seed into a :class:`~spars0.io.LoadedProblem`; each run is
independent, so suites fan out over a process pool and the rows are sorted
by instance name before they are written.
"""
from __future__ import annotations

import csv
import io as _io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Callable

import numpy as np

from .apps import basis_pursuit, classification, dictionary, portfolio
from .io import LoadedProblem
from .oracle import enumerate_supports
from .outer import Coupled, Geometric, OuterConfig, SolveReport, solve
from .penalty import PenaltyKind, PenaltySpec

MATCH_RTOL = 1e-4
CSV_COLUMNS = ("name", "seed", "n", "status", "l0_objective", "oracle_value", "match", "nnz",
               "comp", "infeasibility", "wall_time", "error")


def family_defaults(loaded: LoadedProblem) -> dict:
    """Outer-loop settings that suit the problem family."""
    fam = loaded.family
    if fam == "portfolio":
        return {"alpha0": loaded.extras["alpha0"], "beta": 1.1}
    if fam == "basis_pursuit":
        return {"alpha0": 1.0, "beta": 1.1}
    if fam in ("dictionary", "logistic"):
        return {"alpha0": 0.1, "beta": 10.0}
    if fam == "svm":
        m = loaded.instance.m
        return {"alpha0": 1.0 / m, "beta": 10.0, "delta": 1e-2}
    return {}


@dataclass
class RunConfig:
    """Solver settings; ``None`` fields fall back to the family defaults."""

    penalty: str = "natural"
    rho: float | None = None
    huber_eps: float | None = None
    alpha0: float | None = None
    beta: float | None = None
    delta: float | None = None
    eps0: float | None = None
    eps_factor: float | None = None
    eps_min: float | None = None
    eps_coupled_c: float | None = None
    max_outer: int | None = None
    multiplier_free: bool = False
    seed: int = 0

    def __post_init__(self):
        PenaltyKind(self.penalty)
        for name in ("alpha0", "rho", "eps0", "eps_coupled_c", "huber_eps"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.beta is not None and not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.eps_factor is not None and not 0 < self.eps_factor < 1:
            raise ValueError("eps_factor must lie in (0, 1)")
        if self.eps_min is not None and self.eps_min < 0:
            raise ValueError("eps_min must be nonnegative")
        if self.max_outer is not None and self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def outer_config(self, loaded: LoadedProblem) -> OuterConfig:
        kw = family_defaults(loaded)
        for name in ("alpha0", "beta", "delta", "max_outer"):
            if getattr(self, name) is not None:
                kw[name] = getattr(self, name)
        if self.eps_coupled_c is not None:
            kw["schedule"] = Coupled(self.eps_coupled_c)
        else:
            base = Geometric()
            kw["schedule"] = Geometric(
                base.eps0 if self.eps0 is None else self.eps0,
                base.factor if self.eps_factor is None else self.eps_factor,
                base.eps_min if self.eps_min is None else self.eps_min)
        return OuterConfig(multiplier_free=self.multiplier_free, seed=self.seed, **kw)

    def penalty_spec(self, loaded: LoadedProblem) -> PenaltySpec:
        rho = loaded.problem.rho if self.rho is None else self.rho
        return PenaltySpec(PenaltyKind(self.penalty), rho, loaded.problem.n_masked,
                           huber_eps=self.huber_eps)


def run_solve(loaded: LoadedProblem, cfg: RunConfig) -> tuple[SolveReport, dict]:
    """Solve and return the report with its JSON document."""
    problem = loaded.problem
    if cfg.rho is not None and cfg.rho != problem.rho:
        problem = replace(problem, rho=cfg.rho)
    outer = cfg.outer_config(loaded)
    rep = solve(problem, cfg.penalty_spec(loaded), outer, start=loaded.start)
    doc = rep.to_dict()
    doc["problem"] = problem.name
    doc["family"] = loaded.family
    doc["config"] = {**cfg.as_dict(), "alpha0": outer.alpha0, "beta": outer.beta,
                     "delta": outer.delta, "max_outer": outer.max_outer}
    if loaded.to_original is not None:
        shrink = loaded.extras.get("shrink")
        z = shrink(rep.x) if shrink is not None else rep.x
        doc["x_original"] = loaded.to_original(z)
    return rep, doc


# --- suites ---------------------------------------------------------------------


def _portfolio(seed, p):
    inst = portfolio.gen_portfolio(int(p.get("n", 8)), seed)
    return LoadedProblem(portfolio.build_portfolio(inst), "portfolio", inst,
                         extras={"alpha0": inst.recommended_alpha0()})


def _basis_pursuit(seed, p):
    inst = basis_pursuit.gen_basis_pursuit(int(p.get("m", 32)), int(p.get("n", 128)),
                                           int(p.get("k", 4)), seed=seed)
    return LoadedProblem(basis_pursuit.build_basis_pursuit(inst), "basis_pursuit", inst,
                         start=inst.start())


def _dictionary(seed, p):
    inst = dictionary.gen_dictionary(int(p.get("n", 10)), int(p.get("l", 20)),
                                     int(p.get("m", 30)), int(p.get("nnz", 3)), seed=seed)
    return LoadedProblem(dictionary.build_dictionary(inst), "dictionary", inst,
                         start=(inst.random_start(seed), None))


def _synth(seed, p):
    return classification.gen_classification(int(p.get("m", 40)), int(p.get("n", 20)),
                                             int(p.get("k", 3)), seed=seed)


def _logistic(seed, p):
    data = _synth(seed, p)
    prob, smap = classification.build_logistic(data)
    return LoadedProblem(prob, "logistic", data, to_original=smap.to_original,
                         extras={"shrink": smap.shrink})


def _svm(seed, p):
    data = _synth(seed, p)
    prob, smap, layout = classification.build_svm(data)
    return LoadedProblem(prob, "svm", data, to_original=smap.to_original,
                         extras={"shrink": smap.shrink, "layout": layout})


SUITES: dict[str, Callable[[int, dict], LoadedProblem]] = {
    "portfolio": _portfolio,
    "basis_pursuit": _basis_pursuit,
    "dictionary": _dictionary,
    "logistic_synth": _logistic,
    "svm_synth": _svm,
}


@dataclass(frozen=True)
class BenchSpec:
    suite: str
    count: int = 10
    seed: int = 0
    params: tuple = ()  # sorted (key, value) pairs
    oracle: bool = False
    oracle_max_n: int = 14

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}; known: {', '.join(SUITES)}")
        if self.count < 1:
            raise ValueError("count must be positive")


def run_instance(spec: BenchSpec, cfg: RunConfig, seed: int) -> dict:
    """One bench row; failures are recorded instead of raised."""
    row = dict.fromkeys(CSV_COLUMNS)
    row.update(name=f"{spec.suite}-{seed:04d}", seed=seed, status="Error", wall_time=0.0)
    t0 = time.perf_counter()
    try:
        loaded = SUITES[spec.suite](seed, dict(spec.params))
        row.update(name=loaded.name, n=loaded.problem.n)
        rep, _ = run_solve(loaded, cfg)
        row.update(status=rep.status, l0_objective=rep.l0_objective, nnz=int(len(rep.support)),
                   comp=rep.comp, infeasibility=loaded.problem.infeasibility(rep.x))
        if spec.oracle and loaded.problem.n_masked <= spec.oracle_max_n:
            o = enumerate_supports(loaded.problem, spec.oracle_max_n, keep_table=False,
                                   skip_dominated=True)
            row["oracle_value"] = o.best_value
            row["match"] = bool(abs(rep.l0_objective - o.best_value)
                                <= MATCH_RTOL * (1 + abs(o.best_value)))
    except Exception as exc:  # noqa: BLE001  (recorded per row)
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["status"] = "Error"
    row["wall_time"] = time.perf_counter() - t0
    return row


def _run_seed(args):
    return run_instance(*args)


def run_bench(spec: BenchSpec, cfg: RunConfig, threads: int = 1) -> dict:
    seeds = [spec.seed + i for i in range(spec.count)]
    jobs = [(spec, cfg, s) for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_seed, jobs))
    else:
        rows = [_run_seed(j) for j in jobs]
    rows.sort(key=lambda r: r["name"])
    ok = [r for r in rows if r["status"] != "Error"]
    matched = [r["match"] for r in rows if r["match"] is not None]
    agg = {
        "count": len(rows),
        "errors": len(rows) - len(ok),
        "step3_rate": sum(r["status"] == "Step3" for r in rows) / len(rows),
        "match_rate": float(np.mean(matched)) if matched else None,
        "mean_time": float(np.mean([r["wall_time"] for r in rows])),
    }
    return {"suite": spec.suite, "config": {**cfg.as_dict(), "count": spec.count,
                                            "seed": spec.seed, "params": dict(spec.params),
                                            "oracle": spec.oracle},
            "rows": rows, "aggregates": agg}


def summary_csv(summary: dict) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in summary["rows"]:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def default_threads() -> int:
    """``SPARS0_THREADS`` or 1."""
    v = os.environ.get("SPARS0_THREADS", "")
    try:
        return max(1, int(v)) if v else 1
    except ValueError:
        raise ValueError(f"SPARS0_THREADS must be an integer, got {v!r}") from None
