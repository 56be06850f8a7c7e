"""Command-line front end.

Subcommands: ``solve``, ``oracle``, ``diagnose``, ``generate`` and
``bench``. ``solve`` exits with 0 on Step3, 2 on MaxOuter and 3 on
InnerFailure; any input or usage error exits with 1.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .bench import SUITES, BenchSpec, RunConfig, default_threads, run_bench, run_solve, summary_csv

EXIT_CODES = {"Step3": 0, "MaxOuter": 2, "InnerFailure": 3}
GENERATORS = ("portfolio", "basis_pursuit", "dictionary", "logistic", "svm")


class UsageError(Exception):
    pass


def _solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--penalty", choices=["quadratic", "natural", "huber"], default="natural")
    g.add_argument("--rho", type=float, help="sparsity weight (default: the problem's)")
    g.add_argument("--huber-eps", type=float)
    g.add_argument("--alpha0", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--eps0", type=float)
    g.add_argument("--eps-factor", type=float)
    g.add_argument("--eps-min", type=float)
    g.add_argument("--eps-coupled-c", type=float,
                   help="use eps_k = c / (alpha_k (k+1)) instead of the geometric schedule")
    g.add_argument("--max-outer", type=int)
    g.add_argument("--multiplier-free", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, help="worker processes (default: SPARS0_THREADS or 1)")


def _run_config(a) -> RunConfig:
    try:
        return RunConfig(penalty=a.penalty, rho=a.rho, huber_eps=a.huber_eps, alpha0=a.alpha0,
                         beta=a.beta, delta=a.delta, eps0=a.eps0, eps_factor=a.eps_factor,
                         eps_min=a.eps_min, eps_coupled_c=a.eps_coupled_c,
                         max_outer=a.max_outer, multiplier_free=a.multiplier_free, seed=a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _threads(a) -> int:
    if a.threads is not None:
        if a.threads < 1:
            raise UsageError("--threads must be at least 1")
        return a.threads
    try:
        return default_threads()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(doc, out) -> None:
    text = sio.dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands -------------------------------------------------------------------


def cmd_solve(a) -> int:
    cfg = _run_config(a)
    _threads(a)
    loaded = sio.load_problem(a.problem)
    if cfg.penalty == "huber" and cfg.huber_eps is None:
        raise UsageError("--penalty huber needs --huber-eps")
    rep, doc = run_solve(loaded, cfg)
    sio.validate(sio._plain(doc), "report")
    _emit(doc, a.out)
    logging.getLogger(__name__).info("%s: %s, l0 objective %.6g", loaded.name, rep.status,
                                     rep.l0_objective)
    return EXIT_CODES[rep.status]


def cmd_oracle(a) -> int:
    from .oracle import enumerate_supports

    loaded = sio.load_problem(a.problem)
    try:
        res = enumerate_supports(loaded.problem, a.max_n, keep_table=a.table,
                                 skip_dominated=not a.table, seed=a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {"problem": loaded.name, **res.to_dict()}
    if a.table:
        doc["table"] = [{"support": list(s), "value": v, "l0_value": lv, "feasible": f}
                        for s, v, lv, f in res.table_rows()]
    sio.validate(sio._plain(doc), "oracle")
    _emit(doc, a.out)
    return 0


def diagnose_point(problem, x, lam=None, mu=None, tau0=None) -> dict:
    """Stationarity and constraint-qualification report for a point."""
    from . import stationarity as st
    from .problem import PreconditionError, l0_objective, support, zero_tolerance

    tau = zero_tolerance(x, tau0)
    g, _, h, _ = problem.constraints(x)
    best, blam, bmu = st.best_multiplier_residual(problem, x, tau)
    given = lam is not None or mu is not None
    comps = st.stationarity_components(problem, x, lam if given else blam,
                                       mu if given else bmu, tau)
    try:
        sosc = st.check_sp_sosc(problem, x, blam, bmu, tau).value
    except PreconditionError:
        # second-order conditions only make sense at S-stationary points
        sosc = "not_applicable"
    bounds = max(float(np.max(np.maximum(problem.lower - x, 0.0), initial=0.0)),
                 float(np.max(np.maximum(x - problem.upper, 0.0), initial=0.0)))
    return {
        "problem": problem.name,
        "n": problem.n,
        "support": support(problem, x, tau),
        "objective": problem.f(x),
        "l0_objective": l0_objective(problem, x, tau),
        "infeasibility": problem.infeasibility(x),
        "feasibility": {"g": float(np.max(np.maximum(g, 0.0), initial=0.0)),
                        "h": float(np.max(np.abs(h), initial=0.0)), "bounds": bounds},
        "s_residual": max(comps.values()),
        "multipliers_given": given,
        "components": comps,
        "best_multiplier_residual": best,
        "best_lambda": blam,
        "best_mu": bmu,
        "sp_licq": st.check_sp_licq(problem, x, tau),
        "sp_mfcq": st.check_sp_mfcq(problem, x, tau),
        "sp_sosc": sosc,
    }


def cmd_diagnose(a) -> int:
    loaded = sio.load_problem(a.problem)
    pt = sio.load_point(a.point, loaded.problem)
    doc = diagnose_point(loaded.problem, pt.x, pt.lam, pt.mu, a.tau0)
    sio.validate(sio._plain(doc), "diagnose")
    _emit(doc, a.out)
    return 0


def generate_document(family: str, seed: int, sizes: dict, out: Path | None) -> dict:
    """Problem document for a seeded instance; classification data goes to a LIBSVM file."""
    from .apps import basis_pursuit, classification, dictionary, portfolio

    if family == "portfolio":
        inst = portfolio.gen_portfolio(sizes.get("n") or 8, seed)
        payload, name = inst.to_dict(), inst.name
    elif family == "basis_pursuit":
        kw = {k: sizes[k] for k in ("m", "n", "k") if sizes.get(k) is not None}
        inst = basis_pursuit.gen_basis_pursuit(**kw, seed=seed)
        payload, name = inst.to_dict(), inst.name
    elif family == "dictionary":
        kw = {k: sizes[k] for k in ("n", "l", "m", "nnz") if sizes.get(k) is not None}
        inst = dictionary.gen_dictionary(**kw, seed=seed)
        payload, name = inst.to_dict(), inst.name
    else:
        if out is None:
            raise UsageError(f"generate {family} needs --out (the data goes to a LIBSVM file)")
        kw = {k: sizes[k] for k in ("m", "n", "k") if sizes.get(k) is not None}
        data = classification.gen_classification(**kw, seed=seed)
        data_path = out.with_suffix(".libsvm")
        data_path.write_text(classification.dump_libsvm(data))
        payload, name = {"libsvm_path": data_path.name}, data.name
    return sio.problem_document(family, payload, name)


def cmd_generate(a) -> int:
    out = Path(a.out) if a.out else None
    sizes = {"n": a.n, "m": a.m, "k": a.k, "l": a.l, "nnz": a.nnz}
    for key, v in sizes.items():
        if v is not None and v < 0:
            raise UsageError(f"--{key} must be nonnegative")
    try:
        doc = generate_document(a.family, a.seed, sizes, out)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sio.validate(doc, "problem")
    _emit(doc, a.out)
    return 0


def _params(items) -> tuple:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        try:
            out[key] = int(val)
        except ValueError:
            raise UsageError(f"--param {key} must be an integer") from None
    return tuple(sorted(out.items()))


def cmd_bench(a) -> int:
    cfg = _run_config(a)
    threads = _threads(a)
    try:
        spec = BenchSpec(a.suite, a.count, a.seed, _params(a.param), a.oracle)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = run_bench(spec, cfg, threads)
    sio.validate(sio._plain(summary), "bench")
    if a.out:
        prefix = Path(a.out)
        sio.write_json(summary, prefix.with_suffix(".json"))
        prefix.with_suffix(".csv").write_text(summary_csv(summary))
    else:
        sys.stdout.write(summary_csv(summary))
    agg = summary["aggregates"]
    logging.getLogger(__name__).info("%s: %d runs, step3 rate %.2f, match rate %s", a.suite,
                                     agg["count"], agg["step3_rate"], agg["match_rate"])
    return 0 if agg["errors"] < agg["count"] else 1


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spars0", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the exact penalty method on a problem file")
    s.add_argument("--problem", required=True)
    s.add_argument("--out")
    _solver_flags(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("oracle", help="global optimum by support enumeration")
    s.add_argument("--problem", required=True)
    s.add_argument("--out")
    s.add_argument("--max-n", type=int, default=14)
    s.add_argument("--table", action="store_true", help="solve and list every support")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("diagnose", help="stationarity and CQ checks at a point")
    s.add_argument("--problem", required=True)
    s.add_argument("--point", required=True)
    s.add_argument("--tau0", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("generate", help="write a seeded problem file")
    s.add_argument("family", choices=GENERATORS)
    s.add_argument("--seed", type=int, default=0)
    for key in ("n", "m", "k", "l", "nnz"):
        s.add_argument(f"--{key}", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("bench", help="run a seeded suite and write CSV + JSON summaries")
    s.add_argument("suite", choices=sorted(SUITES))
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="instance size, e.g. n=8 (repeatable)")
    s.add_argument("--oracle", action="store_true", help="compare with support enumeration")
    s.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.csv")
    _solver_flags(s)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for MaxOuter
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except (UsageError, sio.InputError, OSError) as exc:
        print(f"spars0 {a.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
