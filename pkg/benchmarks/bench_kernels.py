"""Time the compiled kernels against their NumPy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--sizes 8 64 512] [--repeat 5]

Prints one line per kernel and size with the best-of-``repeat`` time per
call for each backend and the speedup. A final line times one full portfolio
solve under each backend, each in a fresh interpreter because the backend
is fixed at import.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from spars0 import _kernels_py

try:
    from spars0 import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(n: int, rng):
    x = rng.uniform(0, 2, n)
    g = rng.standard_normal(n)
    lo, hi = np.zeros(n), np.full(n, 1.5)
    xn = np.clip(x - 0.1 * g, lo, hi)
    y = rng.uniform(0, 2, n)
    z = np.concatenate([x, y])
    A = rng.standard_normal((max(1, n // 4), n))
    b = rng.standard_normal(A.shape[0])
    gf = rng.standard_normal(2 * n)
    return {
        "project_box": (x - g, lo, hi),
        "pg_residual": (x, g, lo, hi),
        "spg_trial": (x, g, 0.5, lo, hi),
        "spg_accept": (x, xn, g, g + 0.1, lo, hi),
        "penalty_eval": (2, y, 1.0, 0.1),
        "coupled_eval": (1, z, g, 2.0, 1.0, 0.0),
        "affine_al": (A, z, b, A.shape[0] // 2, 10.0, gf),
        "bound_multipliers": (x, g, lo, hi, 1e-8),
    }


def best_time(fn, args, repeat: int) -> float:
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


SOLVE_SNIPPET = """
import time
from spars0.bench import _portfolio, run_solve, RunConfig
loaded = _portfolio(0, {"n": 8})
t0 = time.perf_counter()
run_solve(loaded, RunConfig())
print(time.perf_counter() - t0)
"""


def solve_time(pure: bool) -> float:
    env = dict(os.environ)
    env.pop("SPARS0_PURE_PYTHON", None)
    if pure:
        env["SPARS0_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 64, 512])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-solve", action="store_true", help="skip the end-to-end solve timing")
    a = ap.parse_args(argv)
    if _compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>6}{'python us':>12}{'cython us':>12}{'speedup':>9}")
    for n in a.sizes:
        for name, args in cases(n, rng).items():
            tp = best_time(getattr(_kernels_py, name), args, a.repeat)
            tc = best_time(getattr(_compiled, name), args, a.repeat)
            print(f"{name:<18}{n:>6}{tp * 1e6:>12.2f}{tc * 1e6:>12.2f}{tp / tc:>8.1f}x")
    if not a.no_solve:
        tp, tc = solve_time(True), solve_time(False)
        print(f"{'portfolio solve':<18}{8:>6}{tp * 1e6:>12.0f}{tc * 1e6:>12.0f}{tp / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
