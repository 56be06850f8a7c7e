"""Backend selection for the hot elementwise kernels.

The compiled Cython module is used when it was built; otherwise the NumPy
versions are used. Setting ``SPARS0_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("SPARS0_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

project_box = _impl.project_box
pg_residual = _impl.pg_residual
spg_trial = _impl.spg_trial
spg_accept = _impl.spg_accept
penalty_eval = _impl.penalty_eval
coupled_eval = _impl.coupled_eval
# the compiled loop beats NumPy until BLAS takes over on larger matrices
AFFINE_AL_MAX_COMPILED = 16384


def affine_al(A, z, b, m, pen, gf):
    """Shifted-penalty value and gradient of affine constraints ``A z - b``."""
    if A.size > AFFINE_AL_MAX_COMPILED:
        return _kernels_py.affine_al(A, z, b, m, pen, gf)
    return _impl.affine_al(A, z, b, m, pen, gf)


bound_multipliers = _impl.bound_multipliers

__all__ = [
    "BACKEND",
    "project_box",
    "pg_residual",
    "spg_trial",
    "spg_accept",
    "penalty_eval",
    "coupled_eval",
    "affine_al",
    "bound_multipliers",
]
