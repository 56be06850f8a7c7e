"""Exact penalty solvers for l0-penalized nonlinear programs."""
from .kernels import BACKEND
from .penalty import PenaltyKind, PenaltySpec

__version__ = "0.1.0"

__all__ = ["BACKEND", "PenaltyKind", "PenaltySpec", "__version__"]
