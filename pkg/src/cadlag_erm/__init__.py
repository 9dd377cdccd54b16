"""Empirical risk minimization over cadlag functions of bounded sectional
variation norm, with the supporting entropy and concentration tooling."""

from .basis import FittedFunction, KnotBasis, fit_svn, generate_basis, predict
from .losses import make_loss
from .solver import SieveSchedule, SolveOptions, fit_erm, sieve_radius
from .svn import GridFunction, decompose, svn_exact, synthesize

__version__ = "0.1.0"

__all__ = [
    "FittedFunction",
    "GridFunction",
    "KnotBasis",
    "SieveSchedule",
    "SolveOptions",
    "decompose",
    "fit_erm",
    "fit_svn",
    "generate_basis",
    "make_loss",
    "predict",
    "sieve_radius",
    "svn_exact",
    "synthesize",
]
