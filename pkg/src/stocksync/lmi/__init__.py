"""Linear-matrix-inequality toolbox.

A small modeling layer (:mod:`~stocksync.lmi.algebra`), a compiler to
standard conic form with interior-point/first-order backends
(:mod:`~stocksync.lmi.problem`), and the dissipativity-specific
constructions built on top (:mod:`~stocksync.lmi.dissipativity`).
"""

from .algebra import AffineMatrixExpr, AffineScalarExpr, LmiVariable, smat, svec
from .problem import LmiProblem, SolveOptions, SolveResult, dump_conic, solve
from .dissipativity import (
    SupplyRate,
    check_xeid_lti,
    dissipativate_local,
    synthesize_interconnection,
    trajectory_dissipativity_check,
)

__all__ = [
    "AffineMatrixExpr",
    "AffineScalarExpr",
    "LmiVariable",
    "svec",
    "smat",
    "LmiProblem",
    "SolveOptions",
    "SolveResult",
    "solve",
    "dump_conic",
    "SupplyRate",
    "check_xeid_lti",
    "dissipativate_local",
    "synthesize_interconnection",
    "trajectory_dissipativity_check",
]
