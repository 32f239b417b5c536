"""Hybrid projection with recycling Golub-Kahan bidiagonalization, basis
compression under a storage budget and automatic Tikhonov parameter choice."""

from .linops import DenseMatrix, IdentityOp, LinearOp, StackedOp, ZeroOp, stack
from .gkb import Breakdown, GkbState, gkb_init, gkb_step, lsqr_solve, run_gkb
from .recycle import (
    NoExtensionNeeded,
    RecycleState,
    assemble_projected,
    build_Wk,
    lift_solution,
    recycle_init,
    recycle_step,
)
from .projreg import DP, GCV, UPRE, WGCV, Optimal, select_lambda, tikhonov_projected
from .compress import Rbd, SolutionOriented, Sparse, Tsvd, compress
from .driver import SolverConfig, hybr, hybr_recycle, storage_costs, stream_solve

__version__ = "0.1.0"
