"""Numerical kernels: equality-constrained QP and multiple-choice knapsack."""
from .mcks import McksInstance, Option, is_feasible, selection_gain, solve_mcks
from .qp import EqConstrainedQp, IndefiniteQpError, QpError, RankDeficientError, kkt_residuals, solve_eq_qp

__all__ = ["EqConstrainedQp", "IndefiniteQpError", "McksInstance", "Option", "QpError", "is_feasible",
           "RankDeficientError", "kkt_residuals", "selection_gain",
           "solve_eq_qp", "solve_mcks"]
