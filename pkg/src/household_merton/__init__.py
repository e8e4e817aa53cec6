"""Optimal wealth allocation for agents sharing one self-financed portfolio.

CRRA agents, a constant short rate and a mean-reverting market price of
risk. Closed-form spending values come from an exponential-affine Riccati
system; ``mc_verify`` checks them against Monte Carlo.
"""
from .allocation import (AllocationResult, HFamily, InvalidSpec, NonFinite, allocate,
                         allocate_at_y, build_family, csp, invert_y, terminal_split)
from .core_model import (AgentSpec, MarketParams, PathEnsemble, ProblemSpec, Role, simulate,
                         validate)
from .kernels import BACKEND
from .riccati import AffineCoefficients, SingularityDetected, solve_system

__version__ = "0.1.0"

__all__ = [
    "AffineCoefficients", "AgentSpec", "AllocationResult", "BACKEND", "HFamily", "InvalidSpec",
    "MarketParams", "NonFinite", "PathEnsemble", "ProblemSpec", "Role", "SingularityDetected",
    "allocate", "allocate_at_y", "build_family", "csp", "invert_y", "simulate", "solve_system",
    "terminal_split", "validate",
]
