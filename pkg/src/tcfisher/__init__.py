"""Auction algorithm for linear Fisher markets with transaction costs.

The solver in :mod:`tcfisher.engine` computes eps-approximate equilibria by
ascending prices; :mod:`tcfisher.oracle` solves the equivalent convex
program numerically for cross-checks and :mod:`tcfisher.verify` checks
either result against the equilibrium conditions.
"""
from .engine import EquilibriumResult, SolverConfig, SolverError, round_bound, solve
from .model import (BLOCKED, InstanceError, MarketInstance, compute_demand, dump_instance,
                    effective_price, make_instance, parse_instance, validate)
from .numeric import EXACT, FLOAT64, get_backend
from .oracle import OracleError, minimize, recover_allocation, solve_oracle
from .verify import check_approx_equilibrium, check_exact_equilibrium, check_invariants

__version__ = "0.1.0"

__all__ = [
    "BLOCKED", "EXACT", "FLOAT64", "EquilibriumResult", "InstanceError", "MarketInstance",
    "OracleError", "SolverConfig", "SolverError", "check_approx_equilibrium",
    "check_exact_equilibrium", "check_invariants", "compute_demand", "dump_instance",
    "effective_price", "get_backend", "make_instance", "minimize", "parse_instance",
    "recover_allocation", "round_bound", "solve", "solve_oracle", "validate",
]
