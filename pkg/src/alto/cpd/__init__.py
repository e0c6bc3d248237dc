"""Canonical polyadic decomposition drivers and their building blocks."""

from .als import CpAlsConfig, CpAlsResult, cp_als
from .apr import (
    CpAprConfig,
    CpAprResult,
    cp_apr_mu,
    kkt_violation,
    phi_kernel,
    poisson_loglik,
    precompute_krp_rows,
    select_krp_memory_mode,
)
from .linalg import gram, hadamard_chain, solve_pseudo
from .model import KruskalModel, init_factors

__all__ = [
    "CpAlsConfig",
    "CpAlsResult",
    "CpAprConfig",
    "CpAprResult",
    "KruskalModel",
    "cp_als",
    "cp_apr_mu",
    "gram",
    "hadamard_chain",
    "init_factors",
    "kkt_violation",
    "phi_kernel",
    "poisson_loglik",
    "precompute_krp_rows",
    "select_krp_memory_mode",
    "solve_pseudo",
]
