"""Alternating least squares driver for the Kruskal decomposition.

Per sweep, each factor in turn gets the closed-form least-squares update
``A(n) = mttkrp(X, n) @ pinv(hadamard of other Grams)``, followed by column
2-norm normalization with norms folded into the weights. The fit
``1 - |X - model|_F / |X|_F`` is tracked from cached quantities; the sweep
loop stops when the fit improvement drops below ``fit_tol``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..kernels import (
    DEFAULT_TEMP_BUDGET_BYTES,
    StrategyChoice,
    mttkrp_with_choice,
)
from ..tensor import AltoTensor
from ..validation import NumericalError, check_rank, check_workers
from .linalg import gram, hadamard_chain, solve_pseudo
from .model import KruskalModel, init_factors


@dataclass(frozen=True)
class CpAlsConfig:
    rank: int = 16
    max_iters: int = 50
    fit_tol: float = 1e-5
    seed: int = 0
    workers: int = 1
    num_segments: int | None = None
    strategy: str = "auto"
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES

    def __post_init__(self):
        check_rank(self.rank)
        check_workers(self.workers)
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.fit_tol <= 0:
            raise ValueError("fit_tol must be positive")


@dataclass
class CpAlsResult:
    model: KruskalModel
    fit_trace: list[float]
    objective_trace: list[float]  # squared residual norm per sweep
    n_iters: int
    converged: bool
    strategies: list[StrategyChoice] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def fit(self) -> float:
        return self.fit_trace[-1]


def cp_als(
    alto: AltoTensor, config: CpAlsConfig, init: KruskalModel | None = None
) -> CpAlsResult:
    """Decompose ``alto`` into a rank-``config.rank`` Kruskal model."""
    start = time.perf_counter()
    ndim = alto.ndim
    if init is None:
        model = init_factors(alto.shape, config.rank, config.seed)
    else:
        if init.shape != alto.shape.dims or init.rank != config.rank:
            raise ValueError("initial model does not match the tensor and rank")
        model = init.copy()
    model = model.normalized(ord=2)
    factors = model.factors
    weights = model.weights

    norm_x_sq = float(alto.values @ alto.values)
    grams = [gram(f) for f in factors]
    strategies: list[StrategyChoice] = []

    def kernel(mode):
        out, choice = mttkrp_with_choice(
            alto,
            factors,
            mode,
            workers=config.workers,
            num_segments=config.num_segments,
            strategy=config.strategy,
            temp_budget_bytes=config.temp_budget_bytes,
        )
        if len(strategies) < ndim:
            strategies.append(choice)
        return out

    fit_trace: list[float] = []
    objective_trace: list[float] = []

    if config.max_iters == 0:
        fit, res_sq = _fit_direct(alto, KruskalModel(weights, factors), norm_x_sq)
        return CpAlsResult(
            model=KruskalModel(weights, factors),
            fit_trace=[fit],
            objective_trace=[res_sq],
            n_iters=0,
            converged=False,
            strategies=strategies,
            wall_time_s=time.perf_counter() - start,
        )

    prev_fit = None
    converged = False
    n_iters = 0
    for it in range(1, config.max_iters + 1):
        n_iters = it
        for n in range(ndim):
            v = hadamard_chain(grams, skip=n)
            mt = kernel(n)
            a = solve_pseudo(mt, v)
            norms = np.linalg.norm(a, axis=0)
            safe = np.where(norms == 0.0, 1.0, norms)
            a = a / safe
            weights = norms
            factors[n] = a
            grams[n] = gram(a)
        # <X, model> from the last kernel output: the other factors entering
        # `mt` are exactly the ones the current model carries
        inner = float(np.sum(mt * factors[ndim - 1] * weights))
        model_norm_sq = float(weights @ (hadamard_chain(grams) @ weights))
        res_sq = max(norm_x_sq - 2.0 * inner + model_norm_sq, 0.0)
        fit = 1.0 - math.sqrt(res_sq / norm_x_sq)
        if not math.isfinite(fit):
            raise NumericalError(f"fit became non-finite at iteration {it}")
        fit_trace.append(fit)
        objective_trace.append(res_sq)
        if prev_fit is not None and abs(fit - prev_fit) < config.fit_tol:
            converged = True
            break
        prev_fit = fit

    return CpAlsResult(
        model=KruskalModel(weights, factors),
        fit_trace=fit_trace,
        objective_trace=objective_trace,
        n_iters=n_iters,
        converged=converged,
        strategies=strategies,
        wall_time_s=time.perf_counter() - start,
    )


def _fit_direct(alto: AltoTensor, model: KruskalModel, norm_x_sq: float):
    """Fit evaluated from scratch (used when no kernel output is cached)."""
    inner = float(alto.values @ model.values_at(alto.coords))
    res_sq = max(norm_x_sq - 2.0 * inner + model.norm_squared(), 0.0)
    return 1.0 - math.sqrt(res_sq / norm_x_sq), res_sq
