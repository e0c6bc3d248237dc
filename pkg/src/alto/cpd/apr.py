"""Alternating Poisson regression with multiplicative updates.

Factor matrices are kept column-stochastic with the column masses in the
weight vector. Updating one mode works on the rescaled matrix
``b = (A(n) + shift) * lambda`` and repeatedly multiplies it by the ratio
matrix from ``phi_kernel`` until the KKT residual ``max |min(b, 1 - ratio)|``
drops below tolerance or the inner-iteration cap is hit. The shift nudges
entries stuck at zero whose ratio says they want to grow (the inadmissible
zero adjustment); it is applied from the second outer sweep on, using the
ratio matrix retained from the previous sweep.

The ratio kernel supports two memory modes: precomputing the per-nonzero
Khatri-Rao rows once per mode visit (``pre``) or recomputing them inside
the kernel (``otf``). Both produce bitwise-identical results; the adaptive
default picks ``pre`` only for low-reuse tensors whose factors overflow
the configured fast-memory size.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import _jit
from ..kernels import (
    DEFAULT_TEMP_BUDGET_BYTES,
    Strategy,
    StrategyChoice,
    _accumulate_oriented,
    _accumulate_segments,
    _reduce_rows,
    resolve_strategy,
)
from ..partition import make_mode_ordered_view, make_segments
from ..tensor import AltoTensor, TensorStats, compute_stats
from ..validation import (
    NumericalError,
    check_factors,
    check_mode,
    check_nonnegative_values,
    check_rank,
    check_workers,
)
from .model import KruskalModel, init_factors

DEFAULT_FAST_MEMORY_BYTES = 100 * (1 << 20)  # one socket's worth of L3

_LOW_REUSE_BELOW = 5.0  # the "limited" fiber-reuse class boundary


@dataclass(frozen=True)
class CpAprConfig:
    rank: int = 16
    max_outer: int = 200
    max_inner: int = 10
    tau: float = 1e-4
    kappa: float = 1e-2
    kappa_tol: float = 1e-10
    eps: float = 1e-10
    memory_mode: str = "auto"  # auto | pre | otf
    fast_memory_bytes: int = DEFAULT_FAST_MEMORY_BYTES
    seed: int = 0
    workers: int = 1
    num_segments: int | None = None
    strategy: str = "auto"
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES
    track_inner_loglik: bool = False

    def __post_init__(self):
        check_rank(self.rank)
        check_workers(self.workers)
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if min(self.tau, self.kappa, self.kappa_tol, self.eps) <= 0:
            raise ValueError("tau, kappa, kappa_tol, and eps must be positive")
        if self.memory_mode not in ("auto", "pre", "otf"):
            raise ValueError("memory_mode must be auto, pre, or otf")


@dataclass
class CpAprResult:
    model: KruskalModel
    kkt_trace: list[list[float]]  # per outer sweep, per mode
    inner_iters: list[list[int]]
    loglik_trace: list[float]  # per outer sweep
    n_outer: int
    converged: bool
    memory_mode: str = "otf"
    strategies: list[StrategyChoice] = field(default_factory=list)
    inner_loglik: list[list[list[float]]] | None = None
    wall_time_s: float = 0.0

    @property
    def final_kkt(self) -> float:
        return max(self.kkt_trace[-1])


def precompute_krp_rows(alto: AltoTensor, factors, mode: int) -> np.ndarray:
    """Khatri-Rao row per nonzero: elementwise product of the other modes'
    factor rows at that nonzero's coordinates."""
    factors = check_factors(factors, alto.shape)
    check_mode(mode, alto.ndim)
    coords = alto.coords
    out = np.ones((alto.nnz, factors[0].shape[1]), dtype=np.float64)
    for m, f in enumerate(factors):
        if m != mode:
            out *= f[coords[:, m], :]
    return out


def phi_kernel(
    alto: AltoTensor,
    scaled: np.ndarray,
    factors,
    mode: int,
    *,
    krp_rows: np.ndarray | None = None,
    eps: float = 1e-10,
    workers: int = 1,
    num_segments: int | None = None,
    strategy: str | Strategy = "auto",
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
) -> np.ndarray:
    """Ratio matrix of the multiplicative update for one mode.

    Per nonzero ``x`` with row ``i``: ``out[i] += v(x) / max(scaled[i] . krp,
    eps) * krp`` where ``krp`` comes from ``krp_rows`` (entry order of the
    tensor) when given, else is recomputed on the fly. Conflict resolution
    mirrors the MTTKRP kernels.
    """
    factors = check_factors(factors, alto.shape)
    check_mode(mode, alto.ndim)
    rank = factors[0].shape[1]
    scaled = np.ascontiguousarray(np.asarray(scaled, dtype=np.float64))
    if scaled.shape != (alto.shape.dims[mode], rank):
        raise ValueError(
            f"scaled matrix must be {(alto.shape.dims[mode], rank)}, got {scaled.shape}"
        )
    use_pre = krp_rows is not None
    if use_pre:
        krp_rows = np.ascontiguousarray(np.asarray(krp_rows, dtype=np.float64))
        if krp_rows.shape != (alto.nnz, rank):
            raise ValueError("krp_rows must be (nnz, rank) in tensor entry order")
    else:
        krp_rows = np.empty((0, rank), dtype=np.float64)

    num_segments = num_segments if num_segments is not None else max(workers, 1)
    choice = resolve_strategy(
        alto, mode, workers, rank, num_segments, strategy, temp_budget_bytes
    )
    fstack = np.ascontiguousarray(np.vstack(factors))
    offs = np.zeros(len(factors) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([f.shape[0] for f in factors])
    out = np.zeros((alto.shape.dims[mode], rank), dtype=np.float64)

    if choice.strategy is Strategy.SEQUENTIAL:
        _jit.phi_block(
            alto.coords, alto.values, fstack, offs, scaled, krp_rows, use_pre,
            eps, mode, 0, alto.nnz, out, 0,
        )
    elif choice.strategy is Strategy.RECURSIVE:
        segments = make_segments(alto, num_segments)
        temps, seg_offs, lo, hi = _accumulate_segments(
            alto.coords, alto.values, segments, mode, workers, rank,
            _jit.phi_block, (fstack, offs, scaled, krp_rows, use_pre, eps),
        )
        _reduce_rows(temps, seg_offs, lo, hi, out, workers)
    else:
        view = make_mode_ordered_view(alto, mode, num_segments)
        # the kernel walks the permuted arrays, so the precomputed rows
        # must follow the same permutation
        krp_view = np.ascontiguousarray(krp_rows[view.perm]) if use_pre else krp_rows
        _accumulate_oriented(
            view, mode, workers, rank, out,
            _jit.phi_block_split, (fstack, offs, scaled, krp_view, use_pre, eps),
        )
    return out


def kkt_violation(scaled: np.ndarray, ratio: np.ndarray) -> float:
    """Max-norm complementary-slackness residual: max |min(b, 1 - ratio)|."""
    return float(np.abs(np.minimum(scaled, 1.0 - ratio)).max())


def select_krp_memory_mode(
    stats: TensorStats, rank: int, fast_memory_bytes: int = DEFAULT_FAST_MEMORY_BYTES
) -> str:
    """Precompute Khatri-Rao rows only when reuse is too low to keep factor
    rows cached and the factors themselves overflow fast memory."""
    factor_bytes = sum(stats.shape.dims) * rank * 8
    limited = min(stats.fiber_reuse) < _LOW_REUSE_BELOW
    if limited and factor_bytes > fast_memory_bytes:
        return "pre"
    return "otf"


def poisson_loglik(alto: AltoTensor, model: KruskalModel) -> float:
    """Poisson log-likelihood (up to the data-only factorial term):
    sum(v * log(model_at_nonzeros)) - sum(model over all cells)."""
    mhat = model.values_at(alto.coords)
    total = float(np.prod([f.sum(axis=0) for f in model.factors], axis=0) @ model.weights)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(mhat)
    return float(alto.values @ logs) - total


def cp_apr_mu(
    alto: AltoTensor, config: CpAprConfig, init: KruskalModel | None = None
) -> CpAprResult:
    """Multiplicative-update alternating Poisson regression."""
    start = time.perf_counter()
    check_nonnegative_values(alto.values)
    if not np.equal(np.mod(alto.values, 1.0), 0.0).all():
        warnings.warn(
            "tensor has non-integer values; the Poisson model assumes counts",
            stacklevel=2,
        )
    ndim = alto.ndim
    if init is None:
        model = init_factors(alto.shape, config.rank, config.seed, nonneg=True)
    else:
        if init.shape != alto.shape.dims or init.rank != config.rank:
            raise ValueError("initial model does not match the tensor and rank")
        if (init.weights < 0).any() or any((f < 0).any() for f in init.factors):
            raise ValueError("initial model must be nonnegative")
        model = init.copy()
    model = model.normalized(ord=1)
    factors = model.factors
    weights = model.weights

    stats = compute_stats(alto)
    memory_mode = config.memory_mode
    if memory_mode == "auto":
        memory_mode = select_krp_memory_mode(
            stats, config.rank, config.fast_memory_bytes
        )
    num_segments = (
        config.num_segments if config.num_segments is not None else max(config.workers, 1)
    )
    strategies = [
        resolve_strategy(
            alto, n, config.workers, config.rank, num_segments,
            config.strategy, config.temp_budget_bytes,
        )
        for n in range(ndim)
    ]

    ratio_prev: list[np.ndarray | None] = [None] * ndim
    kkt_trace: list[list[float]] = []
    inner_counts: list[list[int]] = []
    loglik_trace: list[float] = []
    inner_loglik: list[list[list[float]]] | None = (
        [] if config.track_inner_loglik else None
    )

    converged = False
    n_outer = 0
    for outer in range(1, config.max_outer + 1):
        n_outer = outer
        all_converged = True
        kkt_modes: list[float] = []
        inner_modes: list[int] = []
        ll_modes: list[list[float]] = []
        for n in range(ndim):
            a = factors[n]
            if outer > 1:
                shift = (a < config.kappa_tol) & (ratio_prev[n] > 1.0)
                b = (a + config.kappa * shift) * weights
            else:
                b = a * weights
            krp_rows = (
                precompute_krp_rows(alto, factors, n) if memory_mode == "pre" else None
            )
            ll_inner: list[float] = []
            if config.track_inner_loglik:
                track_rows = (
                    krp_rows
                    if krp_rows is not None
                    else precompute_krp_rows(alto, factors, n)
                )
                other_mass = _other_mode_mass(factors, n)
                ll_inner.append(
                    _working_loglik(alto, b, track_rows, alto.coords[:, n], other_mass)
                )
            inner_used = 0
            kkt = float("inf")
            for _ in range(config.max_inner):
                ratio = phi_kernel(
                    alto, b, factors, n,
                    krp_rows=krp_rows,
                    eps=config.eps,
                    workers=config.workers,
                    num_segments=num_segments,
                    strategy=strategies[n].strategy,
                    temp_budget_bytes=config.temp_budget_bytes,
                )
                inner_used += 1
                kkt = kkt_violation(b, ratio)
                if kkt < config.tau:
                    break
                all_converged = False
                b = b * ratio
                if not np.isfinite(b).all():
                    raise NumericalError(
                        f"non-finite factor update at outer {outer}, mode {n}, "
                        f"inner {inner_used}"
                    )
                if config.track_inner_loglik:
                    ll_inner.append(
                        _working_loglik(
                            alto, b, track_rows, alto.coords[:, n], other_mass
                        )
                    )
            ratio_prev[n] = ratio
            kkt_modes.append(kkt)
            inner_modes.append(inner_used)
            if config.track_inner_loglik:
                ll_modes.append(ll_inner)
            weights = b.sum(axis=0)
            factors[n] = np.divide(
                b, weights, out=np.zeros_like(b), where=weights > 0
            )
        kkt_trace.append(kkt_modes)
        inner_counts.append(inner_modes)
        if inner_loglik is not None:
            inner_loglik.append(ll_modes)
        loglik_trace.append(poisson_loglik(alto, KruskalModel(weights, factors)))
        if all_converged:
            converged = True
            break

    return CpAprResult(
        model=KruskalModel(weights, factors),
        kkt_trace=kkt_trace,
        inner_iters=inner_counts,
        loglik_trace=loglik_trace,
        n_outer=n_outer,
        converged=converged,
        memory_mode=memory_mode,
        strategies=strategies,
        inner_loglik=inner_loglik,
        wall_time_s=time.perf_counter() - start,
    )


def _other_mode_mass(factors, mode: int) -> np.ndarray:
    mass = None
    for m, f in enumerate(factors):
        if m == mode:
            continue
        s = f.sum(axis=0)
        mass = s if mass is None else mass * s
    if mass is None:
        return np.ones(factors[mode].shape[1])
    return mass


def _working_loglik(alto, b, krp_rows, rows, other_mass) -> float:
    """Log-likelihood of the mid-update model ``b`` against the tensor."""
    mhat = np.einsum("mr,mr->m", b[rows], krp_rows)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(mhat)
    return float(alto.values @ logs) - float(b.sum(axis=0) @ other_mass)
