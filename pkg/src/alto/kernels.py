"""MTTKRP kernels over linearized tensors with adaptive conflict resolution.

Three execution schemes share one arithmetic core:

* sequential: one pass over the nonzeros in line-position order.
* recursive buffered: each worker accumulates its line segment into a
  scratch buffer sized by the segment's mode interval, then output rows
  pull their partials from every covering segment in ascending order.
  Output is bit-identical across runs and worker counts for a fixed
  segment count.
* output oriented: workers scan a mode-sorted view and write output rows
  directly; only the few rows straddling a segment cut need synchronized
  treatment, handled here with per-worker side buffers merged at the end.

``select_strategy`` picks the scheme from the target mode's fiber reuse
(nonzeros per output row): buffered accumulation costs up to four memory
operations per update, so it only pays off when a fiber is reused more
than four times and the buffers fit the configured budget.
"""

from __future__ import annotations

import enum
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _jit
from .partition import (
    ModeOrderedView,
    SegmentSet,
    balanced_bounds,
    make_mode_ordered_view,
    make_segments,
)
from .tensor import AltoTensor, TensorStats, compute_stats
from .validation import check_factors, check_mode

DEFAULT_TEMP_BUDGET_BYTES = 1 << 30

REUSE_THRESHOLD = 4.0  # buffered accumulation worst case: 2 reads + 2 writes


class Strategy(enum.Enum):
    SEQUENTIAL = "sequential"
    RECURSIVE = "recursive"
    OUTPUT_ORIENTED = "output"


@dataclass(frozen=True)
class StrategyChoice:
    """A strategy decision plus the numbers that led to it."""

    strategy: Strategy
    mode: int
    workers: int
    fiber_reuse: float
    buffer_bytes: int | None
    temp_budget_bytes: int
    reason: str

    def to_json_dict(self) -> dict:
        # workers is deliberately left out: the same decision record must come
        # out byte-identical for any thread count (it lives in the run config)
        return {
            "strategy": self.strategy.value,
            "mode": self.mode,
            "fiber_reuse": self.fiber_reuse,
            "buffer_bytes": self.buffer_bytes,
            "temp_budget_bytes": self.temp_budget_bytes,
            "reason": self.reason,
        }


def select_strategy(
    stats: TensorStats,
    mode: int,
    workers: int,
    buffer_bytes: int | None = None,
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
) -> StrategyChoice:
    """Pick the conflict-resolution scheme for one target mode.

    Buffered (recursive) traversal needs fiber reuse strictly above four;
    ``buffer_bytes`` of ``None`` means the scratch size is not known yet and
    is treated as affordable.
    """
    check_mode(mode, stats.shape.ndim)
    reuse = stats.fiber_reuse[mode]

    def choice(strategy, reason):
        return StrategyChoice(
            strategy=strategy,
            mode=mode,
            workers=workers,
            fiber_reuse=reuse,
            buffer_bytes=buffer_bytes,
            temp_budget_bytes=temp_budget_bytes,
            reason=reason,
        )

    if workers <= 1:
        return choice(Strategy.SEQUENTIAL, "single worker")
    if reuse <= REUSE_THRESHOLD:
        return choice(
            Strategy.OUTPUT_ORIENTED,
            f"fiber reuse {reuse:.3g} <= {REUSE_THRESHOLD:g}",
        )
    if buffer_bytes is not None and buffer_bytes > temp_budget_bytes:
        return choice(
            Strategy.OUTPUT_ORIENTED,
            f"segment buffers need {buffer_bytes} bytes > budget {temp_budget_bytes}",
        )
    return choice(
        Strategy.RECURSIVE,
        f"fiber reuse {reuse:.3g} > {REUSE_THRESHOLD:g}",
    )


# ---------------------------------------------------------------------------
# Worker pools. Pools are cached per worker count and shared by all kernels;
# tasks write to disjoint memory so scheduling order cannot change results.

_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _run_tasks(tasks, workers: int) -> None:
    if workers <= 1 or len(tasks) <= 1:
        for fn, args in tasks:
            fn(*args)
        return
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers)
            _pools[workers] = pool
    futures = [pool.submit(fn, *args) for fn, args in tasks]
    for f in futures:
        f.result()


def _factor_stack(factors):
    offs = np.zeros(len(factors) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([f.shape[0] for f in factors])
    return np.ascontiguousarray(np.vstack(factors)), offs


def _prepare(alto: AltoTensor, factors, mode: int):
    factors = check_factors(factors, alto.shape)
    check_mode(mode, alto.ndim)
    fstack, offs = _factor_stack(factors)
    rank = factors[0].shape[1]
    out = np.zeros((alto.shape.dims[mode], rank), dtype=np.float64)
    return fstack, offs, rank, out


def mttkrp_sequential(alto: AltoTensor, factors, mode: int) -> np.ndarray:
    """Reference kernel: accumulate every nonzero in line-position order."""
    fstack, offs, _, out = _prepare(alto, factors, mode)
    _jit.mttkrp_block(
        alto.coords, alto.values, fstack, offs, mode, 0, alto.nnz, out, 0
    )
    return out


def mttkrp_recursive(
    alto: AltoTensor,
    segments: SegmentSet,
    factors,
    mode: int,
    workers: int = 1,
) -> np.ndarray:
    """Buffered traversal: per-segment scratch accumulation, then a
    pull-based reduction over output rows in ascending segment order."""
    fstack, offs, rank, out = _prepare(alto, factors, mode)
    temps, seg_offs, lo, hi = _accumulate_segments(
        alto.coords, alto.values, segments, mode, workers, rank,
        _jit.mttkrp_block, (fstack, offs),
    )
    _reduce_rows(temps, seg_offs, lo, hi, out, workers)
    return out


def _accumulate_segments(coords, vals, segments, mode, workers, rank, block, fargs):
    lo, hi = segments.interval_arrays(mode)
    widths = hi - lo + 1
    seg_offs = np.zeros(len(widths), dtype=np.int64)
    seg_offs[1:] = np.cumsum(widths[:-1] * rank)
    temps = np.zeros(int((widths * rank).sum()), dtype=np.float64)
    tasks = []
    for l, seg in enumerate(segments.segments):
        buf = temps[seg_offs[l] : seg_offs[l] + widths[l] * rank]
        buf = buf.reshape(widths[l], rank)
        tasks.append(
            (block, (coords, vals, *fargs, mode, seg.start, seg.stop, buf, lo[l]))
        )
    _run_tasks(tasks, workers)
    return temps, seg_offs, lo, hi


def _reduce_rows(temps, seg_offs, lo, hi, out, workers):
    bounds = balanced_bounds(out.shape[0], min(workers, out.shape[0]) or 1)
    tasks = [
        (_jit.pull_reduce, (temps, seg_offs, lo, hi, out, bounds[i], bounds[i + 1]))
        for i in range(bounds.size - 1)
    ]
    _run_tasks(tasks, workers)


def mttkrp_output_oriented(
    alto: AltoTensor,
    view: ModeOrderedView,
    factors,
    mode: int,
    workers: int = 1,
) -> np.ndarray:
    """Mode-sorted traversal: rows are written directly except the boundary
    rows shared between view segments, which are accumulated privately per
    segment and merged once all workers finish."""
    if view.mode != mode:
        raise ValueError(f"view is ordered by mode {view.mode}, not {mode}")
    fstack, offs, rank, out = _prepare(alto, factors, mode)
    _accumulate_oriented(
        view, mode, workers, rank, out, _jit.mttkrp_block_split, (fstack, offs)
    )
    return out


def _accumulate_oriented(view, mode, workers, rank, out, block, fargs):
    slots = view.boundary_slots(out.shape[0])
    nb = view.boundary_rows.size
    bbufs = [
        np.zeros((nb, rank), dtype=np.float64) for _ in range(view.num_segments)
    ]
    tasks = []
    for l in range(view.num_segments):
        tasks.append(
            (
                block,
                (
                    view.coords, view.values, *fargs, mode,
                    view.bounds[l], view.bounds[l + 1], out, slots, bbufs[l],
                ),
            )
        )
    _run_tasks(tasks, workers)
    if nb:
        for buf in bbufs:  # ascending segment order
            out[view.boundary_rows] += buf


def mttkrp_with_choice(
    alto: AltoTensor,
    factors,
    mode: int,
    *,
    workers: int = 1,
    num_segments: int | None = None,
    strategy: str | Strategy = "auto",
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
) -> tuple[np.ndarray, StrategyChoice]:
    """Run MTTKRP under the requested or automatically selected strategy."""
    factors = check_factors(factors, alto.shape)
    check_mode(mode, alto.ndim)
    rank = factors[0].shape[1]
    num_segments = num_segments if num_segments is not None else max(workers, 1)
    choice = resolve_strategy(
        alto, mode, workers, rank, num_segments, strategy, temp_budget_bytes
    )
    if choice.strategy is Strategy.SEQUENTIAL:
        out = mttkrp_sequential(alto, factors, mode)
    elif choice.strategy is Strategy.RECURSIVE:
        segments = make_segments(alto, num_segments)
        out = mttkrp_recursive(alto, segments, factors, mode, workers)
    else:
        view = make_mode_ordered_view(alto, mode, num_segments)
        out = mttkrp_output_oriented(alto, view, factors, mode, workers)
    return out, choice


def mttkrp(
    alto: AltoTensor,
    factors,
    mode: int,
    *,
    workers: int = 1,
    num_segments: int | None = None,
    strategy: str | Strategy = "auto",
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
) -> np.ndarray:
    out, _ = mttkrp_with_choice(
        alto,
        factors,
        mode,
        workers=workers,
        num_segments=num_segments,
        strategy=strategy,
        temp_budget_bytes=temp_budget_bytes,
    )
    return out


def resolve_strategy(
    alto: AltoTensor,
    mode: int,
    workers: int,
    rank: int,
    num_segments: int,
    strategy: str | Strategy = "auto",
    temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
) -> StrategyChoice:
    """Turn a strategy request ("auto" or explicit) into a recorded choice."""
    if isinstance(strategy, Strategy):
        strategy = strategy.value
    if strategy == "seq":
        strategy = "sequential"
    if strategy == "auto":
        stats = compute_stats(alto)
        reuse = stats.fiber_reuse[mode]
        buffer_bytes = None
        if workers > 1 and reuse > REUSE_THRESHOLD:
            buffer_bytes = make_segments(alto, num_segments).buffer_bytes(mode, rank)
        return select_strategy(
            stats, mode, workers,
            buffer_bytes=buffer_bytes, temp_budget_bytes=temp_budget_bytes,
        )
    try:
        explicit = Strategy(strategy)
    except ValueError:
        raise ValueError(
            f"strategy must be 'auto' or one of "
            f"{[s.value for s in Strategy]}, got {strategy!r}"
        ) from None
    stats = compute_stats(alto)
    return StrategyChoice(
        strategy=explicit,
        mode=mode,
        workers=workers,
        fiber_reuse=stats.fiber_reuse[mode],
        buffer_bytes=None,
        temp_budget_bytes=temp_budget_bytes,
        reason="explicit request",
    )


def flops_per_nonzero(ndim: int, rank: int) -> int:
    """Multiply-add count per nonzero under the fused-kernel convention."""
    return 2 * rank * (ndim - 1) + rank
