"""Input validation helpers shared by kernels, drivers, and estimators."""

from __future__ import annotations

import numpy as np


class NumericalError(ArithmeticError):
    """An iterative solver produced non-finite state."""


def check_mode(mode: int, ndim: int) -> int:
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a {ndim}-mode tensor")
    return mode


def check_rank(rank: int) -> int:
    if rank < 1:
        raise ValueError(f"rank must be a positive integer, got {rank}")
    return int(rank)


def check_workers(workers: int) -> int:
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return int(workers)


def check_factors(factors, shape) -> list[np.ndarray]:
    """Validate factor matrices against a tensor shape; returns contiguous
    float64 arrays (no copy when already in that form)."""
    dims = tuple(shape.dims) if hasattr(shape, "dims") else tuple(shape)
    if len(factors) != len(dims):
        raise ValueError(
            f"expected {len(dims)} factor matrices, got {len(factors)}"
        )
    out = []
    rank = None
    for n, f in enumerate(factors):
        f = np.ascontiguousarray(np.asarray(f, dtype=np.float64))
        if f.ndim != 2:
            raise ValueError(f"factor {n} must be 2-D, got shape {f.shape}")
        if f.shape[0] != dims[n]:
            raise ValueError(
                f"factor {n} has {f.shape[0]} rows but mode length is {dims[n]}"
            )
        if rank is None:
            rank = f.shape[1]
        elif f.shape[1] != rank:
            raise ValueError(
                f"factor {n} has {f.shape[1]} columns, expected {rank}"
            )
        if not np.isfinite(f).all():
            raise ValueError(f"factor {n} contains non-finite entries")
        out.append(f)
    return out


def check_nonnegative_values(values: np.ndarray) -> None:
    if (values < 0).any():
        raise ValueError(
            "tensor has negative values; Poisson factorization needs counts"
        )
