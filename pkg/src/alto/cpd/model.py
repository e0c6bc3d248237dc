"""Kruskal-form model: weight vector plus one factor matrix per mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoding import as_shape
from ..validation import check_rank


@dataclass
class KruskalModel:
    """Sum of rank-one tensors: weights ``lambda`` and factors ``A(n)``."""

    weights: np.ndarray
    factors: list[np.ndarray]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.factors = [
            np.ascontiguousarray(np.asarray(f, dtype=np.float64))
            for f in self.factors
        ]
        rank = self.rank
        if self.weights.shape != (rank,):
            raise ValueError("weights length must equal the factor column count")
        if any(f.ndim != 2 or f.shape[1] != rank for f in self.factors):
            raise ValueError("all factors must be 2-D with a common column count")

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def copy(self) -> "KruskalModel":
        return KruskalModel(self.weights.copy(), [f.copy() for f in self.factors])

    def normalized(self, ord: int = 2) -> "KruskalModel":
        """Scale every factor column to unit norm, folding norms into the
        weights. Zero columns are left untouched with weight zero."""
        weights = self.weights.copy()
        factors = []
        for f in self.factors:
            norms = np.linalg.norm(f, ord=ord, axis=0) if ord != 1 else np.abs(f).sum(axis=0)
            weights = weights * norms
            safe = np.where(norms == 0.0, 1.0, norms)
            factors.append(f / safe)
        return KruskalModel(weights, factors)

    def to_dense(self) -> np.ndarray:
        letters = "abcdefghijklmnop"
        if self.ndim > len(letters):
            raise ValueError("dense expansion supports at most 16 modes")
        subs = ",".join(f"{letters[n]}z" for n in range(self.ndim))
        return np.einsum(f"z,{subs}->{letters[: self.ndim]}", self.weights, *self.factors)

    def values_at(self, coords: np.ndarray) -> np.ndarray:
        """Model values at the given (M, N) zero-based coordinates."""
        coords = np.asarray(coords)
        prod = np.ones((coords.shape[0], self.rank), dtype=np.float64)
        for n, f in enumerate(self.factors):
            prod *= f[coords[:, n], :]
        return prod @ self.weights

    def norm_squared(self) -> float:
        """Squared Frobenius norm via the factor Gram matrices."""
        acc = np.outer(self.weights, self.weights)
        for f in self.factors:
            acc = acc * (f.T @ f)
        return float(acc.sum())

    def to_json_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "rank": self.rank,
            "lambda": [float(w) for w in self.weights],
            "factors": [[[float(v) for v in row] for row in f] for f in self.factors],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "KruskalModel":
        factors = [np.asarray(f, dtype=np.float64) for f in data["factors"]]
        return cls(np.asarray(data["lambda"], dtype=np.float64), factors)


def init_factors(shape, rank: int, seed: int = 0, nonneg: bool = False) -> KruskalModel:
    """Seeded random starting point with unit weights.

    Standard draws are uniform on [0, 1); with ``nonneg`` entries are drawn
    from (0, 1] so Poisson-regression updates never start at an exact zero.
    """
    shape = as_shape(shape)
    rank = check_rank(rank)
    rng = np.random.default_rng(seed)
    factors = []
    for d in shape.dims:
        draw = rng.random((d, rank))
        factors.append(1.0 - draw if nonneg else draw)
    return KruskalModel(np.ones(rank), factors)
