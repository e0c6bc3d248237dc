import io
import math

import numpy as np
import pytest

from alto import AltoTensor, CooTensor, parse_frostt

EXAMPLE_TNS = """# 4x8x2 example tensor
1 4 1 1
2 1 1 2
2 7 2 3
3 3 2 4
4 2 2 5
4 5 1 6
"""

EXAMPLE_DIMS = (4, 8, 2)


@pytest.fixture(scope="session")
def example_coo() -> CooTensor:
    return parse_frostt(io.StringIO(EXAMPLE_TNS), dims=EXAMPLE_DIMS)


@pytest.fixture(scope="session")
def example_alto(example_coo) -> AltoTensor:
    return AltoTensor.from_coo(example_coo)


def random_sparse(rng, dims, nnz, kind="normal") -> CooTensor:
    """Random sparse tensor with distinct coordinates and nonzero values."""
    total = math.prod(dims)
    nnz = min(nnz, total)
    if total <= 2**24:
        flat = rng.choice(total, size=nnz, replace=False)
        coords = np.stack(np.unravel_index(flat, dims), axis=1)
    else:
        # space too large to enumerate; collisions are merged at construction
        coords = np.stack([rng.integers(0, d, size=nnz) for d in dims], axis=1)
    if kind == "counts":
        values = rng.integers(1, 10, size=nnz).astype(np.float64)
    elif kind == "positive":
        values = rng.random(nnz) + 0.05
    else:
        values = rng.standard_normal(nnz)
        values[values == 0.0] = 1.0
    return CooTensor(dims, coords, values)


def dense_mttkrp_oracle(dense: np.ndarray, factors, mode: int) -> np.ndarray:
    """Brute-force reference: matricize the dense tensor and multiply by the
    fully materialized Khatri-Rao matrix of the remaining factors."""
    unfolded = np.moveaxis(dense, mode, 0).reshape(dense.shape[mode], -1, order="F")
    rest = [f for m, f in enumerate(factors) if m != mode]
    rank = rest[0].shape[1]
    cols = []
    for r in range(rank):
        col = np.ones(1)
        for f in rest:  # earlier modes vary fastest
            col = np.kron(f[:, r], col)
        cols.append(col)
    return unfolded @ np.stack(cols, axis=1)


def assert_close_rel(got, want, rel=1e-12, scale=None):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    if scale is None:
        scale = max(float(np.abs(want).max(initial=0.0)), 1e-300)
    err = float(np.abs(got - want).max(initial=0.0))
    assert err <= rel * scale, f"max abs err {err} > {rel} * {scale}"


def assert_monotone(seq, direction="nonincreasing", rel=1e-9, floor=1e-30):
    seq = np.asarray(seq, dtype=np.float64)
    slack = rel * np.maximum(np.abs(seq[:-1]), floor)
    diff = np.diff(seq)
    if direction == "nonincreasing":
        bad = diff > slack
    else:
        bad = diff < -slack
    assert not bad.any(), (
        f"sequence not {direction} at steps {np.nonzero(bad)[0].tolist()}: "
        f"{seq.tolist()}"
    )
