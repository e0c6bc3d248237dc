"""Small dense linear algebra for the decomposition drivers."""

from __future__ import annotations

import numpy as np
import scipy.linalg

PINV_RTOL = 1e-12  # eigenvalues below this fraction of the largest are dropped


def gram(factor: np.ndarray) -> np.ndarray:
    """A^T A for one factor matrix; symmetric positive semidefinite."""
    factor = np.asarray(factor, dtype=np.float64)
    return factor.T @ factor


def hadamard_chain(grams, skip: int | None = None) -> np.ndarray:
    """Elementwise product of Gram matrices, optionally skipping one mode."""
    out = None
    for n, g in enumerate(grams):
        if n == skip:
            continue
        out = g.copy() if out is None else out * g
    if out is None:
        rank = grams[skip].shape[0]
        return np.ones((rank, rank), dtype=np.float64)
    return out


def solve_pseudo(mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``X @ v = mat`` for the least-squares update ``mat @ pinv(v)``.

    ``v`` is symmetric PSD by construction. A Cholesky solve handles the
    well-conditioned case; on failure the pseudoinverse is formed from an
    eigendecomposition, dropping eigenvalues below ``PINV_RTOL`` times the
    largest (rank-deficient chains give the minimum-norm solution).
    """
    mat = np.asarray(mat, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.isfinite(mat).all() and np.isfinite(v).all()):
        raise ValueError("non-finite input to the normal-equation solve")
    try:
        c, low = scipy.linalg.cho_factor(v)
        return scipy.linalg.cho_solve((c, low), mat.T).T
    except scipy.linalg.LinAlgError:
        pass
    w, u = scipy.linalg.eigh(v)
    cutoff = PINV_RTOL * max(w.max(), 0.0)
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / w[keep]
    return mat @ ((u * inv) @ u.T)
