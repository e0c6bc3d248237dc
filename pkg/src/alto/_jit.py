"""Compiled inner loops shared by the tensor kernels.

All functions release the GIL so that a thread pool gets real parallelism;
callers hand each thread a disjoint slice of the nonzero arrays and either
a private scratch buffer or a set of output rows nobody else touches.

``fstack`` is every factor matrix stacked row-wise; ``offs[m]`` is the row
offset of mode ``m`` so that ``fstack[offs[m] + i_m]`` is row ``i_m`` of
factor ``m``. Stacking keeps the signatures free of reflected lists.
"""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def mttkrp_block(coords, vals, fstack, offs, mode, start, stop, out, row_base):
    """Accumulate entries [start, stop) into ``out`` rows (shifted by
    ``row_base``) in array order: out[i_mode] += v * prod of factor rows."""
    nmodes = offs.size - 1
    rank = out.shape[1]
    for x in range(start, stop):
        row = coords[x, mode] - row_base
        v = vals[x]
        for r in range(rank):
            p = v
            for m in range(nmodes):
                if m != mode:
                    p *= fstack[offs[m] + coords[x, m], r]
            out[row, r] += p


@njit(nogil=True, cache=True)
def mttkrp_block_split(coords, vals, fstack, offs, mode, start, stop, out, slots, bbuf):
    """Like ``mttkrp_block`` but entries of flagged rows (slots[row] >= 0)
    go to the private buffer ``bbuf`` instead of the shared output."""
    nmodes = offs.size - 1
    rank = out.shape[1]
    for x in range(start, stop):
        row = coords[x, mode]
        s = slots[row]
        v = vals[x]
        target = bbuf if s >= 0 else out
        trow = s if s >= 0 else row
        for r in range(rank):
            p = v
            for m in range(nmodes):
                if m != mode:
                    p *= fstack[offs[m] + coords[x, m], r]
            target[trow, r] += p


@njit(nogil=True, cache=True)
def pull_reduce(temps, seg_offs, lo, hi, out, row_start, row_stop):
    """Gather one block of output rows from every covering segment buffer,
    in ascending segment order (fixed order keeps results bit-stable)."""
    nseg = lo.size
    rank = out.shape[1]
    for b in range(row_start, row_stop):
        for l in range(nseg):
            if lo[l] <= b <= hi[l]:
                base = seg_offs[l] + (b - lo[l]) * rank
                for r in range(rank):
                    out[b, r] += temps[base + r]


@njit(nogil=True, cache=True)
def phi_block(
    coords, vals, fstack, offs, scaled, krp_rows, use_pre,
    eps, mode, start, stop, out, row_base,
):
    """Multiplicative-update numerator: out[i] += v / max(b . krp, eps) * krp.

    ``krp`` is read from ``krp_rows`` when ``use_pre`` is set, otherwise
    recomputed from the factor stack; both paths multiply modes in the same
    ascending order so they agree bitwise.
    """
    nmodes = offs.size - 1
    rank = out.shape[1]
    krp = np.empty(rank, dtype=np.float64)
    for x in range(start, stop):
        row = coords[x, mode]
        if use_pre:
            for r in range(rank):
                krp[r] = krp_rows[x, r]
        else:
            for r in range(rank):
                krp[r] = 1.0
            for m in range(nmodes):
                if m != mode:
                    fr = offs[m] + coords[x, m]
                    for r in range(rank):
                        krp[r] *= fstack[fr, r]
        d = 0.0
        for r in range(rank):
            d += scaled[row, r] * krp[r]
        if d < eps:
            d = eps
        w = vals[x] / d
        orow = row - row_base
        for r in range(rank):
            out[orow, r] += w * krp[r]


@njit(nogil=True, cache=True)
def phi_block_split(
    coords, vals, fstack, offs, scaled, krp_rows, use_pre,
    eps, mode, start, stop, out, slots, bbuf,
):
    """``phi_block`` with flagged rows diverted to a private buffer."""
    nmodes = offs.size - 1
    rank = out.shape[1]
    krp = np.empty(rank, dtype=np.float64)
    for x in range(start, stop):
        row = coords[x, mode]
        if use_pre:
            for r in range(rank):
                krp[r] = krp_rows[x, r]
        else:
            for r in range(rank):
                krp[r] = 1.0
            for m in range(nmodes):
                if m != mode:
                    fr = offs[m] + coords[x, m]
                    for r in range(rank):
                        krp[r] *= fstack[fr, r]
        d = 0.0
        for r in range(rank):
            d += scaled[row, r] * krp[r]
        if d < eps:
            d = eps
        w = vals[x] / d
        s = slots[row]
        target = bbuf if s >= 0 else out
        trow = s if s >= 0 else row
        for r in range(rank):
            target[trow, r] += w * krp[r]
