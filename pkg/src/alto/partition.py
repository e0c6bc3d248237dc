"""Balanced partitioning of a linearized tensor into line segments.

A segment is a contiguous equal-count slice of the position-sorted nonzero
arrays. Per mode it carries the closed interval spanned by the decoded
coordinates of its members (a tight bounding box), which bounds the scratch
buffer a kernel needs for that segment and drives the pull-based reduction.

Mode-ordered views re-sort the nonzeros by one target mode for the
output-oriented traversal; rows cut across view segments are flagged as
boundary rows and need synchronized updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import AltoTensor


@dataclass(frozen=True)
class Segment:
    """One contiguous slice [start, stop) of the sorted nonzero arrays."""

    start: int
    stop: int
    pos_first: int
    pos_last: int
    intervals: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return self.stop - self.start

    def interval_width(self, mode: int) -> int:
        lo, hi = self.intervals[mode]
        return hi - lo + 1


@dataclass(frozen=True)
class SegmentSet:
    """All segments of one tensor plus per-mode boundary-row flags."""

    segments: tuple[Segment, ...]
    boundary_rows: tuple[np.ndarray, ...]  # per mode, sorted row ids in >= 2 segments

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    def bounds(self) -> np.ndarray:
        edges = [s.start for s in self.segments]
        edges.append(self.segments[-1].stop)
        return np.asarray(edges, dtype=np.int64)

    def interval_arrays(self, mode: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray([s.intervals[mode][0] for s in self.segments], dtype=np.int64)
        hi = np.asarray([s.intervals[mode][1] for s in self.segments], dtype=np.int64)
        return lo, hi

    def buffer_rows(self, mode: int) -> int:
        return sum(s.interval_width(mode) for s in self.segments)

    def buffer_bytes(self, mode: int, rank: int) -> int:
        return self.buffer_rows(mode) * rank * 8


def balanced_bounds(count: int, parts: int) -> np.ndarray:
    """Split ``count`` items into ``parts`` contiguous chunks of size
    differing by at most one (the first ``count % parts`` get the extra)."""
    base, extra = divmod(count, parts)
    sizes = np.full(parts, base, dtype=np.int64)
    sizes[:extra] += 1
    return np.concatenate(([0], np.cumsum(sizes)))


def make_segments(alto: AltoTensor, num_segments: int) -> SegmentSet:
    """Partition the sorted nonzeros into balanced line segments.

    ``num_segments`` is clamped to the nonzero count so every segment holds
    at least one element.
    """
    if num_segments < 1:
        raise ValueError("need at least one segment")
    num_segments = min(num_segments, alto.nnz)
    cached = alto._segments.get(num_segments)
    if cached is not None:
        return cached

    bounds = balanced_bounds(alto.nnz, num_segments)
    coords = alto.coords
    starts = bounds[:-1]
    lows = np.minimum.reduceat(coords, starts, axis=0)
    highs = np.maximum.reduceat(coords, starts, axis=0)
    pos_ints = None
    segments = []
    for l in range(num_segments):
        a, b = int(bounds[l]), int(bounds[l + 1])
        if alto.positions.ndim == 1:
            first, last = int(alto.positions[a]), int(alto.positions[b - 1])
        else:
            if pos_ints is None:
                pos_ints = alto.position_ints()
            first, last = pos_ints[a], pos_ints[b - 1]
        segments.append(
            Segment(
                start=a,
                stop=b,
                pos_first=first,
                pos_last=last,
                intervals=tuple(
                    (int(lo), int(hi)) for lo, hi in zip(lows[l], highs[l])
                ),
            )
        )
    seg_ids = np.repeat(np.arange(num_segments, dtype=np.int64), np.diff(bounds))
    boundary = tuple(
        _rows_spanning_segments(coords[:, n], seg_ids) for n in range(alto.ndim)
    )
    result = SegmentSet(segments=tuple(segments), boundary_rows=boundary)
    alto._segments[num_segments] = result
    return result


def _rows_spanning_segments(rows: np.ndarray, seg_ids: np.ndarray) -> np.ndarray:
    """Row ids whose entries fall in more than one segment."""
    order = np.argsort(rows, kind="stable")
    r, s = rows[order], seg_ids[order]
    if r.size == 0:
        return np.empty(0, dtype=np.int64)
    same_row = r[1:] == r[:-1]
    seg_change = s[1:] != s[:-1]
    return np.unique(r[1:][same_row & seg_change])


def overlap(a: Segment, b: Segment, mode: int) -> tuple[int, int] | None:
    """Intersection of two segments' mode intervals, or None when disjoint."""
    lo = max(a.intervals[mode][0], b.intervals[mode][0])
    hi = min(a.intervals[mode][1], b.intervals[mode][1])
    return (lo, hi) if lo <= hi else None


@dataclass(frozen=True)
class ModeOrderedView:
    """Nonzeros re-sorted by one mode for output-oriented traversal.

    The permutation is stable with respect to the linearized order, so
    entries of one output row stay in increasing position order. Boundary
    rows are the at most ``L - 1`` rows whose entries straddle a segment cut.
    """

    mode: int
    perm: np.ndarray
    coords: np.ndarray
    values: np.ndarray
    bounds: np.ndarray
    boundary_rows: np.ndarray

    @property
    def num_segments(self) -> int:
        return self.bounds.size - 1

    def boundary_slots(self, num_rows: int) -> np.ndarray:
        """Map row id -> compact boundary index, -1 for ordinary rows."""
        slots = np.full(num_rows, -1, dtype=np.int64)
        slots[self.boundary_rows] = np.arange(self.boundary_rows.size)
        return slots


def make_mode_ordered_view(
    alto: AltoTensor, mode: int, num_segments: int
) -> ModeOrderedView:
    if not 0 <= mode < alto.ndim:
        raise ValueError(f"mode {mode} out of range for {alto.ndim} modes")
    if num_segments < 1:
        raise ValueError("need at least one segment")
    num_segments = min(num_segments, alto.nnz)
    key = (mode, num_segments)
    cached = alto._views.get(key)
    if cached is not None:
        return cached

    coords = alto.coords
    perm = np.argsort(coords[:, mode], kind="stable")
    sorted_coords = np.ascontiguousarray(coords[perm])
    bounds = balanced_bounds(alto.nnz, num_segments)
    rows = sorted_coords[:, mode]
    cuts = bounds[1:-1]  # every cut is interior: all segment sizes are >= 1
    if cuts.size:
        continuing = rows[cuts] == rows[cuts - 1]
        boundary = np.unique(rows[cuts[continuing]])
    else:
        boundary = np.empty(0, dtype=np.int64)
    view = ModeOrderedView(
        mode=mode,
        perm=perm,
        coords=sorted_coords,
        values=np.ascontiguousarray(alto.values[perm]),
        bounds=bounds,
        boundary_rows=boundary.astype(np.int64),
    )
    alto._views[key] = view
    return view
