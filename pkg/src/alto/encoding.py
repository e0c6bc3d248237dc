"""Adaptive bit-interleaved linearization of tensor coordinates.

A layout assigns every bit of every mode index to one bit of a compact
"line position". Bits are grouped from the least significant end: group g
holds one bit (bit rank g) from every mode that still has bits left, and
within a group the shortest mode sits at the least significant slot. The
top bits of a position therefore halve the longest modes first, so any
position prefix bounds a box-shaped subspace with near-equal mode extents.

Positions are plain Python ints in the scalar API. The array codec packs
them into one uint64 word (layouts up to 64 bits) or two little-endian
uint64 words (up to the 128-bit layout limit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

MAX_LINE_BITS = 128

_SUPPORTED_WORD_BITS = (8, 16, 32, 64)


class UnsupportedShapeError(ValueError):
    """Tensor shape cannot be linearized within the 128-bit position limit."""


def _mode_bits(dim: int) -> int:
    # bits needed for indices 0..dim-1; a length-1 mode needs none
    return (dim - 1).bit_length()


@dataclass(frozen=True)
class TensorShape:
    """Mode lengths of a tensor, with the derived per-mode bit widths."""

    dims: tuple[int, ...]

    def __init__(self, dims: Iterable[int]):
        dims = tuple(int(d) for d in dims)
        if len(dims) == 0:
            raise ValueError("tensor must have at least one mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"mode lengths must be >= 1, got {dims}")
        if sum(_mode_bits(d) for d in dims) > MAX_LINE_BITS:
            raise UnsupportedShapeError(
                f"shape {dims} needs {sum(_mode_bits(d) for d in dims)} index bits; "
                f"the limit is {MAX_LINE_BITS}"
            )
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def mode_bits(self) -> tuple[int, ...]:
        return tuple(_mode_bits(d) for d in self.dims)

    @property
    def total_bits(self) -> int:
        return sum(self.mode_bits)

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)


def as_shape(shape) -> TensorShape:
    if isinstance(shape, TensorShape):
        return shape
    return TensorShape(shape)


# A span copies `length` consecutive bits starting at bit `src` of a mode
# index to/from bit `dst` of the line position.
@dataclass(frozen=True)
class BitSpan:
    src: int
    dst: int
    length: int


@dataclass(frozen=True)
class AltoLayout:
    """Bit schedule and per-mode extraction masks for one tensor shape.

    ``schedule`` lists ``(mode, bit_rank)`` pairs from the least significant
    line bit upward. ``masks[n]`` has a 1 wherever a bit of mode ``n`` lives
    in the position word. ``word_bits`` is 64 or 128, the storage width.
    """

    shape: TensorShape
    schedule: tuple[tuple[int, int], ...]
    masks: tuple[int, ...] = field(repr=False)
    spans: tuple[tuple[BitSpan, ...], ...] = field(repr=False)

    @property
    def total_bits(self) -> int:
        return len(self.schedule)

    @property
    def word_bits(self) -> int:
        return 64 if self.total_bits <= 64 else 128

    @property
    def ndim(self) -> int:
        return self.shape.ndim


def _spans_from_schedule(
    schedule: Sequence[tuple[int, int]], ndim: int
) -> tuple[tuple[BitSpan, ...], ...]:
    spans: list[list[BitSpan]] = [[] for _ in range(ndim)]
    for dst, (mode, rank) in enumerate(schedule):
        runs = spans[mode]
        if runs and runs[-1].dst + runs[-1].length == dst and runs[-1].src + runs[-1].length == rank:
            last = runs[-1]
            runs[-1] = BitSpan(last.src, last.dst, last.length + 1)
        else:
            runs.append(BitSpan(rank, dst, 1))
    return tuple(tuple(r) for r in spans)


def layout_from_schedule(shape, schedule: Sequence[tuple[int, int]]) -> AltoLayout:
    """Assemble a layout from an explicit LSB-first bit schedule.

    Validates that every mode contributes exactly its bit count, with bit
    ranks increasing toward the most significant end.
    """
    shape = as_shape(shape)
    schedule = tuple((int(m), int(r)) for m, r in schedule)
    seen: list[list[int]] = [[] for _ in range(shape.ndim)]
    for mode, rank in schedule:
        if not 0 <= mode < shape.ndim:
            raise ValueError(f"schedule names mode {mode} outside 0..{shape.ndim - 1}")
        seen[mode].append(rank)
    for n, ranks in enumerate(seen):
        if ranks != list(range(shape.mode_bits[n])):
            raise ValueError(
                f"mode {n} must contribute bit ranks 0..{shape.mode_bits[n] - 1} "
                f"in increasing order, got {ranks}"
            )
    masks = [0] * shape.ndim
    for dst, (mode, _) in enumerate(schedule):
        masks[mode] |= 1 << dst
    return AltoLayout(
        shape=shape,
        schedule=schedule,
        masks=tuple(masks),
        spans=_spans_from_schedule(schedule, shape.ndim),
    )


def build_layout(shape) -> AltoLayout:
    """Build the interleaved bit layout for a tensor shape.

    Bits are assigned in groups from the least significant end; group ``g``
    takes bit rank ``g`` from every mode with more than ``g`` bits, ordered
    shortest mode first (ties broken by lower mode index).
    """
    shape = as_shape(shape)
    bits = shape.mode_bits
    order = sorted(range(shape.ndim), key=lambda n: (shape.dims[n], n))
    schedule: list[tuple[int, int]] = []
    for g in range(max(bits, default=0)):
        for n in order:
            if bits[n] > g:
                schedule.append((n, g))
    return layout_from_schedule(shape, schedule)


def linearize(layout: AltoLayout, coords: Sequence[int]) -> int:
    """Map one coordinate tuple to its line position (bit gather)."""
    dims = layout.shape.dims
    if len(coords) != len(dims):
        raise ValueError(f"expected {len(dims)} coordinates, got {len(coords)}")
    pos = 0
    for n, (i, d) in enumerate(zip(coords, dims)):
        i = int(i)
        if not 0 <= i < d:
            raise IndexError(f"coordinate {i} out of range [0, {d}) in mode {n}")
        for s in layout.spans[n]:
            pos |= ((i >> s.src) & ((1 << s.length) - 1)) << s.dst
    return pos


def delinearize(layout: AltoLayout, pos: int) -> tuple[int, ...]:
    """Recover the coordinate tuple encoded in a line position (bit scatter)."""
    pos = int(pos)
    if not 0 <= pos < (1 << layout.total_bits):
        raise ValueError(f"position {pos} exceeds the {layout.total_bits}-bit line")
    out = []
    for n in range(layout.ndim):
        i = 0
        for s in layout.spans[n]:
            i |= ((pos >> s.dst) & ((1 << s.length) - 1)) << s.src
        out.append(i)
    return tuple(out)


# ---------------------------------------------------------------------------
# Array codec. Positions are uint64 of shape (M,) for 64-bit layouts and
# (M, 2) little-endian word pairs [low, high] for wider ones.


def _split_word_spans(spans: Iterable[BitSpan]) -> list[tuple[int, int, int, int]]:
    # (src, dst_within_word, length, word) with no span crossing a word edge
    parts = []
    for s in spans:
        src, dst, length = s.src, s.dst, s.length
        while length > 0:
            word, bit = divmod(dst, 64)
            take = min(length, 64 - bit)
            parts.append((src, bit, take, word))
            src += take
            dst += take
            length -= take
    return parts


def encode_coords(layout: AltoLayout, coords: np.ndarray) -> np.ndarray:
    """Vectorized linearize of an (M, N) coordinate array."""
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape[1] != layout.ndim:
        raise ValueError(f"coords must be (M, {layout.ndim}), got {coords.shape}")
    dims = np.asarray(layout.shape.dims, dtype=np.int64)
    if coords.size and ((coords < 0).any() or (coords >= dims).any()):
        bad = np.argwhere((coords < 0) | (coords >= dims))[0]
        raise IndexError(
            f"coordinate {coords[bad[0], bad[1]]} out of range in mode {bad[1]}"
        )
    m = coords.shape[0]
    nwords = layout.word_bits // 64
    words = np.zeros((m, nwords), dtype=np.uint64)
    for n in range(layout.ndim):
        col = coords[:, n].astype(np.uint64)
        for src, bit, length, word in _split_word_spans(layout.spans[n]):
            chunk = (col >> np.uint64(src)) & np.uint64((1 << length) - 1)
            words[:, word] |= chunk << np.uint64(bit)
    return words[:, 0] if nwords == 1 else words


def decode_coords(layout: AltoLayout, positions: np.ndarray) -> np.ndarray:
    """Vectorized delinearize to an (M, N) int64 coordinate array."""
    words = np.asarray(positions, dtype=np.uint64)
    if words.ndim == 1:
        words = words[:, None]
    out = np.zeros((words.shape[0], layout.ndim), dtype=np.int64)
    for n in range(layout.ndim):
        acc = np.zeros(words.shape[0], dtype=np.uint64)
        for src, bit, length, word in _split_word_spans(layout.spans[n]):
            chunk = (words[:, word] >> np.uint64(bit)) & np.uint64((1 << length) - 1)
            acc |= chunk << np.uint64(src)
        out[:, n] = acc.astype(np.int64)
    return out


def position_to_int(position) -> int:
    """Turn a stored position (scalar or word pair) into a Python int."""
    arr = np.asarray(position, dtype=np.uint64)
    if arr.ndim == 0:
        return int(arr)
    return int(arr[0]) | (int(arr[1]) << 64)


# ---------------------------------------------------------------------------
# Storage-size formulas, per nonzero element.


def alto_metadata_bits(shape) -> int:
    """Index bits per nonzero in the linearized format: sum of mode bits."""
    return as_shape(shape).total_bits


def sfc_metadata_bits(shape) -> int:
    """Index bits per nonzero under a fractal space-filling curve.

    Every mode is forced to the widest mode's bit count, which is what makes
    Z-Morton style encodings blow up on irregular shapes. Used only for
    size comparisons in stats reports.
    """
    shape = as_shape(shape)
    return shape.ndim * max(shape.mode_bits)


def coo_compression_ratio(shape, word_bits: int = 64) -> Fraction:
    """Word-aligned metadata ratio of coordinate storage to linearized storage.

    With ``word_bits`` granularity, coordinate storage needs one word group
    per mode while the linearized index packs all modes together, so the
    ratio is always >= 1.
    """
    shape = as_shape(shape)
    if word_bits not in _SUPPORTED_WORD_BITS:
        raise ValueError(f"word_bits must be one of {_SUPPORTED_WORD_BITS}")
    coo_words = sum(-(-b // word_bits) for b in shape.mode_bits)
    alto_words = -(-shape.total_bits // word_bits)
    if alto_words == 0:
        return Fraction(1)  # degenerate all-ones shape stores nothing either way
    return Fraction(coo_words, alto_words)
