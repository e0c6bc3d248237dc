"""Sparse tensor containers, file formats, and dataset statistics.

``CooTensor`` is the canonical list-of-nonzeros form: coordinates are
zero-based, duplicates summed, explicit zeros dropped, entries ordered
lexicographically. ``AltoTensor`` stores the same nonzeros as sorted line
positions under a bit-interleaved layout, which is the form every kernel
in this package consumes.

Text I/O follows the FROSTT ``.tns`` convention (one-based indices, one
nonzero per line); the binary format is documented in ``write_alto``.
"""

from __future__ import annotations

import io
import math
import struct
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np

from .encoding import (
    AltoLayout,
    TensorShape,
    alto_metadata_bits,
    as_shape,
    build_layout,
    coo_compression_ratio,
    decode_coords,
    encode_coords,
    layout_from_schedule,
    position_to_int,
    sfc_metadata_bits,
)

ALTO_MAGIC = b"ALTO"
ALTO_VERSION = 1

# fiber reuse (nonzeros per target row) class thresholds
REUSE_LIMITED_BELOW = 5.0
REUSE_HIGH_ABOVE = 8.0


class ParseError(ValueError):
    """Malformed tensor text input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class AltoFormatError(ValueError):
    """Corrupt or unsupported binary tensor file."""


class CooTensor:
    """Canonical coordinate-format sparse tensor."""

    __slots__ = ("shape", "coords", "values")

    def __init__(self, shape, coords, values):
        shape = as_shape(shape)
        coords = np.ascontiguousarray(np.asarray(coords, dtype=np.int64))
        values = np.asarray(values, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != shape.ndim:
            raise ValueError(
                f"coords must have shape (M, {shape.ndim}), got {coords.shape}"
            )
        if values.shape != (coords.shape[0],):
            raise ValueError("values must be a vector matching coords rows")
        dims = np.asarray(shape.dims, dtype=np.int64)
        if coords.size and ((coords < 0).any() or (coords >= dims).any()):
            raise ValueError("coordinate out of range for shape")
        if not np.isfinite(values).all():
            raise ValueError("tensor values must be finite")
        coords, values = _canonicalize(coords, values)
        self.shape = shape
        self.coords = coords
        self.values = values

    @property
    def nnz(self) -> int:
        return self.values.shape[0]

    @property
    def ndim(self) -> int:
        return self.shape.ndim

    @classmethod
    def from_dense(cls, array) -> "CooTensor":
        array = np.asarray(array, dtype=np.float64)
        coords = np.argwhere(array != 0)
        return cls(array.shape, coords, array[tuple(coords.T)])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape.dims, dtype=np.float64)
        out[tuple(self.coords.T)] = self.values
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, CooTensor):
            return NotImplemented
        return (
            self.shape.dims == other.shape.dims
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"CooTensor(shape={self.shape.dims}, nnz={self.nnz})"


def _canonicalize(coords: np.ndarray, values: np.ndarray):
    """Sort lexicographically, sum duplicate coordinates, drop exact zeros."""
    if coords.shape[0] == 0:
        return coords, values
    uniq, inverse = np.unique(coords, axis=0, return_inverse=True)
    summed = np.zeros(uniq.shape[0], dtype=np.float64)
    np.add.at(summed, inverse.ravel(), values)
    keep = summed != 0.0
    return np.ascontiguousarray(uniq[keep]), summed[keep]


class AltoTensor:
    """Nonzeros as sorted line positions plus values under a fixed layout."""

    __slots__ = ("layout", "positions", "values", "_coords", "_segments", "_views")

    def __init__(self, layout: AltoLayout, positions, values, _validate: bool = True):
        positions = np.asarray(positions, dtype=np.uint64)
        values = np.asarray(values, dtype=np.float64)
        if layout.word_bits == 64:
            if positions.ndim != 1:
                raise ValueError("64-bit layouts store positions as a flat array")
        elif positions.ndim != 2 or positions.shape[1] != 2:
            raise ValueError("128-bit layouts store positions as (M, 2) word pairs")
        if values.shape[0] != positions.shape[0]:
            raise ValueError("positions and values must have equal length")
        self.layout = layout
        self.positions = positions
        self.values = values
        self._coords = None
        self._segments = {}
        self._views = {}
        if _validate:
            self._check_invariants()

    def _check_invariants(self):
        if self.nnz == 0:
            raise ValueError("linearized tensor must hold at least one nonzero")
        if not _positions_strictly_increasing(self.positions):
            raise ValueError("positions must be strictly increasing")
        dims = np.asarray(self.shape.dims, dtype=np.int64)
        c = self.coords
        if (c < 0).any() or (c >= dims).any():
            raise ValueError("a position decodes outside the tensor shape")
        if not np.isfinite(self.values).all():
            raise ValueError("tensor values must be finite")

    @property
    def shape(self) -> TensorShape:
        return self.layout.shape

    @property
    def ndim(self) -> int:
        return self.layout.ndim

    @property
    def nnz(self) -> int:
        return self.values.shape[0]

    @property
    def coords(self) -> np.ndarray:
        """Decoded (M, N) coordinates, cached after the first access."""
        if self._coords is None:
            self._coords = decode_coords(self.layout, self.positions)
        return self._coords

    def position_ints(self) -> list[int]:
        """Positions as Python ints regardless of storage width."""
        if self.positions.ndim == 1:
            return [int(p) for p in self.positions]
        return [position_to_int(p) for p in self.positions]

    @classmethod
    def from_coo(cls, coo: CooTensor, timings: dict | None = None) -> "AltoTensor":
        """Linearize then order: encode every coordinate tuple and sort.

        When a ``timings`` dict is given, the two stages are timed into the
        ``linearize_s`` and ``sort_s`` keys (sorting the single-key positions
        dominates generation cost and is worth reporting separately).
        """
        if coo.nnz == 0:
            raise ValueError("cannot linearize an empty tensor")
        t0 = time.perf_counter()
        layout = build_layout(coo.shape)
        positions = encode_coords(layout, coo.coords)
        t1 = time.perf_counter()
        if positions.ndim == 1:
            order = np.argsort(positions, kind="stable")
        else:
            order = np.lexsort((positions[:, 0], positions[:, 1]))
        t2 = time.perf_counter()
        if timings is not None:
            timings["linearize_s"] = t1 - t0
            timings["sort_s"] = t2 - t1
        return cls(layout, positions[order], coo.values[order], _validate=False)

    def to_coo(self) -> CooTensor:
        return CooTensor(self.shape, self.coords, self.values)

    def __repr__(self) -> str:
        return (
            f"AltoTensor(shape={self.shape.dims}, nnz={self.nnz}, "
            f"bits={self.layout.total_bits})"
        )


def _positions_strictly_increasing(positions: np.ndarray) -> bool:
    if positions.shape[0] <= 1:
        return True
    if positions.ndim == 1:
        return bool((positions[1:] > positions[:-1]).all())
    hi, lo = positions[:, 1], positions[:, 0]
    hi_up = hi[1:] > hi[:-1]
    tie = hi[1:] == hi[:-1]
    return bool((hi_up | (tie & (lo[1:] > lo[:-1]))).all())


def alto_from_coo(coo: CooTensor) -> AltoTensor:
    return AltoTensor.from_coo(coo)


def alto_to_coo(alto: AltoTensor) -> CooTensor:
    return alto.to_coo()


# ---------------------------------------------------------------------------
# FROSTT text format


def parse_frostt(source, dims: Iterable[int] | None = None) -> CooTensor:
    """Parse FROSTT-style text: one-based indices then a value per line.

    ``#`` comments and blank lines are skipped. Files carry no header; the
    shape is the per-mode maximum index unless ``dims`` overrides it.
    """
    stream = _as_text_stream(source)
    coords: list[list[int]] = []
    values: list[float] = []
    ndim = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if ndim is None:
            ndim = len(tokens) - 1
            if ndim < 1:
                raise ParseError("expected at least one index and a value", lineno)
        if len(tokens) != ndim + 1:
            raise ParseError(
                f"expected {ndim + 1} fields, got {len(tokens)}", lineno
            )
        try:
            idx = [int(t) for t in tokens[:-1]]
        except ValueError:
            raise ParseError(f"bad index in {tokens[:-1]}", lineno) from None
        if any(i <= 0 for i in idx):
            raise ParseError(f"indices are one-based, got {idx}", lineno)
        try:
            val = float(tokens[-1])
        except ValueError:
            raise ParseError(f"bad value {tokens[-1]!r}", lineno) from None
        if not math.isfinite(val):
            raise ParseError(f"non-finite value {tokens[-1]!r}", lineno)
        coords.append(idx)
        values.append(val)
    if not coords:
        raise ParseError("no nonzero entries found")
    arr = np.asarray(coords, dtype=np.int64) - 1
    if dims is None:
        shape = TensorShape(arr.max(axis=0) + 1)
    else:
        shape = as_shape(dims)
        if shape.ndim != arr.shape[1]:
            raise ParseError(
                f"file has {arr.shape[1]} modes but dims has {shape.ndim}"
            )
    coo = CooTensor(shape, arr, np.asarray(values))
    if coo.nnz == 0:
        raise ParseError("tensor is empty after summing duplicates and dropping zeros")
    return coo


def write_frostt(coo: CooTensor, sink) -> None:
    """Emit canonical entries as one-based FROSTT text (round-trips parse)."""
    stream, close = _as_writable_text(sink)
    try:
        for row, val in zip(coo.coords, coo.values):
            stream.write(" ".join(str(i + 1) for i in row))
            stream.write(f" {float(val)!r}\n")
    finally:
        if close:
            stream.close()


def _as_text_stream(source) -> TextIO:
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode()
        return io.StringIO(data)
    return open(source, "r")  # str or PathLike path


def _as_writable_text(sink):
    if hasattr(sink, "write"):
        return sink, False
    return open(sink, "w"), True


# ---------------------------------------------------------------------------
# Binary format
#
#   "ALTO" | u32 version | u8 word_bits | u8 ndim | u16 reserved
#   | ndim * u64 dims | u64 nnz
#   | total_bits * u8 schedule (mode id per line bit, LSB first)
#   | nnz * position words (8 or 16 bytes each, little-endian)
#   | nnz * f64 values (little-endian)


def write_alto(alto: AltoTensor, sink) -> None:
    stream, close = _as_writable_binary(sink, "wb")
    try:
        layout = alto.layout
        stream.write(ALTO_MAGIC)
        stream.write(
            struct.pack(
                "<IBBH", ALTO_VERSION, layout.word_bits, layout.ndim, 0
            )
        )
        stream.write(
            struct.pack(f"<{layout.ndim}Q", *layout.shape.dims)
        )
        stream.write(struct.pack("<Q", alto.nnz))
        stream.write(bytes(mode for mode, _ in layout.schedule))
        stream.write(np.ascontiguousarray(alto.positions, dtype="<u8").tobytes())
        stream.write(np.ascontiguousarray(alto.values, dtype="<f8").tobytes())
    finally:
        if close:
            stream.close()


def read_alto(source) -> AltoTensor:
    stream, close = _as_writable_binary(source, "rb")
    try:
        data = stream.read()
    finally:
        if close:
            stream.close()
    if data[:4] != ALTO_MAGIC:
        raise AltoFormatError("bad magic; not a linearized tensor file")
    off = 4
    version, word_bits, ndim, reserved = _unpack(data, off, "<IBBH")
    off += 8
    if version != ALTO_VERSION:
        raise AltoFormatError(f"unsupported version {version}")
    if word_bits not in (64, 128):
        raise AltoFormatError(f"unsupported position width {word_bits}")
    if ndim < 1 or reserved != 0:
        raise AltoFormatError("corrupt header")
    dims = _unpack(data, off, f"<{ndim}Q")
    off += 8 * ndim
    (nnz,) = _unpack(data, off, "<Q")
    off += 8
    shape = as_shape(dims)
    total_bits = shape.total_bits
    if word_bits != (64 if total_bits <= 64 else 128):
        raise AltoFormatError("position width does not match the shape")
    mode_ids = data[off : off + total_bits]
    if len(mode_ids) != total_bits:
        raise AltoFormatError("truncated schedule")
    off += total_bits
    ranks = [0] * ndim
    schedule = []
    for m in mode_ids:
        if m >= ndim:
            raise AltoFormatError(f"schedule names mode {m} of {ndim}")
        schedule.append((m, ranks[m]))
        ranks[m] += 1
    try:
        layout = layout_from_schedule(shape, schedule)
    except ValueError as exc:
        raise AltoFormatError(f"invalid schedule: {exc}") from None
    words_per = word_bits // 64
    pos_bytes = nnz * 8 * words_per
    val_bytes = nnz * 8
    if len(data) - off < pos_bytes + val_bytes:
        raise AltoFormatError("truncated payload")
    positions = np.frombuffer(data, dtype="<u8", count=nnz * words_per, offset=off)
    off += pos_bytes
    values = np.frombuffer(data, dtype="<f8", count=nnz, offset=off)
    if words_per == 2:
        positions = positions.reshape(nnz, 2)
    try:
        return AltoTensor(layout, positions.copy(), values.copy())
    except ValueError as exc:
        raise AltoFormatError(f"invariant violation: {exc}") from None


def _unpack(data: bytes, offset: int, fmt: str):
    size = struct.calcsize(fmt)
    if len(data) - offset < size:
        raise AltoFormatError("truncated header")
    return struct.unpack_from(fmt, data, offset)


def _as_writable_binary(sink, mode: str):
    if hasattr(sink, "read" if "r" in mode else "write"):
        return sink, False
    return open(sink, mode), True


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class TensorStats:
    """Density, per-mode fiber reuse, and metadata storage for one tensor."""

    shape: TensorShape
    nnz: int
    word_bits: int
    density: float
    fiber_reuse: tuple[float, ...]
    mode_classes: tuple[str, ...]
    overall_class: str
    s_coo_bits: int
    s_alto_bits: int
    s_sfc_bits: int
    compression_ratio: Fraction

    @classmethod
    def from_shape_nnz(cls, shape, nnz: int, word_bits: int = 64) -> "TensorStats":
        shape = as_shape(shape)
        if nnz < 1:
            raise ValueError("nnz must be positive")
        reuse = tuple(nnz / d for d in shape.dims)
        classes = tuple(classify_reuse(r) for r in reuse)
        coo_words = sum(-(-b // word_bits) for b in shape.mode_bits)
        return cls(
            shape=shape,
            nnz=nnz,
            word_bits=word_bits,
            density=nnz / math.prod(shape.dims),
            fiber_reuse=reuse,
            mode_classes=classes,
            overall_class=classes[int(np.argmin(reuse))],
            s_coo_bits=nnz * word_bits * coo_words,
            s_alto_bits=nnz * alto_metadata_bits(shape),
            s_sfc_bits=nnz * sfc_metadata_bits(shape),
            compression_ratio=coo_compression_ratio(shape, word_bits),
        )

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.shape.dims),
            "nnz": self.nnz,
            "word_bits": self.word_bits,
            "density": self.density,
            "fiber_reuse": list(self.fiber_reuse),
            "mode_classes": list(self.mode_classes),
            "overall_class": self.overall_class,
            "s_coo_bits": self.s_coo_bits,
            "s_alto_bits": self.s_alto_bits,
            "s_sfc_bits": self.s_sfc_bits,
            "compression_ratio": float(self.compression_ratio),
            "compression_ratio_exact": [
                self.compression_ratio.numerator,
                self.compression_ratio.denominator,
            ],
        }


def classify_reuse(reuse: float) -> str:
    if reuse < REUSE_LIMITED_BELOW:
        return "limited"
    if reuse <= REUSE_HIGH_ABOVE:
        return "medium"
    return "high"


def compute_stats(tensor, word_bits: int = 64) -> TensorStats:
    """Stats for a ``CooTensor`` or ``AltoTensor``."""
    return TensorStats.from_shape_nnz(tensor.shape, tensor.nnz, word_bits)
