"""Blockwise transformation of bit streams under a scheduled map family.

A stream of n*k bits splits into k blocks of n; block j (counting from 0)
passes through the family member named by the schedule at j.  Recovery runs
the same schedule against the inverse maps, so a receiver that knows the
family and the schedule gets the original stream back bit for bit.

Work happens on numpy arrays: blocks pack into integers with a power-of-two
matmul, go through precomputed lookup tables (one per family member, which
caps the block width at 16), and unpack with shifts.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .bitcore import InvertibleMap

MAX_STREAM_WIDTH = 16


class BitStream:
    """Immutable bit sequence backed by a uint8 array of 0/1 values."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray) -> None:
        arr = np.ascontiguousarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bit streams are one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("stream entries must be 0 or 1")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BitStream is immutable")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitStream":
        return cls(np.array(list(bits), dtype=np.uint8))

    @classmethod
    def from_packed_bytes(cls, data: bytes, nbits: int | None = None) -> "BitStream":
        """Unpack bytes low bit first; ``nbits`` trims byte-padding."""
        raw = np.frombuffer(bytes(data), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")
        if nbits is not None:
            if nbits > bits.size:
                raise ValueError(f"asked for {nbits} bits, have {bits.size}")
            bits = bits[:nbits]
        return cls(bits)

    def to_packed_bytes(self) -> bytes:
        """Pack low bit first, zero-padding the final partial byte."""
        return np.packbits(self.bits, bitorder="little").tobytes()

    def tolist(self) -> list[int]:
        return self.bits.tolist()

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitStream):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        head = "".join(str(b) for b in self.bits[:32])
        tail = "..." if len(self) > 32 else ""
        return f"BitStream({len(self)} bits: {head}{tail})"


def periodic_schedule(period: int) -> Callable[[int], int]:
    """j -> j mod period."""
    if period < 1:
        raise ValueError("period must be positive")
    return lambda j: j % period


def cycling_schedule(values: Sequence[int]) -> Callable[[int], int]:
    """Repeats a fixed value list."""
    if not values:
        raise ValueError("schedule values must be nonempty")
    vals = list(values)
    return lambda j: vals[j % len(vals)]


class StreamTransform:
    """Applies a scheduled family of invertible maps block by block."""

    def __init__(
        self, maps: Sequence[InvertibleMap], schedule: Callable[[int], int]
    ) -> None:
        if not maps:
            raise ValueError("need at least one map")
        widths = {m.width for m in maps}
        if len(widths) != 1:
            raise ValueError(f"maps mix widths {sorted(widths)}")
        (self.width,) = widths
        if self.width > MAX_STREAM_WIDTH:
            raise ValueError(
                f"block width {self.width} exceeds table cap {MAX_STREAM_WIDTH}"
            )
        self.schedule = schedule
        self._fwd = np.stack([m.to_table_array() for m in maps])
        self._inv = np.stack([m.invert().to_table_array() for m in maps])
        self._powers = np.int64(1) << np.arange(self.width, dtype=np.int64)
        self._sched: np.ndarray = np.empty(0, dtype=np.int64)

    def _schedule_array(self, nblocks: int) -> np.ndarray:
        if nblocks > self._sched.size:
            nmaps = self._fwd.shape[0]
            extra = [self.schedule(j) for j in range(self._sched.size, nblocks)]
            if any(not 0 <= v < nmaps for v in extra):
                raise ValueError("schedule produced an index outside the family")
            self._sched = np.concatenate(
                [self._sched, np.array(extra, dtype=np.int64)]
            )
        return self._sched[:nblocks]

    def _apply(self, stream: BitStream, tables: np.ndarray) -> BitStream:
        n = self.width
        if len(stream) % n:
            raise ValueError(f"stream length {len(stream)} not a multiple of {n}")
        nblocks = len(stream) // n
        if nblocks == 0:
            return stream
        values = stream.bits.reshape(nblocks, n).astype(np.int64) @ self._powers
        out_vals = tables[self._schedule_array(nblocks), values]
        out_bits = ((out_vals[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(
            np.uint8
        )
        return BitStream(out_bits.reshape(-1))

    def transform(self, stream: BitStream) -> BitStream:
        return self._apply(stream, self._fwd)

    def recover(self, stream: BitStream) -> BitStream:
        return self._apply(stream, self._inv)
