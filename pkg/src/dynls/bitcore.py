"""Bit vectors, boolean functions, level sets, and invertible maps on {0,1}^n.

Canonical bit order everywhere: coordinate ``i`` of a vector is bit ``i`` of
its little-endian integer encoding, and every truth table / permutation table
is indexed by that encoding.  Widths are capped at 24 so that full-table
expansion and exhaustive checks stay within memory and time budgets.

Three interchangeable representations of a bijection on {0,1}^n are provided:

* :class:`PermTable` -- explicit permutation table; the normalization target
  (every representation can expand to it for equality testing).
* :class:`Affine` -- ``x -> A.x ^ c`` with ``A`` invertible over GF(2).
* :class:`XorFamily` -- ``(x, b) -> (x ^ mask_b, b ^ flip)`` where ``b`` is
  coordinate ``n-1`` and the masks cover the remaining ``n-1`` coordinates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_WIDTH = 24


class NotABijectionError(ValueError):
    """A claimed invertible map is not a bijection."""


class MapFormatError(ValueError):
    """A textual map file could not be parsed."""


def _check_width(width: int) -> None:
    if not 1 <= width <= MAX_WIDTH:
        raise ValueError(f"width must be in 1..{MAX_WIDTH}, got {width}")


@dataclass(frozen=True, order=True)
class BitVec:
    """Fixed-width bit string; coordinate i is bit i of ``value``."""

    width: int
    value: int

    def __post_init__(self) -> None:
        _check_width(self.width)
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value {self.value} out of range for width {self.width}")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        """Build from coordinates x0, x1, ... in order."""
        seq = list(bits)
        value = 0
        for i, b in enumerate(seq):
            if b not in (0, 1):
                raise ValueError(f"bit {i} is {b}, expected 0 or 1")
            value |= b << i
        return cls(len(seq), value)

    def bit(self, i: int) -> int:
        if not 0 <= i < self.width:
            raise IndexError(f"coordinate {i} out of range for width {self.width}")
        return (self.value >> i) & 1

    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> i) & 1 for i in range(self.width))

    def concat(self, other: "BitVec") -> "BitVec":
        """Self occupies the low coordinates, ``other`` the high ones."""
        return BitVec(self.width + other.width, self.value | (other.value << self.width))

    def split(self, k: int) -> tuple["BitVec", "BitVec"]:
        """Split into (coordinates 0..k-1, coordinates k..width-1)."""
        if not 1 <= k < self.width:
            raise ValueError(f"split point {k} out of range for width {self.width}")
        return (
            BitVec(k, self.value & ((1 << k) - 1)),
            BitVec(self.width - k, self.value >> k),
        )

    def __xor__(self, other: "BitVec") -> "BitVec":
        if self.width != other.width:
            raise ValueError(f"width mismatch: {self.width} vs {other.width}")
        return BitVec(self.width, self.value ^ other.value)

    def __index__(self) -> int:
        return self.value

    def __str__(self) -> str:
        # most-significant coordinate first, the usual written order
        return format(self.value, f"0{self.width}b")


@dataclass(frozen=True)
class BoolFn:
    """Boolean function given by its full truth table (entry x = f(x))."""

    domain_width: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        _check_width(self.domain_width)
        if len(self.table) != 1 << self.domain_width:
            raise ValueError(
                f"table length {len(self.table)} != 2^{self.domain_width}"
            )
        if any(v not in (0, 1) for v in self.table):
            raise ValueError("table entries must be bits")

    @classmethod
    def from_callable(cls, domain_width: int, fn: Callable[[BitVec], int]) -> "BoolFn":
        return cls(
            domain_width,
            tuple(int(fn(BitVec(domain_width, x))) for x in range(1 << domain_width)),
        )

    @classmethod
    def from_members(cls, domain_width: int, members: Iterable[BitVec | int]) -> "BoolFn":
        """Indicator function of a set of points."""
        hot = {int(m) for m in members}
        return cls(domain_width, tuple(1 if x in hot else 0 for x in range(1 << domain_width)))

    @classmethod
    def constant(cls, domain_width: int, value: int) -> "BoolFn":
        return cls(domain_width, (int(value),) * (1 << domain_width))

    def __call__(self, x: BitVec) -> int:
        if x.width != self.domain_width:
            raise ValueError(
                f"input width {x.width} != domain width {self.domain_width}"
            )
        return self.table[x.value]


@dataclass(frozen=True)
class LevelSet:
    """All points where ``source`` takes ``value``; checkable by enumeration."""

    source: BoolFn
    value: int
    members: frozenset[BitVec]

    def __contains__(self, x: BitVec) -> bool:
        return x in self.members

    def __len__(self) -> int:
        return len(self.members)

    def indicator(self) -> BoolFn:
        """Boolean function that is 1 exactly on the members."""
        return BoolFn.from_members(self.source.domain_width, self.members)


def level_set(f: BoolFn, c: int) -> LevelSet:
    """The preimage of ``c`` under ``f``, fully enumerated."""
    if c not in (0, 1):
        raise ValueError(f"level value must be a bit, got {c}")
    w = f.domain_width
    members = frozenset(BitVec(w, x) for x in range(1 << w) if f.table[x] == c)
    return LevelSet(f, c, members)


# ---------------------------------------------------------------------------
# GF(2) linear algebra on integer row masks (row i bit j = A[i][j])
# ---------------------------------------------------------------------------


def parity(x: int) -> int:
    return x.bit_count() & 1


def gf2_apply_rows(rows: Sequence[int], x: int) -> int:
    y = 0
    for i, row in enumerate(rows):
        y |= parity(row & x) << i
    return y


def gf2_inverse_rows(rows: Sequence[int], width: int) -> tuple[int, ...] | None:
    """Inverse of the row-mask matrix over GF(2), or None if singular."""
    aug = [rows[i] | (1 << (width + i)) for i in range(width)]
    r = 0
    for col in range(width):
        piv = next((i for i in range(r, width) if (aug[i] >> col) & 1), None)
        if piv is None:
            return None
        aug[r], aug[piv] = aug[piv], aug[r]
        for i in range(width):
            if i != r and (aug[i] >> col) & 1:
                aug[i] ^= aug[r]
        r += 1
    mask = (1 << width) - 1
    return tuple((aug[i] >> width) & mask for i in range(width))


def gf2_matmul_rows(r1: Sequence[int], r2: Sequence[int]) -> tuple[int, ...]:
    """Row masks of the product: (r1 as matrix) . (r2 as matrix)."""
    out = []
    for row in r1:
        acc = 0
        j = 0
        while row:
            if row & 1:
                acc ^= r2[j]
            row >>= 1
            j += 1
        out.append(acc)
    return tuple(out)


# ---------------------------------------------------------------------------
# Invertible maps
# ---------------------------------------------------------------------------


class InvertibleMap:
    """A bijection on {0,1}^width.  Subclasses implement the scalar core."""

    width: int

    def apply_int(self, x: int) -> int:
        raise NotImplementedError

    def invert(self) -> "InvertibleMap":
        raise NotImplementedError

    def apply(self, x: BitVec) -> BitVec:
        if x.width != self.width:
            raise ValueError(f"input width {x.width} != map width {self.width}")
        return BitVec(self.width, self.apply_int(x.value))

    def compose(self, other: "InvertibleMap") -> "InvertibleMap":
        """The map x -> self(other(x))."""
        if self.width != other.width:
            raise ValueError(f"width mismatch: {self.width} vs {other.width}")
        size = 1 << self.width
        return PermTable(
            self.width,
            tuple(self.apply_int(other.apply_int(x)) for x in range(size)),
            _trusted=True,
        )

    def to_table_array(self) -> np.ndarray:
        """Full permutation table as an int64 array (vectorized paths)."""
        return np.fromiter(
            (self.apply_int(x) for x in range(1 << self.width)),
            dtype=np.int64,
            count=1 << self.width,
        )

    def to_perm_table(self) -> "PermTable":
        return PermTable(self.width, tuple(int(v) for v in self.to_table_array()), _trusted=True)


@dataclass(frozen=True)
class PermTable(InvertibleMap):
    """Explicit permutation table; entry x is the image of x."""

    width: int
    table: tuple[int, ...]
    _trusted: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_width(self.width)
        size = 1 << self.width
        if len(self.table) != size:
            raise ValueError(f"table length {len(self.table)} != 2^{self.width}")
        if not self._trusted and not is_bijection(self.table):
            raise NotABijectionError("permutation table has duplicate entries")

    def apply_int(self, x: int) -> int:
        return self.table[x]

    def invert(self) -> "PermTable":
        inv = [0] * len(self.table)
        for x, y in enumerate(self.table):
            inv[y] = x
        return PermTable(self.width, tuple(inv), _trusted=True)

    def compose(self, other: InvertibleMap) -> "PermTable":
        if self.width != other.width:
            raise ValueError(f"width mismatch: {self.width} vs {other.width}")
        if isinstance(other, PermTable):
            return PermTable(
                self.width,
                tuple(self.table[y] for y in other.table),
                _trusted=True,
            )
        return super().compose(other)  # type: ignore[return-value]

    def to_table_array(self) -> np.ndarray:
        return np.array(self.table, dtype=np.int64)


@dataclass(frozen=True)
class Affine(InvertibleMap):
    """x -> A.x ^ offset with A given as row masks and invertible over GF(2)."""

    width: int
    rows: tuple[int, ...]
    offset: int

    def __post_init__(self) -> None:
        _check_width(self.width)
        limit = 1 << self.width
        if len(self.rows) != self.width:
            raise ValueError(f"expected {self.width} rows, got {len(self.rows)}")
        if any(not 0 <= r < limit for r in self.rows) or not 0 <= self.offset < limit:
            raise ValueError("row masks and offset must fit the width")
        if gf2_inverse_rows(self.rows, self.width) is None:
            raise NotABijectionError("matrix is singular over GF(2)")

    @classmethod
    def identity(cls, width: int) -> "Affine":
        return cls(width, tuple(1 << i for i in range(width)), 0)

    def apply_int(self, x: int) -> int:
        return gf2_apply_rows(self.rows, x) ^ self.offset

    def invert(self) -> "Affine":
        inv = gf2_inverse_rows(self.rows, self.width)
        assert inv is not None  # construction guarantees invertibility
        return Affine(self.width, inv, gf2_apply_rows(inv, self.offset))

    def compose(self, other: InvertibleMap) -> InvertibleMap:
        if isinstance(other, Affine):
            if self.width != other.width:
                raise ValueError(f"width mismatch: {self.width} vs {other.width}")
            rows = gf2_matmul_rows(self.rows, other.rows)
            return Affine(self.width, rows, gf2_apply_rows(self.rows, other.offset) ^ self.offset)
        return super().compose(other)

    def to_table_array(self) -> np.ndarray:
        w = self.width
        x = np.arange(1 << w, dtype=np.int64)
        bits = (x[:, None] >> np.arange(w, dtype=np.int64)) & 1
        mat = (np.array(self.rows, dtype=np.int64)[:, None] >> np.arange(w, dtype=np.int64)) & 1
        ybits = (bits @ mat.T) & 1
        ybits ^= (self.offset >> np.arange(w, dtype=np.int64)) & 1
        return ybits @ (np.int64(1) << np.arange(w, dtype=np.int64))


@dataclass(frozen=True)
class XorFamily(InvertibleMap):
    """(x, b) -> (x ^ mask_b, b ^ flip); b is coordinate width-1."""

    width: int
    mask0: int
    mask1: int
    flip: int

    def __post_init__(self) -> None:
        _check_width(self.width)
        if self.width < 2:
            raise ValueError("XorFamily needs width >= 2")
        half = 1 << (self.width - 1)
        if not (0 <= self.mask0 < half and 0 <= self.mask1 < half):
            raise ValueError("masks must fit width-1 coordinates")
        if self.flip not in (0, 1):
            raise ValueError("flip must be a bit")

    def apply_int(self, x: int) -> int:
        low = x & ((1 << (self.width - 1)) - 1)
        b = x >> (self.width - 1)
        mask = self.mask1 if b else self.mask0
        return (low ^ mask) | ((b ^ self.flip) << (self.width - 1))

    def invert(self) -> "XorFamily":
        # inverse of (y, c) is (y ^ mask_{c^flip}, c ^ flip): masks swap iff flip
        if self.flip:
            return XorFamily(self.width, self.mask1, self.mask0, self.flip)
        return self

    def compose(self, other: InvertibleMap) -> InvertibleMap:
        if isinstance(other, XorFamily):
            if self.width != other.width:
                raise ValueError(f"width mismatch: {self.width} vs {other.width}")
            outer = (self.mask0, self.mask1)
            return XorFamily(
                self.width,
                other.mask0 ^ outer[other.flip],
                other.mask1 ^ outer[1 ^ other.flip],
                self.flip ^ other.flip,
            )
        return super().compose(other)

    def to_table_array(self) -> np.ndarray:
        w = self.width
        half = 1 << (w - 1)
        x = np.arange(1 << w, dtype=np.int64)
        b = x >> (w - 1)
        low = x & (half - 1)
        mask = np.where(b == 1, self.mask1, self.mask0)
        return (low ^ mask) | ((b ^ self.flip) << (w - 1))


def identity_map(width: int) -> Affine:
    return Affine.identity(width)


def permute_coordinates(width: int, source_of: Sequence[int]) -> PermTable:
    """Map whose output coordinate j copies input coordinate ``source_of[j]``."""
    if sorted(source_of) != list(range(width)):
        raise ValueError("source_of must be a permutation of the coordinates")
    table = []
    for x in range(1 << width):
        y = 0
        for j, src in enumerate(source_of):
            y |= ((x >> src) & 1) << j
        table.append(y)
    return PermTable(width, tuple(table), _trusted=True)


def swap_coordinates(width: int, i: int, j: int) -> PermTable:
    source_of = list(range(width))
    source_of[i], source_of[j] = source_of[j], source_of[i]
    return permute_coordinates(width, source_of)


def is_bijection(table: Sequence[int | BitVec]) -> bool:
    """True iff all entries are distinct (and the table is a full domain)."""
    seen = {int(v) for v in table}
    return len(seen) == len(table)


def random_affine_invertible(width: int, seed: int) -> Affine:
    """Seeded random affine bijection; the matrix is certified by elimination."""
    _check_width(width)
    rnd = random.Random(seed)
    while True:
        rows = tuple(rnd.getrandbits(width) for _ in range(width))
        if gf2_inverse_rows(rows, width) is not None:
            return Affine(width, rows, rnd.getrandbits(width))


# ---------------------------------------------------------------------------
# Textual map format (one map per file)
# ---------------------------------------------------------------------------


def map_to_text(m: InvertibleMap) -> str:
    """Serialize a map: header ``width=<n> kind=<perm|affine|xorfam>`` + body."""
    if isinstance(m, PermTable):
        body = "\n".join(f"{x:x} {y:x}" for x, y in enumerate(m.table))
        return f"width={m.width} kind=perm\n{body}\n"
    if isinstance(m, Affine):
        body = "\n".join(f"{row:x}" for row in m.rows)
        return f"width={m.width} kind=affine\n{body}\n{m.offset:x}\n"
    if isinstance(m, XorFamily):
        return (
            f"width={m.width} kind=xorfam\n"
            f"mask0={m.mask0:x} mask1={m.mask1:x} flip={m.flip}\n"
        )
    raise TypeError(f"unknown map representation: {type(m).__name__}")


def map_from_text(text: str) -> InvertibleMap:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MapFormatError("empty map file")
    header = dict(
        part.split("=", 1) for part in lines[0].split() if "=" in part
    )
    try:
        width = int(header["width"])
        kind = header["kind"]
    except KeyError as exc:
        raise MapFormatError(f"header missing {exc} field") from None
    body = lines[1:]
    try:
        if kind == "perm":
            if len(body) != 1 << width:
                raise MapFormatError(
                    f"perm body has {len(body)} rows, expected {1 << width}"
                )
            table = [0] * (1 << width)
            for ln in body:
                xs, ys = ln.split()
                table[int(xs, 16)] = int(ys, 16)
            return PermTable(width, tuple(table))
        if kind == "affine":
            if len(body) != width + 1:
                raise MapFormatError(
                    f"affine body has {len(body)} rows, expected {width + 1}"
                )
            rows = tuple(int(ln, 16) for ln in body[:-1])
            return Affine(width, rows, int(body[-1], 16))
        if kind == "xorfam":
            if len(body) != 1:
                raise MapFormatError("xorfam body must be a single line")
            fields = dict(part.split("=", 1) for part in body[0].split())
            return XorFamily(
                width,
                int(fields["mask0"], 16),
                int(fields["mask1"], 16),
                int(fields["flip"]),
            )
    except MapFormatError:
        raise
    except (ValueError, KeyError) as exc:
        raise MapFormatError(f"malformed map body: {exc}") from exc
    raise MapFormatError(f"unknown map kind {kind!r}")


def write_map(m: InvertibleMap, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(map_to_text(m))


def read_map(path) -> InvertibleMap:
    with open(path, "r", encoding="ascii") as fh:
        return map_from_text(fh.read())
