"""Dense 0/1 matrices, Hamming distance and the plain-text matrix format.

The text format is one row per line made of the characters ``0`` and ``1``
with no separators, ``\\n`` line endings and a trailing newline. Rows are
monitors (or sources) and columns are time slots.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from orsep.errors import DimensionError, ParseError


@dataclass(frozen=True, eq=False)
class BinaryMatrix:
    """Immutable row-major 0/1 matrix backed by a read-only ``uint8`` array."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-d array, got shape {arr.shape}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("binary matrix cells must be 0 or 1")
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> BinaryMatrix:
        return cls(np.zeros((rows, cols), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def row(self, i: int) -> np.ndarray:
        return self.bits[i]

    def col(self, t: int) -> np.ndarray:
        return self.bits[:, t]

    def take_rows(self, idx) -> BinaryMatrix:
        return BinaryMatrix(self.bits[np.asarray(idx, dtype=int)])

    def take_cols(self, idx) -> BinaryMatrix:
        return BinaryMatrix(self.bits[:, np.asarray(idx, dtype=int)])

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.bits
        return self.bits.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, BinaryMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"BinaryMatrix({self.rows}x{self.cols})"


def hamming_distance(a, b) -> int:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def dumps_matrix(m: BinaryMatrix) -> str:
    bits = np.asarray(m, dtype=np.uint8)
    return "".join("".join("1" if v else "0" for v in row) + "\n" for row in bits)


def loads_matrix(text: str) -> BinaryMatrix:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        for ch in line:
            if ch not in "01":
                raise ParseError(f"illegal character {ch!r}", line=lineno)
        if width is None:
            width = len(line)
        elif len(line) != width:
            raise DimensionError(f"line {lineno}: ragged row of length {len(line)}, expected {width}")
        rows.append([1 if ch == "1" else 0 for ch in line])
    if not rows:
        return BinaryMatrix.zeros(0, 0)
    return BinaryMatrix(np.array(rows, dtype=np.uint8).reshape(len(rows), width))


def read_matrix(path: str | os.PathLike) -> BinaryMatrix:
    with open(path, encoding="ascii", newline="") as fh:
        return loads_matrix(fh.read())


def write_matrix(m: BinaryMatrix, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(dumps_matrix(m))
