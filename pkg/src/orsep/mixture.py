"""Generative OR-mixture model.

Monitors are indexed ``0..m-1`` in code; a source column is identified by the
subset bitmask ``s`` whose bit ``k`` is set iff monitor ``k`` sees the source.
The canonical ``m x (2**m - 1)`` mixing matrix lists columns ``s = 1..2**m-1``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from orsep.binmat import BinaryMatrix
from orsep.errors import CapacityError, DimensionError, ParameterError

MAX_CANONICAL_MONITORS = 20
MAX_EXACT_SOURCES = 24


def bitmask_column(s: int, m: int) -> np.ndarray:
    return np.array([(s >> k) & 1 for k in range(m)], dtype=np.uint8)


def column_bitmask(col) -> int:
    return int(sum(int(v) << k for k, v in enumerate(np.asarray(col).ravel())))


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Monitor-by-source adjacency; ``g[i, j] == 1`` iff monitor i detects source j."""

    g: np.ndarray

    def __post_init__(self):
        arr = np.array(self.g, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"mixing matrix must be 2-d, got shape {arr.shape}")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("mixing matrix cells must be 0 or 1")
        if arr.shape[1] and (arr.sum(axis=0) == 0).any():
            raise ValueError("mixing matrix has an all-zero column")
        arr.setflags(write=False)
        object.__setattr__(self, "g", arr)

    @classmethod
    def from_bitmasks(cls, m: int, masks: Sequence[int]) -> MixingMatrix:
        g = np.zeros((m, len(masks)), dtype=np.uint8)
        for j, s in enumerate(masks):
            s = int(s)
            if s <= 0 or s >= 1 << m:
                raise ValueError(f"bitmask {s} out of range for m={m}")
            g[:, j] = bitmask_column(s, m)
        return cls(g)

    @property
    def m(self) -> int:
        return self.g.shape[0]

    @property
    def n(self) -> int:
        return self.g.shape[1]

    def bitmasks(self) -> list[int]:
        weights = 1 << np.arange(self.m, dtype=np.int64)
        return [int(v) for v in weights @ self.g.astype(np.int64)] if self.m else [0] * self.n

    def __eq__(self, other):
        if not isinstance(other, MixingMatrix):
            return NotImplemented
        return self.g.shape == other.g.shape and bool(np.array_equal(self.g, other.g))

    def __repr__(self):
        return f"MixingMatrix(m={self.m}, n={self.n}, columns={self.bitmasks()})"


@dataclass(frozen=True, eq=False)
class SourceModel:
    mixing: MixingMatrix
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float, copy=True).ravel()
        if p.size != self.mixing.n:
            raise DimensionError(f"{p.size} probabilities for {self.mixing.n} sources")
        if ((p < 0) | (p > 1) | ~np.isfinite(p)).any():
            raise ParameterError("source probabilities must lie in [0, 1]")
        masks = self.mixing.bitmasks()
        if len(set(masks)) != len(masks):
            raise ValueError("sources with identical monitor sets are indistinguishable")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_bitmasks(cls, m: int, masks: Sequence[int], p: Sequence[float]) -> SourceModel:
        return cls(MixingMatrix.from_bitmasks(m, masks), np.asarray(p, dtype=float))

    @property
    def m(self) -> int:
        return self.mixing.m

    @property
    def n(self) -> int:
        return self.mixing.n

    @property
    def g(self) -> np.ndarray:
        return self.mixing.g

    def bitmasks(self) -> list[int]:
        return self.mixing.bitmasks()

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.bitmasks(), (float(v) for v in self.p)))

    def to_json(self) -> dict:
        return {"m": self.m, "columns": self.bitmasks(), "p": [float(v) for v in self.p]}

    @classmethod
    def from_json(cls, doc: dict) -> SourceModel:
        return cls.from_bitmasks(int(doc["m"]), doc["columns"], doc["p"])

    def __repr__(self):
        pairs = ", ".join(f"{s}:{q:.4g}" for s, q in self.as_dict().items())
        return f"SourceModel(m={self.m}, {{{pairs}}})"


def save_model(model: SourceModel, path: str | os.PathLike, **extra) -> None:
    doc = model.to_json()
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path: str | os.PathLike) -> SourceModel:
    with open(path) as fh:
        return SourceModel.from_json(json.load(fh))


@dataclass(frozen=True)
class ActivitySampler:
    """Per-source activity process.

    ``kind`` is ``"bernoulli"`` (uses the model's ``p``) or ``"markov2"`` (uses
    ``p01`` / ``p10``, the off->on and on->off transition probabilities).
    Markov chains start from their stationary distribution.
    """

    kind: str = "bernoulli"
    seed: int = 0
    p01: tuple[float, ...] = field(default=())
    p10: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("bernoulli", "markov2"):
            raise ParameterError(f"unknown activity kind {self.kind!r}")
        if self.kind == "markov2":
            if len(self.p01) != len(self.p10):
                raise ParameterError("p01 and p10 must have equal length")
            for q in (*self.p01, *self.p10):
                if not 0.0 < q < 1.0:
                    raise ParameterError(f"markov2 transition probability {q} not in (0, 1)")

    @classmethod
    def markov2(cls, p01, p10, seed: int = 0) -> ActivitySampler:
        return cls("markov2", seed, tuple(float(v) for v in p01), tuple(float(v) for v in p10))

    @classmethod
    def random_markov2(cls, n: int, rng: np.random.Generator, seed: int = 0) -> ActivitySampler:
        # open interval: redraw the measure-zero endpoint
        a = rng.uniform(0.0, 1.0, size=n)
        b = rng.uniform(0.0, 1.0, size=n)
        a[a == 0.0] = 0.5
        b[b == 0.0] = 0.5
        return cls.markov2(a, b, seed)

    def stationary(self) -> np.ndarray:
        a = np.asarray(self.p01)
        b = np.asarray(self.p10)
        return a / (a + b)


def canonical_mixing_matrix(m: int) -> MixingMatrix:
    if not 1 <= m <= MAX_CANONICAL_MONITORS:
        raise CapacityError(f"canonical mixing matrix needs 1 <= m <= {MAX_CANONICAL_MONITORS}, got {m}")
    s = np.arange(1, 1 << m, dtype=np.int64)
    g = (s[None, :] >> np.arange(m)[:, None]) & 1
    return MixingMatrix(g.astype(np.uint8))


def or_mix(g, y):
    """OR-mix activities through ``g``; ``y`` may be a vector or an ``n x T`` matrix."""
    gm = np.asarray(g.g if isinstance(g, MixingMatrix) else g, dtype=np.uint8)
    ya = np.asarray(y, dtype=np.uint8)
    if ya.shape[0] != gm.shape[1]:
        raise DimensionError(f"activity length {ya.shape[0]} does not match {gm.shape[1]} sources")
    x = (gm.astype(np.int64) @ ya.astype(np.int64)) > 0
    x = x.astype(np.uint8)
    if isinstance(y, BinaryMatrix):
        return BinaryMatrix(x)
    return x


def sample_activities(model: SourceModel, sampler: ActivitySampler, T: int) -> BinaryMatrix:
    if T < 1:
        raise ParameterError(f"slot count must be >= 1, got {T}")
    rng = np.random.default_rng(sampler.seed)
    n = model.n
    if sampler.kind == "bernoulli":
        u = rng.random((n, T))
        return BinaryMatrix((u < model.p[:, None]).astype(np.uint8))
    if len(sampler.p01) != n:
        raise DimensionError(f"markov2 sampler has {len(sampler.p01)} chains for {n} sources")
    p01 = np.asarray(sampler.p01)
    p10 = np.asarray(sampler.p10)
    y = np.empty((n, T), dtype=np.uint8)
    u = rng.random((n, T))
    state = u[:, 0] < sampler.stationary()
    y[:, 0] = state
    for t in range(1, T):
        flip = np.where(state, u[:, t] < p10, u[:, t] < p01)
        state = state ^ flip
        y[:, t] = state
    return BinaryMatrix(y)


def inject_noise(x, e: float, seed) -> BinaryMatrix:
    if not 0.0 <= e <= 1.0:
        raise ParameterError(f"flip probability {e} not in [0, 1]")
    bits = np.asarray(x, dtype=np.uint8)
    if e == 0.0:
        return BinaryMatrix(bits)
    rng = np.random.default_rng(seed)
    flips = rng.random(bits.shape) < e
    return BinaryMatrix(bits ^ flips.astype(np.uint8))


def exact_distribution(model: SourceModel) -> np.ndarray:
    """Exact law of ``x = G (x) y``: entry ``c`` is P(x == pattern c).

    Pattern ``c`` is the bitmask of the monitors that read 1. Built by
    folding sources in one at a time, which is the sum-product over all
    ``2**n`` source patterns without enumerating them.
    """
    if model.n > MAX_EXACT_SOURCES:
        raise CapacityError(f"exact distribution limited to n <= {MAX_EXACT_SOURCES}, got {model.n}")
    if model.m > MAX_CANONICAL_MONITORS:
        raise CapacityError(f"exact distribution limited to m <= {MAX_CANONICAL_MONITORS}")
    size = 1 << model.m
    table = np.zeros(size)
    table[0] = 1.0
    codes = np.arange(size)
    for s, q in zip(model.bitmasks(), model.p):
        on = np.zeros(size)
        np.add.at(on, codes | s, table)
        table = (1.0 - q) * table + q * on
    return table


def pattern_codes(x) -> np.ndarray:
    """Column-wise bitmask codes of an ``m x T`` observation matrix."""
    bits = np.asarray(x, dtype=np.int64)
    weights = 1 << np.arange(bits.shape[0], dtype=np.int64)
    return weights @ bits
