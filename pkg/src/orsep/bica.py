"""Binary ICA for OR mixtures: recover source columns and active probabilities.

Every oracle is a probability table over the ``2**k`` observation patterns of
its ``k`` monitors (pattern bit ``i`` = reading of local monitor ``i``). For
data matrices the table is the empirical pattern histogram, so conditioning
on "last monitor reads 0" is the lower half of the table and dropping the
last monitor is the sum of the two halves. Each recursion level is then a
pair of array slices, and the whole inference costs ``O(k 2**k)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from orsep.errors import (
    CapacityError,
    DegenerateSourceError,
    DimensionError,
    ParameterError,
    PartitionError,
)
from orsep.mixture import SourceModel, exact_distribution, pattern_codes

DELTA = 1e-6
DEFAULT_EPSILON = 0.01
DEFAULT_CONFIDENCE = 0.975
MAX_GROUP_MONITORS = 20


class FrequencyOracle:
    """Answers frequency queries for conjunctions of per-monitor literals.

    ``monitors`` holds the global monitor index of each local position;
    ``samples`` is the slot count behind an empirical table (``None`` for an
    exact distribution).
    """

    def __init__(self, table, monitors: Sequence[int] | None = None, samples: int | None = None):
        table = np.asarray(table, dtype=float)
        k = int(round(math.log2(table.size))) if table.size else -1
        if k < 0 or 1 << k != table.size:
            raise DimensionError(f"table size {table.size} is not a power of two")
        if (table < 0).any():
            raise ValueError("negative frequency in oracle table")
        self.table = table
        self.k = k
        self.monitors = list(range(k)) if monitors is None else [int(i) for i in monitors]
        if len(self.monitors) != k:
            raise DimensionError(f"{len(self.monitors)} monitor labels for a {k}-monitor table")
        self.samples = samples

    @classmethod
    def from_matrix(cls, x, monitors: Sequence[int] | None = None) -> FrequencyOracle:
        bits = np.asarray(x, dtype=np.uint8)
        if bits.ndim != 2:
            raise DimensionError("observation matrix must be 2-d")
        m, T = bits.shape
        if m > MAX_GROUP_MONITORS:
            raise CapacityError(f"pattern table limited to {MAX_GROUP_MONITORS} monitors, got {m}")
        if T == 0:
            raise DimensionError("observation matrix has no slots")
        counts = np.bincount(pattern_codes(bits), minlength=1 << m).astype(float)
        return cls(counts / T, monitors=monitors, samples=T)

    @classmethod
    def from_model(cls, model: SourceModel) -> FrequencyOracle:
        return cls(exact_distribution(model))

    @property
    def total(self) -> float:
        return float(self.table.sum())

    def frequency(self, literals: dict[int, int] | None = None) -> float:
        """F(conjunction); keys are local monitor positions, values 0 or 1."""
        if not literals:
            return self.total
        codes = np.arange(self.table.size)
        keep = np.ones(self.table.size, dtype=bool)
        for i, v in literals.items():
            if not 0 <= i < self.k:
                raise DimensionError(f"monitor {i} outside oracle of {self.k} monitors")
            keep &= ((codes >> i) & 1) == int(v)
        return float(self.table[keep].sum())

    def conditioned_last_off(self) -> FrequencyOracle:
        """Law of the first ``k-1`` monitors given the last one reads 0.

        An empty conditioning event yields an all-zero table: no slot carries
        evidence about the sources hidden from the last monitor.
        """
        half = self.table.size // 2
        low = self.table[:half]
        mass = low.sum()
        sub = low / mass if mass > 0 else np.zeros(half)
        return FrequencyOracle(sub, self.monitors[:-1], self.samples)

    def drop_last(self) -> FrequencyOracle:
        half = self.table.size // 2
        return FrequencyOracle(self.table[:half] + self.table[half:], self.monitors[:-1], self.samples)

    def restrict(self, positions: Sequence[int]) -> FrequencyOracle:
        """Marginal law of the monitors at the given local positions, in that order."""
        positions = [int(i) for i in positions]
        codes = np.arange(self.table.size)
        new = np.zeros_like(codes)
        for r, i in enumerate(positions):
            new |= ((codes >> i) & 1) << r
        sub = np.bincount(new, weights=self.table, minlength=1 << len(positions))
        return FrequencyOracle(sub, [self.monitors[i] for i in positions], self.samples)


@dataclass
class InferenceResult:
    model: SourceModel
    epsilon: float
    groups: list[list[int]] = field(default_factory=list)

    def to_json(self) -> dict:
        doc = self.model.to_json()
        doc["epsilon"] = self.epsilon
        doc["groups"] = [list(g) for g in self.groups]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> InferenceResult:
        return cls(SourceModel.from_json(doc), float(doc["epsilon"]), [list(g) for g in doc["groups"]])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def _prune(p: np.ndarray, epsilon: float) -> np.ndarray:
    p[(p < epsilon) | (p == 0)] = 0.0
    return p


def _solve(table: np.ndarray, epsilon: float, trace: list | None, allowed=None) -> np.ndarray:
    """Probabilities of candidates ``1 .. 2**k - 1`` (index 0 unused)."""
    size = table.size
    p = np.zeros(size)
    if size == 2:
        p[1] = min(max(table[1], 0.0), 1.0 - DELTA)
        if trace is not None:
            trace.append(1)
        return _prune(p, epsilon)

    half = size // 2
    low = table[:half]
    mass = low.sum()
    cond = low / mass if mass > 0 else np.zeros(half)
    sub_allowed = None if allowed is None else allowed[:half]
    p_hidden = np.clip(_solve(cond, epsilon, trace, sub_allowed), 0.0, 1.0 - DELTA)
    p_merged = np.clip(_solve(low + table[half:], epsilon, None, sub_allowed), 0.0, 1.0 - DELTA)

    p[1:half] = p_hidden[1:half]
    p[half + 1:] = 1.0 - (1.0 - p_merged[1:half]) / (1.0 - p_hidden[1:half])
    np.clip(p, 0.0, 1.0 - DELTA, out=p)
    if allowed is not None:
        p[half + 1:][~allowed[half + 1:]] = 0.0

    # only the last-monitor-only source can produce "last on, all others off"
    others = np.prod(1.0 - np.delete(p[1:], half - 1))
    if others < DELTA:
        raise DegenerateSourceError(
            f"product of inactivity probabilities {others:.3g} below {DELTA} "
            f"while solving bitmask {half}",
            bitmask=half,
        )
    p[half] = min(max(table[half] / others, 0.0), 1.0 - DELTA)
    if allowed is not None and not allowed[half]:
        p[half] = 0.0
    if trace is not None:
        trace.extend(range(half, size))
    return _prune(p, epsilon)


def find_bica(oracle: FrequencyOracle, epsilon: float = DEFAULT_EPSILON, trace: list | None = None,
              allowed: np.ndarray | None = None) -> InferenceResult:
    """Recursive inference over all ``2**k - 1`` candidate sources of the oracle.

    Column bitmasks of the result are in the oracle's local monitor indexing.
    ``allowed`` optionally masks candidates (length ``2**k``, indexed by
    bitmask); masked candidates are held at probability 0. When ``trace`` is
    a list, the bitmask of every candidate whose final probability gets
    assigned is appended to it.
    """
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
        if allowed.size != oracle.table.size:
            raise DimensionError(f"candidate mask of size {allowed.size} for {oracle.k} monitors")
    if oracle.k < 1:
        raise DimensionError("find_bica needs at least one monitor")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon {epsilon} not in (0, 1)")
    total = oracle.total
    table = oracle.table / total if total > 0 else oracle.table
    p = _prune(_solve(table, epsilon, trace, allowed), epsilon)
    masks = [int(s) for s in np.flatnonzero(p)]
    model = SourceModel.from_bitmasks(oracle.k, masks, p[masks])
    return InferenceResult(model, epsilon, [list(range(oracle.k))])


def covariance(oracle: FrequencyOracle, i: int, k: int) -> float:
    """Covariance of the readings at local positions ``i`` and ``k``."""
    if i == k:
        raise ValueError("covariance needs two distinct monitors")
    both = oracle.frequency({i: 1, k: 1})
    return both - oracle.frequency({i: 1}) * oracle.frequency({k: 1})


def covariance_matrix(oracle: FrequencyOracle) -> np.ndarray:
    codes = np.arange(oracle.table.size)
    bits = ((codes[None, :] >> np.arange(oracle.k)[:, None]) & 1).astype(float)
    weighted = bits * oracle.table
    second = weighted @ bits.T
    first = bits @ oracle.table
    return second - np.outer(first, first)


def covariance_bound(oracle: FrequencyOracle, confidence: float = DEFAULT_CONFIDENCE) -> np.ndarray:
    """Per-pair upper confidence bound on the covariance under independence.

    Under independence the sample covariance has variance close to
    ``var_i * var_k / T``; the bound is ``z * sqrt(var_i * var_k / T)``.
    Exact oracles get a bound of 1e-12 (rounding level).
    """
    if oracle.samples is None:
        return np.full((oracle.k, oracle.k), 1e-12)
    z = NormalDist().inv_cdf(confidence)
    codes = np.arange(oracle.table.size)
    bits = ((codes[None, :] >> np.arange(oracle.k)[:, None]) & 1).astype(float)
    q = bits @ oracle.table
    var = q * (1.0 - q)
    return z * np.sqrt(np.outer(var, var) / oracle.samples)


def _threshold_matrix(oracle, cov_threshold, confidence):
    k = oracle.k
    if cov_threshold is None:
        return covariance_bound(oracle, confidence)
    thr = np.broadcast_to(np.asarray(cov_threshold, dtype=float), (k, k))
    if (thr < 0).any():
        raise ParameterError("covariance threshold must be nonnegative")
    return thr


def correlation_graph(oracle: FrequencyOracle, cov_threshold=None,
                      confidence: float = DEFAULT_CONFIDENCE) -> np.ndarray:
    """Adjacency of monitors whose covariance reaches the threshold.

    ``cov_threshold`` is a scalar, a ``k x k`` array, or ``None`` for the
    per-pair confidence bound.
    """
    adj = covariance_matrix(oracle) >= _threshold_matrix(oracle, cov_threshold, confidence)
    np.fill_diagonal(adj, False)
    return adj


def decompose_by_correlation(oracle: FrequencyOracle, cov_threshold=None,
                             confidence: float = DEFAULT_CONFIDENCE) -> list[list[int]]:
    """Connected components of the correlation graph, as sorted local positions."""
    adj = correlation_graph(oracle, cov_threshold, confidence)
    k = oracle.k
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(np.triu(adj))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def correlated_candidates(adj: np.ndarray) -> np.ndarray:
    """Mask over bitmasks ``0 .. 2**k - 1``: True iff every monitor pair in the set is linked.

    A source seen by two monitors makes their readings positively
    correlated, so a candidate containing an uncorrelated pair cannot be real.
    """
    adj = np.asarray(adj, dtype=bool)
    k = adj.shape[0]
    codes = np.arange(1 << k)
    ok = np.ones(1 << k, dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            if not adj[i, j]:
                ok &= ((codes >> i) & (codes >> j) & 1) == 0
    return ok


def assemble(results: Sequence[InferenceResult], m: int | None = None) -> InferenceResult:
    """Union of per-group results re-embedded into the full monitor index space.

    Each result's ``groups[0]`` names the global monitor of each local bit.
    """
    seen: set[int] = set()
    masks: list[int] = []
    probs: list[float] = []
    groups: list[list[int]] = []
    eps = None
    for res in results:
        members = res.groups[0]
        if seen.intersection(members):
            raise PartitionError(f"monitor group {members} overlaps an earlier group")
        seen.update(members)
        groups.append(list(members))
        eps = res.epsilon if eps is None else eps
        for s, q in zip(res.model.bitmasks(), res.model.p):
            masks.append(sum(1 << members[b] for b in range(len(members)) if (s >> b) & 1))
            probs.append(float(q))
    if m is None:
        m = max(seen) + 1 if seen else 0
    model = SourceModel.from_bitmasks(m, masks, probs)
    return InferenceResult(model, DEFAULT_EPSILON if eps is None else eps, groups)


def infer_sources(oracle: FrequencyOracle, epsilon: float = DEFAULT_EPSILON, cov_threshold=None,
                  confidence: float = DEFAULT_CONFIDENCE, decompose: bool = True,
                  exclude_uncorrelated: bool = True) -> InferenceResult:
    """Full inference: split monitors by correlation, run find_bica per group, assemble.

    With ``exclude_uncorrelated`` the candidates inside a group are further
    restricted to monitor sets that are cliques of the correlation graph.
    """
    m = max(oracle.monitors) + 1
    adj = correlation_graph(oracle, cov_threshold, confidence)
    parts = decompose_by_correlation(oracle, cov_threshold, confidence) if decompose else [list(range(oracle.k))]
    results = []
    for part in parts:
        sub = oracle.restrict(part)
        allowed = correlated_candidates(adj[np.ix_(part, part)]) if exclude_uncorrelated else None
        res = find_bica(sub, epsilon, allowed=allowed)
        res.groups = [list(sub.monitors)]
        results.append(res)
    return assemble(results, m=m)
