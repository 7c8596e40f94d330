"""Structure matching between true and inferred models, and accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from orsep.errors import DimensionError
from orsep.mixture import MixingMatrix, SourceModel


def _hungarian(cost: list[list]) -> list[int]:
    """Kuhn-Munkres with potentials; returns ``assign[row] = col``.

    Works on any exactly comparable numbers (ints stay exact).
    """
    n = len(cost)
    inf = None  # sentinel; avoids mixing float('inf') into exact int arithmetic
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    owner = [0] * (n + 1)  # owner[col] = row matched to col, 1-based, 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            delta = inf
            j1 = 0
            row = cost[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if minv[j] is inf or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is inf or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[owner[j] - 1] = j - 1
    return assign


def assignment_min_cost(cost) -> list[int]:
    """Minimum-cost perfect assignment of rows to columns.

    Returns ``perm`` with ``perm[i]`` the column given to row ``i``. For
    integer costs, ties resolve to the lexicographically smallest ``perm``
    (each row prefers the lowest column index): costs are lifted to
    ``cost * n**n + sum_i perm[i] * n**(n-1-i)`` in exact integer arithmetic.
    """
    c = np.asarray(cost)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"cost matrix must be square, got shape {c.shape}")
    n = c.shape[0]
    if n == 0:
        return []
    if (c < 0).any():
        raise ValueError("cost entries must be nonnegative")
    if np.issubdtype(c.dtype, np.integer) or np.array_equal(c, np.round(c)):
        scale = n ** n
        lifted = [[int(c[i, j]) * scale + j * n ** (n - 1 - i) for j in range(n)] for i in range(n)]
        return _hungarian(lifted)
    return _hungarian(c.astype(float).tolist())


def assignment_cost(cost, perm) -> float:
    c = np.asarray(cost)
    return float(sum(c[i, j] for i, j in enumerate(perm)))


@dataclass
class MatchResult:
    matched_model: SourceModel | None
    permutation: list[int]
    total_cost: int
    matched_g: np.ndarray
    matched_p: np.ndarray
    source_index: list[int | None]

    @property
    def n(self) -> int:
        return self.matched_g.shape[1]


def match_structures(true_model: SourceModel, inferred: SourceModel) -> MatchResult:
    """Align inferred columns to true columns by minimum total Hamming cost.

    The smaller side is padded with zero columns. Matching anything to a
    zero true column costs ``m`` times its Hamming weight, so a spurious
    sparse inferred column never displaces a genuine match. After the
    assignment, only the ``n`` true positions are kept; a true column
    matched to an inferred pad gets a zero column and probability 0, and its
    ``source_index`` entry is ``None``.
    """
    m = true_model.m
    if inferred.m != m:
        raise DimensionError(f"monitor count mismatch: {m} vs {inferred.m}")
    n, n_hat = true_model.n, inferred.n
    size = max(n, n_hat)
    g = np.zeros((m, size), dtype=np.int64)
    g[:, :n] = true_model.g
    gh = np.zeros((m, size), dtype=np.int64)
    gh[:, :n_hat] = inferred.g
    ph = np.zeros(size)
    ph[:n_hat] = inferred.p

    cost = (g[:, :, None] != gh[:, None, :]).sum(axis=0)
    zero_true = g.sum(axis=0) == 0
    cost[zero_true] *= m
    perm = assignment_min_cost(cost)
    total = int(sum(cost[i, perm[i]] for i in range(size)))

    cols = perm[:n]
    matched_g = gh[:, cols].astype(np.uint8)
    matched_p = ph[cols]
    source_index = [j if j < n_hat else None for j in cols]
    matched_model = None
    if n and (matched_g.sum(axis=0) > 0).all() and len(set(map(tuple, matched_g.T))) == n:
        matched_model = SourceModel(MixingMatrix(matched_g), matched_p)
    return MatchResult(matched_model, perm, total, matched_g, matched_p, source_index)


def structure_error_ratio(true_model: SourceModel, matched: MatchResult) -> float:
    m, n = true_model.m, true_model.n
    if m * n == 0:
        return 0.0
    return float(np.count_nonzero(true_model.g != matched.matched_g)) / (m * n)


def prob_error_ratio(true_p, matched_p) -> float | None:
    """RMS deviation of matched probabilities relative to the mean true probability.

    Returns ``None`` when the true probabilities sum to zero.
    """
    p = np.asarray(true_p, dtype=float)
    q = np.asarray(matched_p, dtype=float)
    if p.shape != q.shape:
        raise DimensionError(f"length mismatch {p.size} vs {q.size}")
    if p.size == 0 or p.sum() == 0:
        return None
    return float(math.sqrt(np.mean((q - p) ** 2)) / p.mean())


def miscount(true_n: int, inferred_n: int) -> int:
    return int(inferred_n) - int(true_n)


def activity_error_ratio(true_y, inferred_y) -> float:
    a = np.asarray(true_y)
    b = np.asarray(inferred_y)
    if a.shape != b.shape:
        raise DimensionError(f"activity shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a != b)) / a.size


def align_activities(matched: MatchResult, inferred_y) -> np.ndarray:
    """Rows of the inferred activity matrix reordered to the true source order.

    True sources matched to a pad get an all-zero row.
    """
    yh = np.asarray(inferred_y, dtype=np.uint8)
    out = np.zeros((matched.n, yh.shape[1]), dtype=np.uint8)
    for i, j in enumerate(matched.source_index):
        if j is not None:
            out[i] = yh[j]
    return out


@dataclass
class MetricsReport:
    structure_error_ratio: float
    prob_error_ratio: float | None
    miscount: int
    activity_error_ratio: float | None = None


def evaluate(true_model: SourceModel, inferred: SourceModel, true_y=None, inferred_y=None) -> MetricsReport:
    match = match_structures(true_model, inferred)
    act = None
    if true_y is not None and inferred_y is not None:
        act = activity_error_ratio(true_y, align_activities(match, inferred_y))
    return MetricsReport(
        structure_error_ratio(true_model, match),
        prob_error_ratio(true_model.p, match.matched_p),
        miscount(true_model.n, inferred.n),
        act,
    )
