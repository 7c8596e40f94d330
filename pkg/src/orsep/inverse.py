"""Per-slot MAP recovery of source activities from OR-mixed observations.

For a slot with observation ``X`` (m bits), the log posterior of an activity
vector ``y`` (up to the constant ``-log P(X)``) is::

    sum_i [a_i log p_e + (1 - a_i) log(1 - p_e)]
      + sum_j [y_j log p_j + (1 - y_j) log(1 - p_j)],   a_i = |X_i - x_i|,

with ``x = G (x) y``. Fixing ``y`` fixes ``x`` and ``a``, so the big-M
constraints hold by construction and the search runs over ``y`` alone.
The solver is a depth-first branch and bound visiting ``y_j = 0`` before
``y_j = 1``; with strict-improvement updates it returns the lexicographically
smallest maximizer, the same one the brute-force enumeration returns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from orsep.binmat import BinaryMatrix
from orsep.errors import CapacityError, DimensionError, InfeasibilityError, ParameterError
from orsep.mixture import SourceModel, or_mix

TIE_TOL = 1e-10
BOUND_SLACK = 1e-9
MAX_BRUTE_FORCE = 20
FALLBACK_PE = 0.01


@dataclass(frozen=True)
class MapInstance:
    model: SourceModel
    observation: np.ndarray
    p_e: float

    def __post_init__(self):
        obs = np.asarray(self.observation, dtype=np.uint8).ravel()
        if obs.size != self.model.m:
            raise DimensionError(f"observation has {obs.size} bits for {self.model.m} monitors")
        if not 0.0 <= self.p_e < 0.5:
            raise ParameterError(f"p_e must lie in [0, 0.5), got {self.p_e}")
        if ((self.model.p <= 0) | (self.model.p >= 1)).any():
            raise ParameterError("source probabilities must lie strictly inside (0, 1)")
        object.__setattr__(self, "observation", obs)


@dataclass(frozen=True)
class MapSolution:
    y: np.ndarray
    x: np.ndarray
    log_posterior: float
    optimal: bool = True


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def log_posterior(model: SourceModel, observation, y, p_e: float) -> float:
    """Objective of the MAP integer program at ``y`` (``x`` and ``a`` implied)."""
    y = np.asarray(y, dtype=np.uint8)
    obs = np.asarray(observation, dtype=np.uint8)
    x = or_mix(model.g, y) if model.n else np.zeros(model.m, dtype=np.uint8)
    mism = int(np.count_nonzero(x != obs))
    total = 0.0
    if mism:
        total += mism * _log(p_e)
    if model.m - mism:
        total += (model.m - mism) * _log(1.0 - p_e)
    for yj, pj in zip(y, model.p):
        total += math.log(pj) if yj else math.log1p(-pj)
    return total


class _Problem:
    """Bitmask form of one slot: source coverage masks and per-source weights."""

    def __init__(self, model: SourceModel, observation, p_e: float, exact: bool):
        self.model = model
        self.obs = np.asarray(observation, dtype=np.uint8)
        self.p_e = p_e
        self.n = model.n
        self.masks = [int(s) for s in model.bitmasks()] if model.n else []
        self.ones = sum(1 << i for i in range(model.m) if self.obs[i])
        self.zeros = ((1 << model.m) - 1) & ~self.ones
        self.exact = exact
        self.gain = math.inf if exact else math.log1p(-p_e) - _log(p_e)
        self.w = [math.log(p) - math.log1p(-p) for p in model.p]
        self.allowed = [not (exact and (s & self.zeros)) for s in self.masks]
        suffix_or = [0] * (self.n + 1)
        suffix_pos = [0.0] * (self.n + 1)
        for j in range(self.n - 1, -1, -1):
            reach = self.masks[j] if self.allowed[j] else 0
            suffix_or[j] = suffix_or[j + 1] | reach
            suffix_pos[j] = suffix_pos[j + 1] + (max(self.w[j], 0.0) if self.allowed[j] else 0.0)
        self.suffix_or = suffix_or
        self.suffix_pos = suffix_pos

    def bound(self, j: int, covered: int, wsum: float) -> float:
        """Optimistic score of any completion of a partial assignment (relative units)."""
        reachable = self.ones & (covered | self.suffix_or[j])
        if self.exact:
            if reachable != self.ones:
                return -math.inf
            return wsum + self.suffix_pos[j]
        good = bin(reachable).count("1") + bin(self.zeros & ~covered).count("1")
        return wsum + self.suffix_pos[j] + self.gain * good

    def leaf_value(self, y: list[int]) -> float:
        if self.exact:
            x = 0
            for j, v in enumerate(y):
                if v:
                    x |= self.masks[j]
            if x != self.ones:
                return -math.inf
        return log_posterior(self.model, self.obs, y, self.p_e)


def _branch_and_bound(prob: _Problem) -> tuple[list[int] | None, float]:
    n = prob.n
    best_y: list[int] | None = None
    best = -math.inf
    base = sum(math.log1p(-p) for p in prob.model.p)
    offset = 0.0 if prob.exact else prob.model.m * _log(prob.p_e)
    y = [0] * n

    # iterative DFS over (level, covered monitors, weight sum, branch); every
    # level on the current path writes y[j] before a leaf reads it
    stack = [(0, 0, 0.0, 0)]
    while stack:
        j, covered, wsum, branch = stack.pop()
        if j == n:
            val = prob.leaf_value(y)
            if val > best + TIE_TOL:
                best, best_y = val, list(y)
            continue
        if branch == 0:
            stack.append((j, covered, wsum, 1))
            if prob.bound(j, covered, wsum) + base + offset + BOUND_SLACK <= best + TIE_TOL:
                stack.pop()
                continue
            y[j] = 0
            stack.append((j + 1, covered, wsum, 0))
        else:
            if not prob.allowed[j]:
                continue
            y[j] = 1
            ncov = covered | prob.masks[j]
            nw = wsum + prob.w[j]
            if prob.bound(j + 1, ncov, nw) + base + offset + BOUND_SLACK <= best + TIE_TOL:
                y[j] = 0
                continue
            stack.append((j + 1, ncov, nw, 0))
    return best_y, best


def _solution(model: SourceModel, y, value: float) -> MapSolution:
    y = np.asarray(y, dtype=np.uint8)
    x = or_mix(model.g, y) if model.n else np.zeros(model.m, dtype=np.uint8)
    return MapSolution(y, np.asarray(x, dtype=np.uint8), float(value), True)


def map_activities(instance: MapInstance) -> MapSolution:
    """Exact MAP activity vector for a single slot under a symmetric bit-flip channel."""
    model = instance.model
    if instance.p_e == 0.0:
        return map_activities_zero_error(model, instance.observation)
    prob = _Problem(model, instance.observation, instance.p_e, exact=False)
    y, value = _branch_and_bound(prob)
    return _solution(model, y, value)


def map_activities_zero_error(model: SourceModel, observation) -> MapSolution:
    """MAP activity vector when the observation must be reproduced exactly."""
    obs = np.asarray(observation, dtype=np.uint8).ravel()
    if obs.size != model.m:
        raise DimensionError(f"observation has {obs.size} bits for {model.m} monitors")
    if ((model.p <= 0) | (model.p >= 1)).any():
        raise ParameterError("source probabilities must lie strictly inside (0, 1)")
    prob = _Problem(model, obs, 0.0, exact=True)
    if prob.suffix_or[0] & prob.ones != prob.ones:
        raise InfeasibilityError("no set of sources reproduces the observation exactly")
    y, value = _branch_and_bound(prob)
    if y is None:
        raise InfeasibilityError("no set of sources reproduces the observation exactly")
    return _solution(model, y, value)


def brute_force_map(instance: MapInstance) -> MapSolution:
    """Enumerate all ``2**n`` activity vectors in lexicographic order."""
    model = instance.model
    n = model.n
    if n > MAX_BRUTE_FORCE:
        raise CapacityError(f"brute force limited to n <= {MAX_BRUTE_FORCE}, got {n}")
    exact = instance.p_e == 0.0
    ones = sum(1 << i for i in range(model.m) if instance.observation[i])
    masks = model.bitmasks()
    best = -math.inf
    best_y = None
    for code in range(1 << n):
        # lexicographic order with y_0 most significant
        y = [(code >> (n - 1 - j)) & 1 for j in range(n)]
        if exact:
            x = 0
            for j in range(n):
                if y[j]:
                    x |= masks[j]
            if x != ones:
                continue
        val = log_posterior(model, instance.observation, y, instance.p_e)
        if val > best + TIE_TOL:
            best, best_y = val, y
    if best_y is None:
        raise InfeasibilityError("no set of sources reproduces the observation exactly")
    return _solution(model, best_y, best)


def solve_slots(model: SourceModel, x, p_e: float | None = None) -> tuple[BinaryMatrix, list[dict]]:
    """MAP-decode every slot of an ``m x T`` observation matrix.

    ``p_e=None`` tries the zero-error program first and falls back to
    ``p_e = 0.01`` when the slot has no exact cover. Distinct observation
    patterns are solved once and reused.
    """
    bits = np.asarray(x, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[0] != model.m:
        raise DimensionError(f"observation matrix must be {model.m} x T, got {bits.shape}")
    T = bits.shape[1]
    patterns, inverse = np.unique(bits.T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    solved = []
    for pat in patterns:
        if p_e is None:
            try:
                sol = map_activities_zero_error(model, pat)
                used = 0.0
            except InfeasibilityError:
                sol = map_activities(MapInstance(model, pat, FALLBACK_PE))
                used = FALLBACK_PE
        else:
            sol = map_activities(MapInstance(model, pat, p_e))
            used = p_e
        solved.append((sol, used))
    y = np.zeros((model.n, T), dtype=np.uint8)
    for k, (sol, _) in enumerate(solved):
        y[:, inverse == k] = sol.y[:, None]
    meta = [
        {"log_posterior": solved[k][0].log_posterior, "optimal": solved[k][0].optimal, "p_e": solved[k][1]}
        for k in inverse
    ]
    return BinaryMatrix(y), meta


def write_sidecar(meta: Sequence[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump({"slots": list(meta)}, fh)
        fh.write("\n")
