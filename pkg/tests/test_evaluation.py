import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model
from orsep.errors import DimensionError
from orsep.evaluation import (
    activity_error_ratio,
    align_activities,
    assignment_cost,
    assignment_min_cost,
    evaluate,
    match_structures,
    miscount,
    prob_error_ratio,
    structure_error_ratio,
)
from orsep.mixture import MixingMatrix, SourceModel


def exhaustive_min(cost):
    n = len(cost)
    best = None
    for perm in itertools.permutations(range(n)):
        c = sum(cost[i][perm[i]] for i in range(n))
        if best is None or c < best[0]:
            best = (c, list(perm))
    return best


def test_assignment_examples():
    assert assignment_min_cost([[0, 1], [1, 0]]) == [0, 1]
    assert assignment_min_cost([[1, 0], [0, 1]]) == [1, 0]
    assert assignment_min_cost(np.zeros((0, 0))) == []


def test_assignment_rejects_bad_input():
    with pytest.raises(DimensionError):
        assignment_min_cost([[1, 2, 3], [4, 5, 6]])
    with pytest.raises(ValueError):
        assignment_min_cost([[-1, 0], [0, 0]])


def test_random_6x6_matches_exhaustive():
    rng = np.random.default_rng(0)
    cost = rng.integers(0, 20, (6, 6))
    perm = assignment_min_cost(cost)
    assert assignment_cost(cost, perm) == exhaustive_min(cost.tolist())[0]


@settings(max_examples=120, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(st.lists(st.integers(0, 9), min_size=n, max_size=n),
                                                   min_size=n, max_size=n)))
def test_integer_assignment_is_optimal_and_lexicographic(cost):
    perm = assignment_min_cost(np.array(cost))
    best_cost, first_perm = exhaustive_min(cost)
    assert assignment_cost(cost, perm) == best_cost
    # permutations() yields in lexicographic order, so the first optimum is the smallest
    assert perm == first_perm


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(st.lists(st.floats(0, 10), min_size=n, max_size=n),
                                                   min_size=n, max_size=n)))
def test_float_assignment_is_optimal(cost):
    perm = assignment_min_cost(np.array(cost))
    assert sorted(perm) == list(range(len(cost)))
    assert assignment_cost(cost, perm) == pytest.approx(exhaustive_min(cost)[0], abs=1e-9)


def test_shuffled_model_matches_exactly():
    rng = np.random.default_rng(1)
    truth = random_model(rng, 6, 8, 0.05, 0.5)
    order = rng.permutation(8)
    inferred = SourceModel.from_bitmasks(6, [truth.bitmasks()[j] for j in order], truth.p[order])
    match = match_structures(truth, inferred)
    assert match.total_cost == 0
    assert np.array_equal(match.matched_g, truth.g)
    assert np.allclose(match.matched_p, truth.p)
    assert match.matched_model.bitmasks() == truth.bitmasks()
    assert sorted(match.permutation) == list(range(8))


def test_spurious_columns_are_pruned():
    rng = np.random.default_rng(2)
    truth = random_model(rng, 10, 10, 0.05, 0.5)
    extra = [s for s in range(1, 1 << 10) if s not in truth.bitmasks()][:8]
    masks = extra[:4] + truth.bitmasks() + extra[4:]
    inferred = SourceModel.from_bitmasks(10, masks, rng.uniform(0.01, 0.05, 18).tolist()[:4]
                                         + truth.p.tolist() + rng.uniform(0.01, 0.05, 4).tolist())
    match = match_structures(truth, inferred)
    assert miscount(truth.n, inferred.n) == 8
    assert match.n == 10
    assert np.array_equal(match.matched_g, truth.g)
    assert structure_error_ratio(truth, match) == 0.0
    assert set(match.source_index) == set(range(4, 14))


def test_missing_column_matches_a_pad():
    truth = SourceModel.from_bitmasks(3, [1, 6, 7], [0.2, 0.3, 0.4])
    inferred = SourceModel.from_bitmasks(3, [7, 1], [0.4, 0.2])
    match = match_structures(truth, inferred)
    assert match.source_index == [1, None, 0]
    assert match.matched_g[:, 1].tolist() == [0, 0, 0]
    # weight of the lost column over m * n
    assert structure_error_ratio(truth, match) == pytest.approx(2 / 9)
    assert match.matched_model is None
    assert exhaustive_min(
        [[int(np.sum(truth.g[:, i] != np.pad(inferred.g, ((0, 0), (0, 1)))[:, j])) for j in range(3)]
         for i in range(3)])[0] == match.total_cost


def test_pad_scaling_prefers_real_columns():
    # a sparse spurious column is as close to a zero pad as to the true column
    # in Hamming terms; the m-fold pad penalty keeps the genuine match
    truth = SourceModel.from_bitmasks(4, [3, 12], [0.3, 0.3])
    inferred = SourceModel.from_bitmasks(4, [1, 3, 12], [0.02, 0.3, 0.3])
    match = match_structures(truth, inferred)
    assert match.source_index == [1, 2]


def test_metric_examples():
    t = SourceModel.from_bitmasks(2, [1, 2], [0.5, 0.5])
    i = SourceModel.from_bitmasks(2, [1, 3], [0.6, 0.4])
    match = match_structures(t, i)
    assert structure_error_ratio(t, match) == 0.25
    assert structure_error_ratio(t, match_structures(t, t)) == 0.0
    assert prob_error_ratio([0.5, 0.5], [0.6, 0.4]) == pytest.approx(0.2)
    assert prob_error_ratio([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert prob_error_ratio([0.0, 0.0], [0.1, 0.1]) is None
    assert miscount(10, 10) == 0 and miscount(10, 18) == 8 and miscount(5, 3) == -2
    y = np.zeros((2, 5), dtype=np.uint8)
    y2 = y.copy()
    y2[1, 3] = 1
    assert activity_error_ratio(y, y) == 0.0
    assert activity_error_ratio(y, y2) == pytest.approx(0.1)
    with pytest.raises(DimensionError):
        activity_error_ratio(y, y[:, :4])


def test_align_activities_reorders_and_zero_fills():
    truth = SourceModel.from_bitmasks(3, [1, 6, 7], [0.2, 0.3, 0.4])
    inferred = SourceModel.from_bitmasks(3, [7, 1], [0.4, 0.2])
    match = match_structures(truth, inferred)
    y_hat = np.array([[1, 1, 0], [0, 1, 1]])
    assert align_activities(match, y_hat).tolist() == [[0, 1, 1], [0, 0, 0], [1, 1, 0]]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metrics_invariant_under_joint_permutation(seed):
    rng = np.random.default_rng(seed)
    truth = random_model(rng, 5, 6, 0.05, 0.6)
    n_hat = int(rng.integers(3, 10))
    inferred = random_model(rng, 5, n_hat, 0.01, 0.6)
    y = (rng.random((6, 30)) < 0.3).astype(np.uint8)
    y_hat = (rng.random((n_hat, 30)) < 0.3).astype(np.uint8)
    base = evaluate(truth, inferred, y, y_hat)

    pt, pi = rng.permutation(6), rng.permutation(n_hat)
    truth2 = SourceModel(MixingMatrix(truth.g[:, pt]), truth.p[pt])
    inferred2 = SourceModel(MixingMatrix(inferred.g[:, pi]), inferred.p[pi])
    other = evaluate(truth2, inferred2, y[pt], y_hat[pi])
    assert other.structure_error_ratio == pytest.approx(base.structure_error_ratio)
    assert other.miscount == base.miscount
    assert 0.0 <= base.structure_error_ratio <= 1.0
    assert base.prob_error_ratio >= 0.0
    assert 0.0 <= base.activity_error_ratio <= 1.0
    # ties among equal-cost matchings may pair different columns, so the
    # probability and activity metrics are compared only when the optimum is unique
    if _unique_optimum(truth.g, inferred.g):
        assert other.prob_error_ratio == pytest.approx(base.prob_error_ratio)
        assert other.activity_error_ratio == pytest.approx(base.activity_error_ratio)


def _unique_optimum(g, g_hat):
    """Whether the padded matching has a single optimal choice for the true rows."""
    m, n = g.shape
    k = g_hat.shape[1]
    size = max(n, k)
    cols = np.zeros((m, size), dtype=int)
    cols[:, :k] = g_hat
    c = (g[:, :, None] != cols[:, None, :]).sum(axis=0)
    # inferred columns left to the zero rows cost m times their weight
    pad_cost = m * cols.sum(axis=0)
    best = None
    count = 0
    for perm in itertools.permutations(range(size), n):
        rest = set(range(size)) - set(perm)
        v = sum(int(c[i, perm[i]]) for i in range(n)) + sum(int(pad_cost[j]) for j in rest)
        if best is None or v < best:
            best, count = v, 1
        elif v == best:
            count += 1
    return count == 1
