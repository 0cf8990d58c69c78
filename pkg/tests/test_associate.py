import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadtrack.associate import (
    AssignmentResult,
    AssociationConflict,
    CostMatrix,
    build_cost_matrix,
    compose_block,
    gate,
    hungarian,
    solve_assignment,
)
from roadtrack.detect import Detection
from roadtrack.manage import ManageConfig, initiate
from roadtrack.model import BoundingBox


def det_at(x, y):
    return Detection(BoundingBox((x, y), 0.0, (4.0, 2.0, 1.5)), (0.1, 0.1, 0.1), "lshape", 20)


def track_at(x, y, tid):
    return initiate(det_at(x, y), 0.0, tid, ManageConfig())


def brute_force_min(c):
    rows, cols = c.shape
    if rows <= cols:
        return min(sum(c[i, p[i]] for i in range(rows)) for p in itertools.permutations(range(cols), rows))
    return min(sum(c[p[j], j] for j in range(cols)) for p in itertools.permutations(range(rows), cols))


def total(res, c):
    return sum(c.cost(d, t) for d, t in res.pairs)


def test_cost_matrix_examples():
    c = build_cost_matrix([det_at(0, 0), det_at(1, 1)], [track_at(3, 4, 9), track_at(1, 1, 5)])
    assert c.cost(0, 9) == pytest.approx(5.0)
    assert c.cost(1, 5) == 0.0
    assert c.track_ids == (9, 5)


def test_cost_matrix_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    dp, tp = rng.uniform(-20, 20, (5, 2)), rng.uniform(-20, 20, (5, 2))
    c = build_cost_matrix([det_at(*p) for p in dp], [track_at(*p, k) for k, p in enumerate(tp)])
    for i, j in itertools.product(range(5), range(5)):
        assert c.values[i, j] == pytest.approx(float(np.hypot(*(dp[i] - tp[j]))), abs=1e-12)
    with pytest.raises(ValueError):
        CostMatrix.from_array([[-1.0]])


def test_solve_examples():
    c = CostMatrix.from_array([[1, 2], [2, 1]])
    res = solve_assignment(c)
    assert sorted(res.pairs) == [(0, 0), (1, 1)]
    assert total(res, c) == 2
    assert solve_assignment(CostMatrix.from_array([[5]])).pairs == ((0, 0),)
    empty = solve_assignment(CostMatrix(np.empty((0, 2)), (), (3, 4)))
    assert empty.pairs == () and empty.unmatched_tracks == (3, 4)


def test_hungarian_matches_brute_force_on_6x6():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = rng.uniform(0, 10, (6, 6))
        perm = hungarian(m)
        assert sorted(perm) == list(range(6))
        assert m[np.arange(6), perm].sum() == pytest.approx(brute_force_min(m), abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31), st.booleans())
def test_solver_optimal_on_small_rectangular(rows, cols, seed, integer):
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 4, (rows, cols)).astype(float) if integer else rng.uniform(0, 30, (rows, cols))
    c = CostMatrix.from_array(m)
    res = solve_assignment(c)
    assert len(res.pairs) == min(rows, cols)
    assert total(res, c) == pytest.approx(brute_force_min(m), abs=1e-9)
    assert len(res.pairs) + len(res.unmatched_detections) == rows
    assert len(res.pairs) + len(res.unmatched_tracks) == cols


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_permutation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0, 10, (n, n))
    perm = rng.permutation(n)
    base = solve_assignment(CostMatrix.from_array(m)).as_dict()
    permuted = solve_assignment(CostMatrix(m[perm], tuple(range(n)), tuple(range(n)))).as_dict()
    assert all(permuted[i] == base[perm[i]] for i in range(n))


def test_gate_examples():
    c = CostMatrix.from_array([[1.0, 9.0], [9.0, 3.0]])
    res = gate(solve_assignment(c), c, 2.5)
    assert res.pairs == ((0, 0),)
    assert res.unmatched_detections == (1,) and res.unmatched_tracks == (1,)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.5, 5.0))
def test_gate_matches_threshold_oracle(seed, c_max):
    m = np.random.default_rng(seed).uniform(0, 6, (4, 4))
    c = CostMatrix.from_array(m)
    a = solve_assignment(c)
    g = gate(a, c, c_max)
    assert set(g.pairs) == {(d, t) for d, t in a.pairs if m[d, t] <= c_max}
    assert all(m[d, t] <= c_max for d, t in g.pairs)


def test_compose_block():
    b = AssignmentResult(((2, 20), (3, 30)), (4,), (40,))
    assert compose_block({0: 1}, AssignmentResult()).as_dict() == {0: 1}
    both = compose_block({0: 1, 1: 2}, b)
    assert len(both.pairs) == 4
    a = both.matrix(5, [1, 2, 20, 30, 40])
    assert a.sum(axis=0).max() == 1 and a.sum(axis=1).max() == 1
    with pytest.raises(AssociationConflict, match="association conflict"):
        compose_block({2: 7}, b)
    with pytest.raises(AssociationConflict):
        compose_block({0: 20}, b)
