import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glovedesign.discrete import (ROUNDING_THRESHOLD, design_discrete_flow, exhaustive_select,
                                  round_to_selection, v2_flow_term, v2_penalty)
from glovedesign.errors import BudgetError, ShapeError
from glovedesign.estimator import selection_matrix, v1_cost
from glovedesign.flow import FlowOptions
from glovedesign.prior import PriorModel

from .conftest import random_prior


def diag_prior(*d):
    return PriorModel.from_moments(np.zeros(len(d)), np.diag(d))


def test_exhaustive_diagonal():
    a = exhaustive_select(diag_prior(1.0, 2.0, 3.0), None, 1)
    assert a.indices == (3,) and a.v1 == pytest.approx(5.0)
    b = exhaustive_select(diag_prior(1.0, 2.0, 3.0), None, 2)
    assert b.indices == (2, 3) and b.v1 == pytest.approx(1.0)


def test_exhaustive_tie_break():
    prior = PriorModel.from_moments(np.zeros(2), [[1.0, 0.9], [0.9, 1.0]])
    assert exhaustive_select(prior, None, 1).indices == (1,)


def test_exhaustive_budget():
    prior = random_prior(20, 0)
    with pytest.raises(BudgetError, match="combinatorial budget exceeded"):
        exhaustive_select(prior, None, 10, budget=1000)
    with pytest.raises(ShapeError):
        exhaustive_select(prior, None, 21)


def test_exhaustive_noise_vector_alignment():
    prior = random_prior(5, 1)
    sel = exhaustive_select(prior, [0.1, 0.7], 2)
    H = selection_matrix(sel.columns, 5)
    assert sel.v1 == pytest.approx(v1_cost(prior, H, np.diag([0.1, 0.7])))
    for cols in itertools.combinations(range(5), 2):
        assert sel.v1 <= v1_cost(prior, selection_matrix(cols, 5), np.diag([0.1, 0.7])) + 1e-12


def test_v2_examples():
    assert v2_penalty([[0.0, 1.0], [1.0, 0.0]]) == 0.0
    assert v2_penalty([[1.0, 0.0, 0.0]]) == 0.0
    s = np.sqrt(0.5)
    assert v2_penalty([[s, s]]) == pytest.approx(2 / 3 * 2 * s * (s - 0.5), rel=1e-12)
    assert v2_penalty([[s, s]]) == pytest.approx(0.19526, abs=5e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5), st.integers(0, 10_000))
def test_v2_zero_on_selections_and_bracket_skew(m, extra, seed):
    n = m + extra
    rng = np.random.default_rng(seed)
    cols = rng.choice(n, size=m, replace=False)
    S = selection_matrix(cols, n)
    assert v2_penalty(S) == 0.0
    assert not np.any(v2_flow_term(S))
    H = rng.standard_normal((m, n))
    C = H * H
    B = C.T @ H - H.T @ C
    assert np.max(np.abs(B + B.T)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 5), st.integers(0, 10_000))
def test_orthonormal_nonnegative_zero_penalty_is_selection(m, extra, seed):
    # rows with disjoint non-negative supports are orthonormal; V2 vanishes
    # exactly when every support is a single column
    n = m + extra
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(m), rng.integers(0, m, size=extra)])
    labels = rng.permutation(labels)
    H = np.zeros((m, n))
    for i in range(m):
        w = rng.uniform(0.1, 1.0, size=int(np.sum(labels == i)))
        H[i, labels == i] = w / np.linalg.norm(w)
    np.testing.assert_allclose(H @ H.T, np.eye(m), atol=1e-12)
    is_selection = all(np.sum(labels == i) == 1 for i in range(m))
    assert (v2_penalty(H) <= 1e-14) == is_selection


def test_v2_flow_leaves_balanced_row_toward_a_coordinate():
    # [sqrt(.5), sqrt(.5)] itself is an equilibrium; a small asymmetry decides the corner
    for sign in (1.0, -1.0):
        h = np.array([[np.sqrt(0.5) + sign * 1e-3, np.sqrt(0.5) - sign * 1e-3]])
        assert np.max(np.abs(v2_flow_term(np.full((1, 2), np.sqrt(0.5))))) <= 1e-15
        for _ in range(20_000):
            h = h + 0.01 * v2_flow_term(h)
            h /= np.linalg.norm(h)
        target = [1.0, 0.0] if sign > 0 else [0.0, 1.0]
        np.testing.assert_allclose(h[0], target, atol=1e-3)


def test_flow_diagonal_matches_oracle():
    prior = diag_prior(1.0, 2.0, 3.0, 4.0)
    sel = design_discrete_flow(prior, None, 2, FlowOptions(starts=5, seed=0))
    assert set(sel.indices) == {3, 4}
    assert sel.v1 == pytest.approx(exhaustive_select(prior, None, 2).v1)
    assert sel.residual <= ROUNDING_THRESHOLD


def test_flow_penalty_only_reaches_selection():
    prior = random_prior(6, 2)
    for seed in range(3):
        sel = design_discrete_flow(prior, None, 2, FlowOptions(starts=1, seed=seed, k0=1.0))
        assert sel.result.v2 < 1e-6
        assert len(set(sel.indices)) == 2


def test_flow_never_beats_oracle():
    for seed in range(3):
        prior = random_prior(8, 100 + seed)
        oracle = exhaustive_select(prior, None, 3)
        sel = design_discrete_flow(prior, None, 3, FlowOptions(starts=8, seed=seed))
        assert sel.v1 >= oracle.v1 - 1e-9


def test_flow_noisy_reports_rounded_cost():
    prior = random_prior(6, 3)
    R = np.diag([0.2, 0.5])
    sel = design_discrete_flow(prior, R, 2, FlowOptions(starts=4, seed=1))
    assert sel.v1 == pytest.approx(v1_cost(prior, selection_matrix(sorted(sel.columns), 6), R))
    assert sel.v1 >= exhaustive_select(prior, R, 2).v1 - 1e-9


def test_flow_shape_error():
    with pytest.raises(ShapeError):
        design_discrete_flow(random_prior(3, 0), None, 3)


def test_rounding_examples():
    H = np.array([[0.98, 0.02, 0.0], [0.01, 0.97, -0.02]])
    sel, residual = round_to_selection(H)
    assert sel.indices == (1, 2)
    # direct arithmetic: sqrt(.02^2 + .02^2 + .01^2 + .03^2 + .02^2)
    assert residual == pytest.approx(np.sqrt(0.0022), rel=1e-12)
    assert residual == pytest.approx(0.0469, abs=1e-4)
    S = selection_matrix([2, 0], 4)
    sel, residual = round_to_selection(S)
    assert sel.indices == (3, 1) and residual == 0.0


def test_rounding_conflict_repair():
    H = np.array([[0.8, 0.5, 0.1], [0.9, 0.1, 0.3]])
    sel, _ = round_to_selection(H)
    assert sel.indices == (2, 1)
    with pytest.raises(ShapeError):
        round_to_selection(np.ones((3, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 10_000))
def test_rounding_gives_valid_selection(m, extra, seed):
    n = m + extra
    H = np.random.default_rng(seed).standard_normal((m, n))
    sel, residual = round_to_selection(H)
    assert len(set(sel.indices)) == m and all(1 <= i <= n for i in sel.indices)
    D = sel.design.matrix
    assert set(np.unique(D)) <= {0.0, 1.0} and np.all(D.sum(axis=1) == 1) and np.all(D.sum(axis=0) <= 1)
    assert residual == pytest.approx(np.linalg.norm(D - H))
