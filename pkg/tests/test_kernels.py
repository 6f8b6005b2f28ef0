"""Compiled and pure-Python kernels must agree; both must match the
reference formulas."""

import itertools

import numpy as np
import pytest

from glovedesign import kernels
from glovedesign.continuous import v1_gradient
from glovedesign.discrete import v2_flow_term, v2_penalty
from glovedesign.estimator import selection_matrix, v1_cost

from .conftest import random_prior, random_spd

BACKENDS = kernels.backends()


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("noisy", [False, True])
def test_v1_grad_matches_reference(name, noisy):
    impl = BACKENDS[name]
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        m = int(rng.integers(1, n))
        prior = random_prior(n, seed)
        H = rng.standard_normal((m, n))
        R = random_spd(m, seed + 50, ridge=0.1) if noisy else np.zeros((m, m))
        v, G = impl.v1_grad(prior.cov, H, R, True)
        assert v == pytest.approx(v1_cost(prior, H, R), rel=1e-10)
        np.testing.assert_allclose(G, v1_gradient(prior, H, R), rtol=1e-8, atol=1e-10)
        v_only, none = impl.v1_grad(prior.cov, H, R, False)
        assert none is None and v_only == v


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_v1_grad_singular_innovation(name):
    P = np.diag([1.0, 0.0])
    v, G = BACKENDS[name].v1_grad(P, np.array([[0.0, 1.0]]), np.zeros((1, 1)), True)
    assert v == np.inf and G is None


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_v2_kernels_match_reference(name):
    impl = BACKENDS[name]
    rng = np.random.default_rng(3)
    for _ in range(20):
        H = rng.standard_normal((int(rng.integers(1, 5)), int(rng.integers(1, 9))))
        assert impl.v2_value(H) == pytest.approx(v2_penalty(H), rel=1e-12, abs=1e-14)
        np.testing.assert_allclose(impl.v2_flow(H), v2_flow_term(H), rtol=1e-12, atol=1e-12)


def _brute_force(prior, R, m):
    best, arg = np.inf, None
    for cols in itertools.combinations(range(prior.n), m):
        v = v1_cost(prior, selection_matrix(cols, prior.n), R)
        if v < best - 1e-12 * np.sum(prior.cov ** 2):
            best, arg = v, cols
    return arg, best


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("noisy", [False, True])
def test_subset_scan_matches_brute_force(name, noisy):
    impl = BACKENDS[name]
    for seed in range(4):
        prior = random_prior(8, seed)
        m = 3
        R = np.diag([0.1, 0.2, 0.3]) if noisy else np.zeros((m, m))
        P = np.ascontiguousarray(prior.cov)
        cols, value, count = impl.subset_scan(P, P @ P, P @ P @ P, R, m,
                                              1e-12 * float(np.sum(P * P)))
        expect_cols, expect = _brute_force(prior, R, m)
        assert tuple(int(c) for c in cols) == expect_cols
        assert value == pytest.approx(expect, rel=1e-9)
        assert count == 56


def test_backends_agree_bitwise_close():
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    py, c = BACKENDS["python"], BACKENDS["compiled"]
    prior = random_prior(10, 7)
    H = np.random.default_rng(1).standard_normal((3, 10))
    R = 0.3 * np.eye(3)
    v1, g1 = py.v1_grad(prior.cov, H, R, True)
    v2, g2 = c.v1_grad(prior.cov, H, R, True)
    assert abs(v1 - v2) <= 1e-12 * v1
    assert np.max(np.abs(g1 - g2)) <= 1e-12 * np.max(np.abs(g1))
