import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import expit, xlogy

from beliefopt.bethe import (Beliefs, BoundsError, beliefs_from_q, bethe_free_energy, d2F_dxi2,
                             dF_dxi, edge_scratch, grad_q, logits, pair_table, positive_root_zeta,
                             reduced_free_energy, xi_bounds, xi_solve)
from beliefopt.exact import brute_force
from beliefopt.model import Model

from conftest import Q_TWO, XI_TWO, random_model, random_tree_model

interior = st.floats(0.001, 0.999)
weight = st.floats(-8.0, 8.0)


def edge_objective(qi, qj, w):
    """Edge terms of F_b as a function of xi alone."""
    def f(xi):
        tab = np.array([xi, qi - xi, qj - xi, xi + 1 - qi - qj])
        return -w * xi + float(np.sum(xlogy(tab, tab)))
    return f


class TestXiBounds:
    @pytest.mark.parametrize("q,expected", [((0.5, 0.5), (0, 0.5)), ((0.9, 0.8), (0.7, 0.8)), ((0.3, 0.6), (0, 0.3))])
    def test_examples(self, q, expected):
        assert xi_bounds(*q) == pytest.approx(expected)


class TestXiSolve:
    def test_independent_limit(self):
        assert xi_solve(0.5, 0.5, 0.0) == 0.25
        assert xi_solve(0.3, 0.8, 0.0) == pytest.approx(0.24, abs=1e-16)

    def test_ln2(self):
        assert xi_solve(0.5, 0.5, math.log(2)) == pytest.approx(1 - math.sqrt(2) / 2, abs=1e-15)

    def test_ln2_matches_grid_minimization(self):
        f = edge_objective(0.5, 0.5, math.log(2))
        res = minimize_scalar(f, bounds=(1e-12, 0.5 - 1e-12), method="bounded", options={"xatol": 1e-12})
        assert xi_solve(0.5, 0.5, math.log(2)) == pytest.approx(res.x, abs=1e-7)

    def test_large_coupling_approaches_bounds(self):
        hi = xi_solve(0.3, 0.6, 20.0)
        assert hi < 0.3 and 0.3 - hi < 1e-6
        lo = xi_solve(0.3, 0.6, -20.0)
        assert 0 < lo < 1e-6

    def test_tiny_weights_continuous(self):
        for w in (1e-9, -1e-9, 1e-7, -1e-12):
            xi = xi_solve(0.3, 0.7, w)
            assert xi == pytest.approx(0.21 + w * 0.21 * 0.7 * 0.3, rel=1e-12)

    def test_vectorized(self):
        qi = np.array([0.2, 0.5, 0.9])
        out = xi_solve(qi, qi[::-1], np.array([-1.0, 0.0, 3.0]))
        assert out.shape == (3,)
        assert out[1] == 0.25

    def test_non_finite_raises(self):
        with pytest.raises(ValueError):
            xi_solve(0.5, math.nan, 1.0)
        with pytest.raises(ValueError):
            xi_solve(0.5, 0.5, math.inf)

    @settings(max_examples=300, deadline=None)
    @given(interior, interior, weight)
    def test_strictly_inside_and_stationary(self, qi, qj, w):
        xi = xi_solve(qi, qj, w)
        lo, hi = xi_bounds(qi, qj)
        assert lo < xi < hi
        assert abs(dF_dxi(qi, qj, xi, w)) < 1e-8

    @settings(max_examples=200, deadline=None)
    @given(interior, interior, weight)
    def test_symmetric_in_marginals(self, qi, qj, w):
        assert xi_solve(qi, qj, w) == pytest.approx(xi_solve(qj, qi, w), rel=1e-12, abs=1e-300)

    @settings(max_examples=200, deadline=None)
    @given(interior, interior, st.floats(-5, 5), st.floats(0.01, 2))
    def test_increasing_in_weight(self, qi, qj, w, dw):
        assert xi_solve(qi, qj, w + dw) > xi_solve(qi, qj, w)

    @settings(max_examples=200, deadline=None)
    @given(interior, interior, weight)
    def test_sign_of_covariance_follows_weight(self, qi, qj, w):
        cov = xi_solve(qi, qj, w) - qi * qj
        assert cov * w >= -1e-15

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.02, 0.98), st.floats(0.02, 0.98), st.floats(-4, 4))
    def test_matches_convex_minimization(self, qi, qj, w):
        lo, hi = xi_bounds(qi, qj)
        res = minimize_scalar(edge_objective(qi, qj, w), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13})
        assert xi_solve(qi, qj, w) == pytest.approx(res.x, abs=1e-6)


class TestDerivatives:
    def test_zero_at_independence(self):
        assert dF_dxi(0.5, 0.5, 0.25, 0.0) == 0.0

    def test_zero_at_solution(self):
        w = math.log(2)
        assert abs(dF_dxi(0.5, 0.5, xi_solve(0.5, 0.5, w), w)) < 1e-10

    def test_boundary_behaviour(self):
        lo, hi = xi_bounds(0.4, 0.7)
        eps = 1e-9
        assert dF_dxi(0.4, 0.7, lo + eps, 1.0) < -10
        assert dF_dxi(0.4, 0.7, hi - eps, 1.0) > 10

    def test_outside_bounds_raises(self):
        with pytest.raises(BoundsError):
            dF_dxi(0.4, 0.7, 0.5, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(interior, interior, st.floats(0.001, 0.999))
    def test_convex(self, qi, qj, t):
        lo, hi = xi_bounds(qi, qj)
        xi = lo + t * (hi - lo)
        if not lo < xi < hi:
            return
        assert d2F_dxi2(qi, qj, xi) > 0


class TestPositiveRoot:
    def test_ln2_example(self):
        z = positive_root_zeta(0.5, 0.5, math.log(2))
        assert z == pytest.approx(1 + math.sqrt(2) / 2)
        assert z > 0.5

    def test_degenerate_at_zero(self):
        with pytest.raises(ValueError):
            positive_root_zeta(0.5, 0.5, 0.0)

    @settings(max_examples=300, deadline=None)
    @given(interior, interior, st.floats(0.01, 8.0))
    def test_positive_weight_above_upper_bound(self, qi, qj, w):
        assert positive_root_zeta(qi, qj, w) >= max(qi, qj) * (1 - 1e-12)

    @settings(max_examples=300, deadline=None)
    @given(interior, interior, st.floats(-8.0, -0.01))
    def test_negative_weight_below_lower_bound(self, qi, qj, w):
        assert positive_root_zeta(qi, qj, w) <= qi + qj - 1 + 1e-12

    def test_scratch(self):
        s = edge_scratch(0.5, 0.5, math.log(2))
        assert s.alpha == pytest.approx(1.0) and s.alpha * s.beta == pytest.approx(1.0)
        assert s.Q == pytest.approx(2.0)


class TestPairTable:
    def test_examples(self):
        assert pair_table(0.5, 0.5, 0.25) == pytest.approx((0.25,) * 4)
        assert pair_table(0.3, 0.6, 0.2) == pytest.approx((0.2, 0.1, 0.4, 0.3))

    def test_rejects_infeasible(self):
        with pytest.raises(BoundsError):
            pair_table(0.3, 0.6, 0.35)
        with pytest.raises(BoundsError):
            pair_table(0.3, 0.2, -0.01)


class TestFreeEnergy:
    def test_uniform_single_edge(self):
        m = Model(2, [(0, 1, 0.0)], [0, 0])
        assert bethe_free_energy(m, Beliefs([0.5, 0.5], [0.25])) == pytest.approx(-math.log(4))

    def test_two_node_exact(self, two_node):
        F = bethe_free_energy(two_node, Beliefs([Q_TWO, Q_TWO], [XI_TWO]))
        assert F == pytest.approx(-math.log(3 + math.e), abs=1e-12)

    def test_isolated_node(self):
        m = Model(1, [], [0.0])
        assert bethe_free_energy(m, Beliefs([0.5], [])) == pytest.approx(-math.log(2))

    def test_shape_mismatch(self, two_node):
        with pytest.raises(ValueError):
            bethe_free_energy(two_node, Beliefs([0.5], []))

    def test_trees_equal_minus_log_z(self, rng):
        for _ in range(10):
            m = random_tree_model(rng, int(rng.integers(2, 11)))
            ex = brute_force(m)
            assert bethe_free_energy(m, Beliefs(ex.q, ex.xi)) == pytest.approx(-ex.log_z, abs=1e-10)
            assert reduced_free_energy(m, ex.q) == pytest.approx(-ex.log_z, abs=1e-10)

    def test_reduced_matches_explicit(self, rng):
        m = random_model(rng, 7, w_scale=2.0)
        q = rng.uniform(0.05, 0.95, 7)
        assert reduced_free_energy(m, q) == pytest.approx(bethe_free_energy(m, beliefs_from_q(m, q)), abs=1e-12)


class TestGradient:
    def test_isolated_node_symmetric_point(self):
        assert grad_q(Model(1, [], [0.0]), [0.5]) == pytest.approx([0.0])

    def test_two_node_stationary(self, two_node):
        assert np.all(np.abs(grad_q(two_node, [Q_TWO, Q_TWO])) < 1e-12)

    def test_stationary_at_tree_marginals(self, rng):
        m = random_tree_model(rng, 9)
        assert np.max(np.abs(grad_q(m, brute_force(m).q))) < 1e-9

    def test_finite_differences(self, rng):
        h = 1e-6
        for _ in range(10):
            n = int(rng.integers(2, 9))
            m = random_model(rng, n, w_scale=2.0)
            y = rng.normal(0, 1.5, n)
            g = grad_q(m, expit(y))
            fd = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h
                fd[i] = (reduced_free_energy(m, expit(y + e)) - reduced_free_energy(m, expit(y - e))) / (2 * h)
            assert np.linalg.norm(g - fd) < 1e-5 * max(np.linalg.norm(fd), 1e-3)

    def test_rejects_boundary(self, two_node):
        with pytest.raises(BoundsError):
            grad_q(two_node, [0.0, 0.5])

    def test_logits_clamped(self):
        y = logits([0.0, 1.0, 0.5])
        assert np.all(np.isfinite(y)) and y[2] == 0.0
