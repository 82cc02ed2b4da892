import json
import math

import numpy as np
import pytest

from beliefopt.exact import brute_force
from beliefopt.model import (Model, ModelError, condition, lattice_cubic_periodic, lattice_square,
                             load_model, model_from_dict, random_tree, sample_instance, save_model,
                             supergaussian_scale)


class TestModel:
    def test_rejects_unordered_edge(self):
        with pytest.raises(ModelError, match="i < j"):
            Model(2, [(1, 0, 1.0)], [0, 0])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ModelError, match="duplicate"):
            Model(3, [(0, 1, 1.0), (0, 1, 2.0)], [0, 0, 0])

    def test_rejects_out_of_range(self):
        with pytest.raises(ModelError):
            Model(2, [(0, 2, 1.0)], [0, 0])

    def test_rejects_non_finite(self):
        with pytest.raises(ModelError):
            Model(2, [(0, 1, math.inf)], [0, 0])
        with pytest.raises(ModelError):
            Model(2, [], [0, math.nan])

    def test_weight_matrix_symmetric(self):
        m = Model(3, [(0, 1, 0.5), (1, 2, -2.0)], [0, 0, 0])
        W = m.weight_matrix()
        assert np.array_equal(W, W.T)
        assert W[2, 1] == -2.0 and W[0, 0] == 0.0

    def test_log_potential(self):
        m = Model(2, [(0, 1, 1.5)], [0.25, -1.0])
        s = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
        assert np.allclose(m.log_potential(s), [0.0, 0.25, -1.0, 0.75])

    def test_adjacency_and_degree(self):
        m = Model(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], np.zeros(4))
        assert list(m.degree) == [3, 1, 1, 1]
        assert sorted(m.neighbors(0)) == [1, 2, 3]


class TestCondition:
    def test_clamp_to_one_adds_weight(self, two_node):
        c = condition(two_node, {1: 1})
        assert c.model.n == 1 and c.model.num_edges == 0
        assert c.model.biases[0] == pytest.approx(1.0)
        assert c.index_map == {0: 0}

    def test_clamp_to_zero_adds_nothing(self, two_node):
        c = condition(two_node, {1: 0})
        assert c.model.biases[0] == 0.0

    def test_chain_middle_clamped_matches_enumeration(self):
        m = Model(3, [(0, 1, 0.5), (1, 2, 0.5)], [0.1, -0.3, 0.2])
        c = condition(m, {1: 1})
        assert c.model.num_edges == 0
        assert np.allclose(c.model.biases, [0.6, 0.7])
        # conditional marginal from the full joint
        states = np.array([[a, 1, b] for a in (0, 1) for b in (0, 1)])
        p = np.exp(m.log_potential(states))
        q0 = p[states[:, 0] == 1].sum() / p.sum()
        r = brute_force(c.model)
        assert r.q[0] == pytest.approx(q0, abs=1e-12)

    def test_log_offset_recovers_partition_function(self):
        rng = np.random.default_rng(3)
        m = Model(4, [(0, 1, 0.7), (1, 2, -0.4), (2, 3, 1.1), (0, 3, 0.3)], rng.standard_normal(4))
        c = condition(m, {2: 1, 0: 0})
        states = np.array([[0, a, 1, b] for a in (0, 1) for b in (0, 1)])
        log_z = np.log(np.exp(m.log_potential(states)).sum())
        assert brute_force(c.model).log_z + c.log_offset == pytest.approx(log_z, abs=1e-12)

    def test_errors(self, two_node):
        with pytest.raises(ModelError):
            condition(two_node, {5: 1})
        with pytest.raises(ModelError):
            condition(two_node, {0: 2})
        with pytest.raises(ModelError):
            condition(two_node, [(0, 1), (0, 0)])


class TestLattices:
    @pytest.mark.parametrize("dims,n,m", [((10, 10), 100, 180), ((1, 1), 1, 0), ((2, 2), 4, 4), ((6, 6), 36, 60)])
    def test_square_counts(self, dims, n, m):
        t = lattice_square(*dims)
        assert (t.n, len(t.edges)) == (n, m)

    @pytest.mark.parametrize("side,n,m", [(5, 125, 375), (3, 27, 81), (4, 64, 192)])
    def test_cubic_counts_and_degree(self, side, n, m):
        t = lattice_cubic_periodic(side)
        assert (t.n, len(t.edges)) == (n, m)
        assert np.all(t.degrees() == 6)

    def test_cubic_rejects_small_side(self):
        with pytest.raises(ModelError):
            lattice_cubic_periodic(2)

    def test_tree_is_connected_and_acyclic(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 7, 12):
            t = random_tree(n, rng)
            assert len(t.edges) == n - 1
            parent = list(range(n))

            def find(x):
                while parent[x] != x:
                    x = parent[x]
                return x
            for i, j in t.edges:
                ri, rj = find(i), find(j)
                assert ri != rj
                parent[ri] = rj


class TestSampleInstance:
    def test_deterministic(self):
        t = lattice_square(4, 4)
        a = sample_instance(t, 2.0, 0.5, 7)
        b = sample_instance(t, 2.0, 0.5, 7)
        assert a.edges == b.edges and np.array_equal(a.biases, b.biases)

    def test_zero_weight_scale(self):
        t = lattice_square(3, 3)
        m = sample_instance(t, 0.0, 1.0, 1)
        assert np.all(m.w == 0)
        rng = np.random.default_rng(1)
        rng.standard_normal(len(t.edges))
        assert np.allclose(m.biases, rng.standard_normal(t.n))

    def test_shifted_bias_gives_half_means(self):
        t = lattice_square(4, 4)
        for seed in range(3):
            m = sample_instance(t, 3.0, 0.0, seed)
            assert np.allclose(brute_force(m).q, 0.5, atol=1e-12)

    def test_two_node_symmetry(self):
        w = 2.3
        m = Model(2, [(0, 1, w)], [-w / 2, -w / 2])
        assert np.allclose(brute_force(m).q, 0.5)

    def test_weight_scale_is_standard_deviation(self):
        t = lattice_square(100, 100)
        m = sample_instance(t, 1.0, 0.0, 0)
        assert np.std(m.w) == pytest.approx(1.0, abs=0.02)
        # heavier tails than a normal
        z = m.w / np.std(m.w)
        assert np.mean(z ** 4) > 3.2

    def test_scale_constant(self):
        assert supergaussian_scale(1.0) == pytest.approx(1.0)
        assert supergaussian_scale(1.5) == pytest.approx(1.2633, abs=1e-4)

    def test_negative_scale(self):
        with pytest.raises(ModelError):
            sample_instance(lattice_square(2, 2), -1.0, 0.0, 0)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        m = Model(3, [(0, 1, 0.5), (1, 2, -1.25)], [0.1, 0.2, 0.3])
        path = tmp_path / "m.json"
        save_model(m, path, {2: 1})
        m2, ev = load_model(path)
        assert m2.edges == m.edges and np.array_equal(m2.biases, m.biases)
        assert ev == {2: 1}

    @pytest.mark.parametrize("data,msg", [
        ({"biases": []}, "num_nodes"),
        ({"num_nodes": 2, "biases": [0]}, "biases"),
        ({"num_nodes": 2, "edges": [[0, 1, 1], [0, 1, 2]]}, r"edges\[1\]"),
        ({"num_nodes": 2, "edges": [[0, 3, 1]]}, r"edges\[0\]"),
        ({"num_nodes": 2, "edges": [[0, 1]]}, r"edges\[0\]"),
        ({"num_nodes": 2, "evidence": {"0": 3}}, "evidence"),
        ({"num_nodes": 2, "evidence": {"9": 1}}, "evidence"),
    ])
    def test_diagnostics(self, data, msg):
        with pytest.raises(ModelError, match=msg):
            model_from_dict(data)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n "num_nodes": 2,\n "biases": [0, 0\n}')
        with pytest.raises(ModelError, match="line"):
            load_model(path)

    def test_biases_default_to_zero(self):
        m, ev = model_from_dict(json.loads('{"num_nodes": 2, "edges": [[0, 1, 1.0]]}'))
        assert np.all(m.biases == 0) and ev == {}
