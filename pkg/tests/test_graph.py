import numpy as np
import pytest

from megcf.errors import (
    DanglingEntityError,
    DuplicateEdgeError,
    EmptyGraphError,
    IndexOutOfRangeError,
    ZeroDegreeError,
)
from megcf.graph import (
    build_interaction_graph,
    build_tripartite_graph,
    edge_norm,
)


class TestInteractionGraph:
    def test_degrees_from_tiny_fixture(self):
        g = build_interaction_graph([(0, 0), (0, 1), (1, 1)], 2, 2)
        assert g.user_degrees.tolist() == [2, 1]
        assert g.item_degrees.tolist() == [1, 2]
        assert g.num_edges == 3

    def test_empty_edge_list_rejected(self):
        with pytest.raises(EmptyGraphError):
            build_interaction_graph([], 2, 2)

    def test_duplicate_edge_rejected(self):
        with pytest.raises(DuplicateEdgeError):
            build_interaction_graph([(0, 0), (1, 1), (0, 0)], 2, 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexOutOfRangeError):
            build_interaction_graph([(0, 2)], 1, 2)
        with pytest.raises(IndexOutOfRangeError):
            build_interaction_graph([(-1, 0)], 1, 2)

    def test_adjacency_round_trip(self):
        rng = np.random.default_rng(3)
        pairs = {(int(rng.integers(0, 9)), int(rng.integers(0, 7)))
                 for _ in range(40)}
        g = build_interaction_graph(sorted(pairs), 9, 7)
        for u in range(9):
            for i in g.user_items(u):
                assert u in g.item_users(i)
        for i in range(7):
            for u in g.item_users(i):
                assert i in g.user_items(u)

    def test_degree_conservation(self):
        rng = np.random.default_rng(4)
        pairs = {(int(rng.integers(0, 6)), int(rng.integers(0, 6)))
                 for _ in range(20)}
        g = build_interaction_graph(sorted(pairs), 6, 6)
        assert g.user_degrees.sum() == g.item_degrees.sum() == g.num_edges

    def test_canonical_under_permutation(self):
        edges = [(0, 1), (2, 0), (1, 1), (0, 0), (2, 2)]
        a = build_interaction_graph(edges, 3, 3)
        b = build_interaction_graph(edges[::-1], 3, 3)
        np.testing.assert_array_equal(a.edges, b.edges)
        np.testing.assert_array_equal(a.user_indices, b.user_indices)
        np.testing.assert_array_equal(a.item_indices, b.item_indices)

    def test_neighbor_lists_sorted(self):
        g = build_interaction_graph([(0, 3), (0, 1), (0, 2)], 1, 4)
        assert g.user_items(0).tolist() == [1, 2, 3]

    def test_beauty_scale_counts(self):
        # 15,576 users x 8,678 items, 139,318 unique interactions
        rng = np.random.default_rng(0)
        flat = np.unique(rng.integers(0, 15576 * 8678, size=160000))
        flat = flat[:139318]
        edges = np.stack([flat // 8678, flat % 8678], axis=1)
        g = build_interaction_graph(edges, 15576, 8678)
        assert g.num_edges == 139318
        density = g.num_edges / (15576 * 8678)
        assert density == pytest.approx(0.00103, rel=0.01)


class TestTripartiteGraph:
    def test_entity_degrees(self):
        g1 = build_interaction_graph([(0, 0), (0, 1)], 1, 2)
        tg = build_tripartite_graph(g1, [(0, 0), (1, 0), (1, 1)], 2)
        assert tg.entity_degrees.tolist() == [2, 1]
        assert tg.item_entities(1).tolist() == [0, 1]
        assert tg.item_total_degrees.tolist() == [2, 3]

    def test_dangling_entity_rejected(self):
        g1 = build_interaction_graph([(0, 0), (0, 1)], 1, 2)
        with pytest.raises(DanglingEntityError):
            build_tripartite_graph(g1, [(0, 0)], 2)
        with pytest.raises(DanglingEntityError):
            build_tripartite_graph(g1, [], 1)

    def test_zero_entities_allowed(self):
        g1 = build_interaction_graph([(0, 0), (0, 1)], 1, 2)
        tg = build_tripartite_graph(g1, [], 0)
        assert tg.num_entities == 0
        np.testing.assert_array_equal(tg.item_total_degrees, g1.item_degrees)

    def test_duplicate_item_entity_rejected(self):
        g1 = build_interaction_graph([(0, 0)], 1, 1)
        with pytest.raises(DuplicateEdgeError):
            build_tripartite_graph(g1, [(0, 0), (0, 0)], 1)

    def test_entity_degree_conservation(self):
        g1 = build_interaction_graph([(0, 0), (0, 1), (1, 2)], 2, 3)
        ie = [(0, 0), (1, 0), (2, 1), (2, 0)]
        tg = build_tripartite_graph(g1, ie, 2)
        assert tg.entity_degrees.sum() == len(ie)
        assert tg.item_entity_degrees.sum() == len(ie)

    def test_beauty_scale_entity_budget(self):
        # visual + textual entity spaces stay within their union bound
        num_entities = 1080 + 11450
        assert num_entities <= 12530


class TestEdgeNorm:
    def test_unit_degrees(self):
        assert edge_norm(1, 1, 0.0) == 1.0
        assert edge_norm(1, 1, 0.3) == 1.0

    def test_classical_symmetric(self):
        assert edge_norm(4, 4, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_alpha_quarter(self):
        # 4**-0.5 * 4**-0.25
        expected = 0.3535533905932738
        assert edge_norm(4, 4, 0.25) == pytest.approx(expected, abs=1e-12)

    def test_zero_degree_rejected(self):
        with pytest.raises(ZeroDegreeError):
            edge_norm(0, 1, 0.0)
        with pytest.raises(ZeroDegreeError):
            edge_norm(1, 0, 0.0)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            edge_norm(1, 1, 0.5)
        with pytest.raises(ValueError):
            edge_norm(1, 1, -0.1)

    def test_monotone_in_degrees_and_alpha(self):
        for d in (2, 3, 8):
            assert edge_norm(d + 1, 3, 0.1) < edge_norm(d, 3, 0.1)
            assert edge_norm(3, d + 1, 0.1) < edge_norm(3, d, 0.1)
            assert edge_norm(3, d, 0.3) > edge_norm(3, d, 0.1)

    def test_vectorized(self):
        out = edge_norm(np.array([1, 4]), np.array([1, 4]), 0.0)
        np.testing.assert_allclose(out, [1.0, 0.25])
