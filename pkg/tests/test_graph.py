import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netgrow import graph as gc
from netgrow.graph import Graph, GraphBuilder, GraphError


def path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def ring(n, z):
    return Graph.from_edges(n, [(i, (i + d) % n) for i in range(n) for d in range(1, z // 2 + 1)])


@st.composite
def graphs(draw, max_nodes=12):
    n = draw(st.integers(1, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return Graph.from_edges(n, chosen)


class TestAddEdge:
    def test_single_edge(self):
        g, changed = gc.add_edge(Graph.from_edges(3, []), 0, 1)
        assert changed and g.num_edges == 1
        assert g.degrees().tolist() == [1, 1, 0]

    def test_idempotent(self):
        g, _ = gc.add_edge(Graph.from_edges(3, []), 0, 1)
        g2, changed = gc.add_edge(g, 1, 0)
        assert not changed and g2 == g

    @pytest.mark.parametrize("u,v", [(2, 2), (0, 3), (-1, 0)])
    def test_rejects_bad_edges(self, u, v):
        with pytest.raises(GraphError):
            gc.add_edge(Graph.from_edges(3, []), u, v)

    def test_builder_symmetry(self):
        b = GraphBuilder(4)
        b.add_edge(3, 1)
        assert b.has_edge(1, 3) and b.degree(1) == b.degree(3) == 1
        assert b.remove_edge(1, 3) and not b.has_edge(3, 1)


class TestDegrees:
    def test_ring(self):
        assert set(gc.degrees(ring(10, 4)).tolist()) == {4}

    def test_path(self):
        assert gc.degrees(path(3)).tolist() == [1, 2, 1]

    def test_empty(self):
        assert gc.degrees(Graph.from_edges(5, [])).tolist() == [0] * 5

    @given(graphs())
    def test_handshake(self, g):
        assert g.degrees().sum() == 2 * g.num_edges


class TestNeighborhoods:
    def test_path_radius_two(self):
        assert gc.k_hop_nodes(path(5), [0], 2) == [0, 1, 2]

    def test_zero_radius(self):
        assert gc.k_hop_nodes(ring(10, 4), [7], 0) == [7]

    def test_union_of_balls(self):
        assert gc.k_hop_nodes(path(5), [0, 4], 1) == [0, 1, 3, 4]

    def test_invalid_seed(self):
        with pytest.raises(GraphError):
            gc.k_hop_nodes(path(3), [5], 1)

    def test_receptive_field_radius(self):
        assert gc.receptive_field(path(8), 0, 1) == [0, 1, 2, 3]
        assert gc.receptive_field(path(8), 4, 0) == [3, 4, 5]

    def test_star_receptive_field(self):
        star = Graph.from_edges(6, [(0, i) for i in range(1, 6)])
        for k in range(3):
            assert gc.receptive_field(star, 0, k) == list(range(6))

    @given(graphs(), st.data())
    def test_balls_are_nested(self, g, data):
        seeds = data.draw(st.lists(st.integers(0, g.n - 1), min_size=1, unique=True))
        prev = set(gc.k_hop_nodes(g, seeds, 0))
        for k in range(1, g.n + 1):
            cur = set(gc.k_hop_nodes(g, seeds, k))
            assert prev <= cur
            prev = cur
        assert set(gc.k_hop_nodes(g, seeds, g.n)) == set(gc.k_hop_nodes(g, seeds, g.n + 3))

    @given(graphs(), st.data())
    def test_edge_additions_grow_balls(self, g, data):
        seeds = data.draw(st.lists(st.integers(0, g.n - 1), min_size=1, unique=True))
        k = data.draw(st.integers(0, 4))
        bigger = g
        if g.n > 1:
            u, v = data.draw(st.lists(st.integers(0, g.n - 1), min_size=2, max_size=2, unique=True))
            bigger, _ = gc.add_edge(g, u, v)
        assert set(gc.k_hop_nodes(g, seeds, k)) <= set(gc.k_hop_nodes(bigger, seeds, k))


class TestInducedSubgraph:
    def test_triangle_pair(self):
        tri = Graph.from_edges(3, [(0, 1), (0, 2), (1, 2)])
        sub, labels = gc.induced_subgraph(tri, [0, 1])
        assert sub.n == 2 and sub.edges == ((0, 1),) and labels == [0, 1]

    def test_all_nodes_is_identity(self):
        g = ring(8, 4)
        sub, labels = gc.induced_subgraph(g, range(8))
        assert sub == g and labels == list(range(8))

    def test_isolated_selection(self):
        g = Graph.from_edges(5, [(0, 1)])
        sub, labels = gc.induced_subgraph(g, [2, 4])
        assert sub.num_edges == 0 and labels == [2, 4]

    def test_relabels_compactly(self):
        sub, labels = gc.induced_subgraph(path(6), [5, 3, 4])
        assert labels == [3, 4, 5] and sub.edges == ((0, 1), (1, 2))


class TestSerialization:
    def test_canonical_round_trip(self):
        text = '{"n":3,"edges":[[0,1],[1,2]]}'
        g, theta = gc.parse(text)
        assert g == path(3) and theta is None
        assert gc.serialize(g) == text

    def test_two_isolated_nodes(self):
        g, _ = gc.parse('{"n":2,"edges":[]}')
        assert g.n == 2 and g.num_edges == 0

    @pytest.mark.parametrize(
        "text",
        [
            '{"n":2,"edges":[[1,0]]}',
            '{"n":3,"edges":[[0,1],[0,1]]}',
            '{"n":3,"edges":[[1,2],[0,1]]}',
            '{"n":2,"edges":[[0,2]]}',
            '{"edges":[]}',
            "[1, 2]",
            "{not json",
        ],
    )
    def test_malformed_records(self, text):
        with pytest.raises(GraphError, match="line 7"):
            gc.parse(text, line=7)

    def test_theta_round_trip(self):
        g, theta = gc.parse(gc.serialize(path(4), [0.25, 0.125]))
        assert g == path(4) and theta == [0.25, 0.125]

    def test_file_round_trip_reports_line(self, tmp_path):
        f = tmp_path / "d.jsonl"
        gc.write_jsonl(f, [(path(3), [0.5]), (ring(6, 2), [0.1])])
        assert [g for g, _ in gc.read_jsonl(f)] == [path(3), ring(6, 2)]
        with open(f, "a") as fh:
            fh.write('{"n":2,"edges":[[1,0]]}\n')
        with pytest.raises(GraphError, match="line 3"):
            gc.read_jsonl(f)

    @given(graphs())
    def test_graph_round_trip(self, g):
        text = gc.serialize(g)
        assert gc.parse(text)[0] == g
        assert gc.serialize(gc.parse(text)[0]) == text
        rec = json.loads(text)
        assert rec["edges"] == sorted(rec["edges"])


@settings(max_examples=50)
@given(graphs(), st.randoms(use_true_random=False))
def test_relabel_preserves_degree_multiset(g, rnd):
    perm = list(range(g.n))
    rnd.shuffle(perm)
    h = gc.relabel(g, perm)
    assert sorted(h.degrees().tolist()) == sorted(g.degrees().tolist())
    assert np.array_equal(h.degrees()[perm], g.degrees())


def test_disjoint_union_offsets():
    u = gc.disjoint_union([path(3), path(2)])
    assert u.n == 5 and u.edges == ((0, 1), (1, 2), (3, 4))
