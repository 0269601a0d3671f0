import json
import math

import networkx as nx
import numpy as np
import pytest

import swapsched as ss
from swapsched.topology import Transition, queue_spans

from conftest import chain_graph, random_models


class TestGenerators:
    def test_grid_5x5_counts(self):
        g = ss.generate_topology("grid", rows=5, cols=5)
        assert len(g.nodes) == 25
        assert len(g.edges) == 40

    def test_grid_rates_applied(self):
        g = ss.generate_topology("grid", rows=2, cols=2, alpha=0.25)
        assert all(rate == 0.25 for rate in g.rates.values())

    def test_holed_grid_is_connected_lattice_subgraph(self):
        full = {frozenset(e) for e in ss.generate_topology("grid", rows=6, cols=6).edges}
        g = ss.generate_topology("holed_grid", rows=6, cols=6, removal_prob=0.25, seed=3)
        assert {frozenset(e) for e in g.edges} <= full
        assert len(g.nodes) < 36

    def test_watts_strogatz_counts(self):
        g = ss.generate_topology("watts_strogatz", n=25, n_neighbors=4, p=0.2, seed=1)
        assert len(g.nodes) == 25
        assert len(g.edges) == 50

    def test_erdos_renyi_connected(self):
        g = ss.generate_topology("erdos_renyi", n=25, p=0.125, seed=11)
        assert len(g.nodes) == 25

    def test_erdos_renyi_p0_fails(self):
        with pytest.raises(ss.TopologyError, match="no connected graph"):
            ss.generate_topology("erdos_renyi", n=10, p=0.0, seed=0)

    def test_random_kind_requires_seed(self):
        with pytest.raises(ss.TopologyError, match="seed"):
            ss.generate_topology("erdos_renyi", n=10, p=0.5)

    def test_unknown_kind_and_params(self):
        with pytest.raises(ss.TopologyError):
            ss.generate_topology("ring", n=5)
        with pytest.raises(ss.TopologyError, match="unknown parameter"):
            ss.generate_topology("grid", rows=3, cols=3, p=0.5)

    def test_generation_deterministic(self):
        a = ss.generate_topology("watts_strogatz", n=14, n_neighbors=4, p=0.3, seed=9)
        b = ss.generate_topology("watts_strogatz", n=14, n_neighbors=4, p=0.3, seed=9)
        assert a.edges == b.edges


class TestEdgeList:
    def test_round_trip(self, tmp_path):
        text = "# comment\nA B 1.5\nB C 0.75\n"
        path = tmp_path / "edges.txt"
        path.write_text(text)
        g = ss.load_edge_list(path)
        assert g.nodes == ("A", "B", "C")
        assert g.rate("C", "B") == 0.75
        same = ss.generate_topology("custom", path=str(path))
        assert same.edges == g.edges

    def test_bad_lines(self):
        with pytest.raises(ss.TopologyError, match="line 1"):
            ss.load_edge_list("A B\n")
        with pytest.raises(ss.TopologyError, match="not a number"):
            ss.load_edge_list("A B x\n")

    def test_disconnected_rejected(self):
        with pytest.raises(ss.TopologyError, match="not connected"):
            ss.load_edge_list("A B 1\nC D 1\n")

    def test_self_loop_rejected(self):
        with pytest.raises(ss.TopologyError, match="self-pair"):
            ss.NetworkGraph([("A", "A", 1.0)])


class TestRoutes:
    def test_chain_single_route(self, abcd_graph):
        routes = ss.compute_routes(abcd_graph, ("A", "D"), removal_prob=0.0, rng=0)
        assert routes == [("A", "B", "C", "D")]

    def test_square_two_routes_match_exhaustive(self):
        square = ss.NetworkGraph([("A", "B", 1), ("B", "C", 1), ("C", "D", 1), ("A", "D", 1)])
        # oracle: all shortest paths on the 4-cycle
        g = nx.Graph([(a, b) for a, b in square.edges])
        oracle = {tuple(p) for p in nx.all_shortest_paths(g, "A", "C")}
        assert oracle == {("A", "B", "C"), ("A", "D", "C")}
        routes = ss.compute_routes(square, ("A", "C"), removal_prob=1.0, rng=0)
        assert set(routes) == oracle

    def test_degenerate_endpoints(self, abcd_graph):
        with pytest.raises(ss.RoutingError, match="degenerate"):
            ss.compute_routes(abcd_graph, ("A", "A"))

    def test_unknown_endpoint(self, abcd_graph):
        with pytest.raises(ss.RoutingError, match="not in graph"):
            ss.compute_routes(abcd_graph, ("A", "Z"))

    def test_duplicate_second_route_dropped(self, abcd_graph):
        # removing nothing reproduces the same shortest path
        routes = ss.compute_routes(abcd_graph, ("A", "C"), removal_prob=0.0, rng=1)
        assert len(routes) == 1

    def test_one_route_when_perturbation_disconnects(self, abcd_graph):
        routes = ss.compute_routes(abcd_graph, ("A", "D"), removal_prob=1.0, rng=1)
        assert routes == [("A", "B", "C", "D")]


class TestTransitions:
    def test_route_abcd(self):
        names = {t.name for t in ss.enumerate_transitions([("A", "B", "C", "D")])}
        assert names == {"A[B]C", "B[C]D", "A[B]D", "A[C]D"}

    def test_short_route_empty(self):
        assert ss.enumerate_transitions([("A", "B")]) == []

    def test_two_routes_union(self):
        routes = [("A", "B", "C"), ("A", "B", "D")]
        transitions = ss.enumerate_transitions(routes)
        assert {t.name for t in transitions} == {"A[B]C", "A[B]D"}
        graph = ss.NetworkGraph([("A", "B", 1), ("B", "C", 1), ("B", "D", 1)])
        queues = ss.build_queue_index(graph, routes)
        assert set(queues.pairs) == {("A", "B"), ("B", "C"), ("B", "D"), ("A", "C"), ("A", "D")}

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_single_route_counts(self, n):
        route = tuple(chr(ord("A") + i) for i in range(n))
        transitions = ss.enumerate_transitions([route])
        assert len(transitions) == math.comb(n, 3)
        graph = chain_graph("".join(route))
        queues = ss.build_queue_index(graph, [route])
        assert len(queues) == math.comb(n, 2)

    def test_normalization(self):
        assert Transition("C", "B", "A") == Transition("A", "B", "C")


TABLE_1 = {
    # (queue, transition name) -> entry; everything else is zero
    ("AB", "A[B]C"): -1, ("AB", "A[B]D"): -1,
    ("BC", "A[B]C"): -1, ("BC", "B[C]D"): -1,
    ("CD", "B[C]D"): -1, ("CD", "A[C]D"): -1,
    ("AC", "A[B]C"): +1, ("AC", "A[C]D"): -1,
    ("BD", "B[C]D"): +1, ("BD", "A[B]D"): -1,
    ("AD", "A[B]D"): +1, ("AD", "A[C]D"): +1,
}


def table_1_matrix(model):
    """The paper's example matrix laid out in the model's own index order."""
    expected = np.zeros((6, 4), dtype=np.int64)
    for (queue, transition), entry in TABLE_1.items():
        row = model.queue_position(queue[0], queue[1])
        col = model.transition_position(transition[0], transition[2], transition[4])
        expected[row, col] = entry
    return expected


class TestMatrices:
    def test_linear_abcd_matches_table(self, abcd_model):
        assert abcd_model.swap_matrix.shape == (6, 4)
        assert np.array_equal(abcd_model.swap_matrix, table_1_matrix(abcd_model))

    def test_extension_blocks(self, abcd_model):
        m = abcd_model
        assert m.ebit_update_matrix.shape == (6, 10)
        assert np.array_equal(m.ebit_update_matrix[:, :4], m.swap_matrix)
        assert np.array_equal(m.ebit_update_matrix[:, 4:], -np.eye(6, dtype=np.int64))
        assert np.array_equal(m.demand_update_matrix[:, :4], np.zeros((6, 4)))
        assert np.array_equal(m.demand_update_matrix[:, 4:], -np.eye(6, dtype=np.int64))

    def test_no_transitions(self):
        graph = ss.NetworkGraph([("A", "B", 1.0)])
        queues = ss.build_queue_index(graph, [("A", "B")])
        swap, ebit, demand = ss.build_matrices(queues, [])
        assert swap.shape == (1, 0)
        assert np.array_equal(ebit, -np.eye(1, dtype=np.int64))
        assert np.array_equal(demand, -np.eye(1, dtype=np.int64))

    def test_unindexed_queue_raises(self):
        graph = ss.NetworkGraph([("A", "B", 1.0)])
        queues = ss.build_queue_index(graph, [("A", "B")])
        with pytest.raises(ss.ModelConstructionError):
            ss.build_matrices(queues, [Transition("A", "B", "C")])

    def test_column_structure_random_models(self):
        for model in random_models(12, base_seed=100):
            m = model.swap_matrix
            if m.shape[1] == 0:
                continue
            assert np.all(m.sum(axis=0) == -1)
            assert np.all((m == -1).sum(axis=0) == 2)
            assert np.all((m == 1).sum(axis=0) == 1)


class TestRanks:
    def test_physical_consumption_rank_zero(self, abcd_model):
        assert abcd_model.consumption_ranks[abcd_model.queue_position("A", "B")] == 0

    def test_abcde_ladder(self):
        graph = chain_graph("ABCDE")
        pair = ss.make_user_pair(graph, ("A", "E"), 0.1)
        model = ss.build_model(graph, [pair], eta=0.9)
        t_rank = lambda a, b, c: model.transition_ranks[model.transition_position(a, b, c)]
        c_rank = lambda a, b: model.consumption_ranks[model.queue_position(a, b)]
        assert t_rank("B", "C", "D") == 1
        assert t_rank("B", "C", "E") == 3
        assert t_rank("A", "C", "D") == 3
        assert c_rank("C", "E") == 2
        assert c_rank("A", "C") == 2

    def test_span3_consumption(self, abcd_model):
        assert abcd_model.consumption_ranks[abcd_model.queue_position("A", "D")] == 4

    def test_spans(self, abcd_model):
        spans = {p: s for p, s in zip(abcd_model.queues.pairs, abcd_model.spans)}
        assert spans[("A", "B")] == 1
        assert spans[("A", "C")] == 2
        assert spans[("A", "D")] == 3

    def test_order_invariant_random_models(self):
        # producing transition < consumption < consuming transition, per queue
        for model in random_models(10, base_seed=300):
            for j, t in enumerate(model.transitions):
                child = model.queue_position(*t.child)
                rank = model.transition_ranks[j]
                if not _in_cycle(model, j):
                    assert rank < model.consumption_ranks[child]
                    for parent in t.parents:
                        assert model.consumption_ranks[model.queue_position(*parent)] < rank

    def test_nonnegative_and_total(self):
        for model in random_models(10, base_seed=500):
            assert (model.transition_ranks >= 0).all()
            assert (model.consumption_ranks >= 0).all()


def _in_cycle(model, j) -> bool:
    """Whether transition j produces a queue that (transitively) feeds it back."""
    import networkx as nx

    dag = nx.DiGraph()
    n_q = model.n_queues
    for col, t in enumerate(model.transitions):
        op = n_q + col
        for parent in t.parents:
            dag.add_edge(model.queue_position(*parent), op)
        dag.add_edge(op, model.queue_position(*t.child))
    comp = [c for c in nx.strongly_connected_components(dag) if len(c) > 1]
    return any(n_q + j in c for c in comp)


class TestModel:
    def test_serialization_deterministic(self):
        def build():
            graph = ss.generate_topology("erdos_renyi", n=12, p=0.3, seed=4)
            pairs = [
                ss.make_user_pair(graph, (graph.nodes[0], graph.nodes[-1]), 0.2,
                                  removal_prob=0.5, rng=np.random.default_rng(8)),
            ]
            return ss.build_model(graph, pairs, eta=0.8)

        assert build().to_json() == build().to_json()
        json.loads(build().to_json())  # well-formed

    def test_with_demand_rates(self, abcd_model):
        clone = abcd_model.with_demand_rates({("A", "D"): 2.5})
        assert clone.demand_means[clone.queue_position("A", "D")] == 2.5
        assert abcd_model.demand_means[abcd_model.queue_position("A", "D")] == 0.5
        assert clone.swap_matrix is abcd_model.swap_matrix

    def test_duplicate_pairs_rejected(self, abcd_graph):
        pair = ss.make_user_pair(abcd_graph, ("A", "D"), 0.1)
        with pytest.raises(ss.ModelConstructionError, match="duplicate"):
            ss.build_model(abcd_graph, [pair, pair], eta=0.9)
