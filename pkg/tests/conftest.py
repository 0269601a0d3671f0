import numpy as np
import pytest

import swapsched as ss


def chain_graph(nodes: str, alpha: float = 1.0) -> ss.NetworkGraph:
    labels = list(nodes)
    return ss.NetworkGraph([(a, b, alpha) for a, b in zip(labels, labels[1:])])


def make_state(model, ebits=None, demands=None, t=0):
    """SystemState from {(a, b): count} dicts keyed by queue pairs."""
    state = ss.zero_state(model)
    state.t = t
    for (a, b), n in (ebits or {}).items():
        state.ebits[model.queue_position(a, b)] = n
    for (a, b), n in (demands or {}).items():
        state.demands[model.queue_position(a, b)] = n
    return state


def make_realization(model, arrivals=None, losses=None, demands=None):
    real = ss.StepRealization.zeros(model.n_queues)
    for (a, b), n in (arrivals or {}).items():
        real.arrivals[model.queue_position(a, b)] = n
    for (a, b), n in (losses or {}).items():
        real.losses[model.queue_position(a, b)] = n
    for (a, b), n in (demands or {}).items():
        real.demands[model.queue_position(a, b)] = n
    return real


@pytest.fixture
def abcd_graph():
    return chain_graph("ABCD")


@pytest.fixture
def abcd_model(abcd_graph):
    pair = ss.make_user_pair(abcd_graph, ("A", "D"), 0.5)
    return ss.build_model(abcd_graph, [pair], eta=0.9)


@pytest.fixture
def abcd_two_pair_model(abcd_graph):
    pairs = [
        ss.make_user_pair(abcd_graph, ("A", "D"), 0.2),
        ss.make_user_pair(abcd_graph, ("B", "C"), 0.2),
    ]
    return ss.build_model(abcd_graph, pairs, eta=0.9)


def random_models(count: int, base_seed: int = 0):
    """A stream of small routed models over all four generator kinds."""
    kinds = ["grid", "holed_grid", "erdos_renyi", "watts_strogatz"]
    made = 0
    seed = base_seed
    while made < count:
        kind = kinds[made % len(kinds)]
        seed += 1
        try:
            if kind == "grid":
                graph = ss.generate_topology("grid", rows=2 + made % 3, cols=3)
            elif kind == "holed_grid":
                graph = ss.generate_topology("holed_grid", rows=4, cols=4, removal_prob=0.2, seed=seed)
            elif kind == "erdos_renyi":
                graph = ss.generate_topology("erdos_renyi", n=10, p=0.3, seed=seed)
            else:
                graph = ss.generate_topology("watts_strogatz", n=10, n_neighbors=4, p=0.2, seed=seed)
        except ss.TopologyError:
            continue
        gen = np.random.default_rng(seed)
        nodes = graph.nodes
        pairs = []
        endpoints_seen = set()
        for _ in range(3):
            a, b = gen.choice(len(nodes), size=2, replace=False)
            key = tuple(sorted((nodes[a], nodes[b])))
            if key in endpoints_seen:
                continue
            endpoints_seen.add(key)
            pairs.append(
                ss.make_user_pair(graph, key, 0.1, removal_prob=0.4, rng=np.random.default_rng(seed + 77))
            )
        if not pairs:
            continue
        made += 1
        yield ss.build_model(graph, pairs, eta=0.9)
