"""Network graphs, service routes, swap transitions and the queue-space matrices.

The central artifact is :class:`NetworkModel`: an immutable bundle of the
routed topology, the dense queue/transition index maps, the integer matrices
that map a schedule vector onto ebit- and demand-queue updates, and the
execution rank of every operation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import ModelConstructionError, RoutingError, TopologyError

Pair = tuple[str, str]
Route = tuple[str, ...]

#: Attempts made to hit a connected graph before giving up on random kinds.
MAX_CONNECTIVITY_ATTEMPTS = 100


def normalize_pair(a: str, b: str) -> Pair:
    if a == b:
        raise TopologyError(f"self-pair {a!r} is not a valid queue or edge")
    return (a, b) if a < b else (b, a)


class NetworkGraph:
    """Connected undirected graph with a per-edge ebit generation rate.

    Nodes are opaque strings; edges are unordered pairs. Rates are in ebits
    per time step and must be nonnegative.
    """

    def __init__(self, edges: dict[Pair, float] | list[tuple[str, str, float]]):
        if not isinstance(edges, dict):
            edges = {normalize_pair(a, b): float(rate) for a, b, rate in edges}
        rates: dict[Pair, float] = {}
        for (a, b), rate in edges.items():
            pair = normalize_pair(a, b)
            if pair in rates:
                raise TopologyError(f"duplicate edge {pair}")
            if rate < 0:
                raise TopologyError(f"edge {pair} has negative rate {rate}")
            rates[pair] = float(rate)
        if not rates:
            raise TopologyError("graph has no edges")
        self.edges: tuple[Pair, ...] = tuple(sorted(rates))
        self.rates: dict[Pair, float] = {e: rates[e] for e in self.edges}
        nodes: set[str] = set()
        for a, b in self.edges:
            nodes.update((a, b))
        self.nodes: tuple[str, ...] = tuple(sorted(nodes))
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        self._adj: dict[str, tuple[str, ...]] = {n: tuple(sorted(v)) for n, v in adj.items()}
        if not self._is_connected():
            raise TopologyError("graph is not connected")

    def _is_connected(self) -> bool:
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for m in self._adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == len(self.nodes)

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self._adj[node]

    def has_edge(self, a: str, b: str) -> bool:
        return normalize_pair(a, b) in self.rates

    def rate(self, a: str, b: str) -> float:
        return self.rates[normalize_pair(a, b)]

    def scaled(self, factor: float) -> "NetworkGraph":
        """Copy with every edge rate multiplied by ``factor`` (unit conversion)."""
        return NetworkGraph({e: r * factor for e, r in self.rates.items()})

    def to_dict(self) -> dict:
        return {"edges": [[a, b, self.rates[(a, b)]] for a, b in self.edges]}

    def __repr__(self) -> str:
        return f"NetworkGraph({len(self.nodes)} nodes, {len(self.edges)} edges)"


def _shortest_path(adj: dict[str, tuple[str, ...]], src: str, dst: str) -> Route | None:
    """Deterministic BFS shortest path (neighbors visited in sorted order)."""
    if src == dst:
        return (src,)
    parent: dict[str, str] = {src: src}
    frontier = [src]
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            for m in adj.get(node, ()):
                if m in parent:
                    continue
                parent[m] = node
                if m == dst:
                    path = [dst]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                nxt.append(m)
        frontier = nxt
    return None


def load_edge_list(source: str | Path) -> NetworkGraph:
    """Parse the custom edge-list format: one ``node_a node_b alpha`` per line.

    ``source`` may be a path or the text itself. Blank lines and ``#`` comments
    are skipped; node identifiers are opaque strings.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    else:
        text = str(source)
    triples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TopologyError(f"edge list line {lineno}: expected 'node_a node_b alpha', got {raw!r}")
        a, b, rate = parts
        try:
            triples.append((a, b, float(rate)))
        except ValueError:
            raise TopologyError(f"edge list line {lineno}: rate {rate!r} is not a number") from None
    if not triples:
        raise TopologyError("edge list is empty")
    return NetworkGraph(triples)


def _grid_edges(rows: int, cols: int, alpha: float) -> list[tuple[str, str, float]]:
    def label(r: int, c: int) -> str:
        return f"n{r:02d}-{c:02d}"

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((label(r, c), label(r, c + 1), alpha))
            if r + 1 < rows:
                edges.append((label(r, c), label(r + 1, c), alpha))
    return edges


def generate_topology(kind: str, *, alpha: float = 1.0, seed: int | None = None, **params) -> NetworkGraph:
    """Build a network graph of the given ``kind``.

    Kinds and their parameters:

    - ``grid``: complete ``rows`` x ``cols`` lattice;
    - ``holed_grid``: lattice whose nodes are removed independently with
      probability ``removal_prob`` (requires ``seed``);
    - ``erdos_renyi``: G(n, p) (requires ``seed``);
    - ``watts_strogatz``: ring of ``n`` nodes, ``n_neighbors`` nearest
      neighbors, rewiring probability ``p`` (requires ``seed``);
    - ``custom``: edge list via ``path`` or ``text`` (per-edge rates).

    Random kinds are resampled with an incremented seed until connected, up to
    :data:`MAX_CONNECTIVITY_ATTEMPTS` times; a persistent failure raises
    :class:`TopologyError`. ``alpha`` (ebits per step) is applied uniformly to
    every edge of the generated kinds.
    """
    if alpha < 0:
        raise TopologyError(f"alpha must be nonnegative, got {alpha}")

    def require(names: tuple[str, ...]) -> dict:
        missing = [n for n in names if n not in params]
        unknown = [n for n in params if n not in names]
        if missing:
            raise TopologyError(f"{kind}: missing parameter(s) {missing}")
        if unknown:
            raise TopologyError(f"{kind}: unknown parameter(s) {unknown}")
        return params

    if kind == "grid":
        p = require(("rows", "cols"))
        rows, cols = int(p["rows"]), int(p["cols"])
        if rows * cols < 2:
            raise TopologyError("grid needs at least two nodes")
        return NetworkGraph(_grid_edges(rows, cols, alpha))

    if kind == "custom":
        if "path" in params and len(params) == 1:
            return load_edge_list(Path(params["path"]))
        if "text" in params and len(params) == 1:
            return load_edge_list(params["text"])
        raise TopologyError("custom: expected exactly one of 'path' or 'text'")

    if kind not in ("holed_grid", "erdos_renyi", "watts_strogatz"):
        raise TopologyError(f"unknown topology kind {kind!r}")
    if seed is None:
        raise TopologyError(f"{kind}: a seed is required for random topologies")

    for attempt in range(MAX_CONNECTIVITY_ATTEMPTS):
        s = int(seed) + attempt
        if kind == "holed_grid":
            p = require(("rows", "cols", "removal_prob"))
            rows, cols, prob = int(p["rows"]), int(p["cols"]), float(p["removal_prob"])
            rng = np.random.default_rng(s)
            keep = {
                f"n{r:02d}-{c:02d}"
                for r in range(rows)
                for c in range(cols)
                if rng.random() >= prob
            }
            edges = [(a, b, alpha) for a, b, _ in _grid_edges(rows, cols, alpha) if a in keep and b in keep]
            if len(edges) < 1 or len(keep) < 2:
                continue
            try:
                return NetworkGraph(edges)
            except TopologyError:
                continue
        elif kind == "erdos_renyi":
            p = require(("n", "p"))
            g = nx.gnp_random_graph(int(p["n"]), float(p["p"]), seed=s)
        else:
            p = require(("n", "n_neighbors", "p"))
            g = nx.watts_strogatz_graph(int(p["n"]), int(p["n_neighbors"]), float(p["p"]), seed=s)
        if g.number_of_edges() and nx.is_connected(g):
            width = len(str(g.number_of_nodes() - 1))
            return NetworkGraph([(f"n{a:0{width}d}", f"n{b:0{width}d}", alpha) for a, b in g.edges()])
    raise TopologyError(
        f"{kind}: no connected graph within {MAX_CONNECTIVITY_ATTEMPTS} attempts (params {params})"
    )


def compute_routes(
    graph: NetworkGraph,
    endpoints: tuple[str, str],
    removal_prob: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> list[Route]:
    """Compute one or two service routes between ``endpoints``.

    The first route is a shortest path. The second is a shortest path in the
    graph obtained by removing each first-route edge independently with
    probability ``removal_prob``; it is dropped when it duplicates the first
    or when the perturbed graph disconnects the endpoints.
    """
    a, b = endpoints
    if a == b:
        raise RoutingError(f"degenerate endpoints ({a}, {b})")
    for n in (a, b):
        if n not in graph._adj:
            raise RoutingError(f"endpoint {n!r} not in graph")
    first = _shortest_path(graph._adj, a, b)
    if first is None:
        raise RoutingError(f"endpoints {a!r} and {b!r} are disconnected")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    removed = {
        normalize_pair(u, v)
        for u, v in zip(first, first[1:])
        if rng.random() < removal_prob
    }
    if removed:
        adj = {
            n: tuple(m for m in ms if normalize_pair(n, m) not in removed)
            for n, ms in graph._adj.items()
        }
    else:
        adj = graph._adj
    second = _shortest_path(adj, a, b)
    if second is None or second == first:
        return [first]
    return [first, second]


@dataclass(frozen=True, order=True)
class Transition:
    """One swap operation type: consume queues (left, swap) and (swap, right),
    produce queue (left, right). Normalized so that ``left < right``."""

    left: str
    swap: str
    right: str

    def __post_init__(self):
        if self.left > self.right:
            lo, hi = self.right, self.left
            object.__setattr__(self, "left", lo)
            object.__setattr__(self, "right", hi)
        if len({self.left, self.swap, self.right}) != 3:
            raise ModelConstructionError(f"transition nodes must be distinct: {self}")

    @property
    def parents(self) -> tuple[Pair, Pair]:
        return (normalize_pair(self.left, self.swap), normalize_pair(self.swap, self.right))

    @property
    def child(self) -> Pair:
        return (self.left, self.right)

    @property
    def name(self) -> str:
        return f"{self.left}[{self.swap}]{self.right}"


def enumerate_transitions(routes: list[Route]) -> list[Transition]:
    """All swap transitions allowed by the routes.

    For a route ``v_1 .. v_n`` every ordered triple ``(v_a, v_b, v_c)`` with
    ``a < b < c`` yields one transition; "downward" swaps (against route
    order) are never produced. The union over routes is deduplicated and
    returned in sorted order.
    """
    seen: set[Transition] = set()
    for route in routes:
        n = len(route)
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    seen.add(Transition(route[i], route[j], route[k]))
    return sorted(seen)


class QueueIndex:
    """Bijection from ebit-queue node pairs to dense indices ``0..N-1``.

    A queue exists for every physical edge and for every pair of nodes that
    co-occur on a service route; it is physical iff its pair is an edge.
    Queues are ordered lexicographically by their (sorted) node pair.
    """

    def __init__(self, pairs: set[Pair], physical: set[Pair]):
        self.pairs: tuple[Pair, ...] = tuple(sorted(pairs))
        self._pos: dict[Pair, int] = {p: i for i, p in enumerate(self.pairs)}
        self.physical: np.ndarray = np.array([p in physical for p in self.pairs], dtype=bool)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: Pair) -> bool:
        return pair in self._pos

    def position(self, a: str, b: str) -> int:
        pair = normalize_pair(a, b)
        try:
            return self._pos[pair]
        except KeyError:
            raise ModelConstructionError(f"no queue for pair {pair}") from None

    def is_physical(self, a: str, b: str) -> bool:
        return bool(self.physical[self.position(a, b)])


def build_queue_index(graph: NetworkGraph, routes: list[Route]) -> QueueIndex:
    pairs: set[Pair] = set(graph.edges)
    for route in routes:
        for i in range(len(route)):
            for j in range(i + 1, len(route)):
                pairs.add(normalize_pair(route[i], route[j]))
    return QueueIndex(pairs, set(graph.edges))


def build_matrices(
    queue_index: QueueIndex, transitions: list[Transition]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build the swap matrix and its two schedule-facing extensions.

    Returns ``(swap, ebit_update, demand_update)`` where ``swap`` is
    N_queues x N_transitions with -1 on each transition's parent rows and +1
    on its child row, ``ebit_update = [swap | -I]`` maps a full schedule
    (swap counts then consumption counts) onto ebit queues, and
    ``demand_update = [0 | -I]`` exposes only the consumption block to demand
    queues.
    """
    n_q, n_t = len(queue_index), len(transitions)
    swap = np.zeros((n_q, n_t), dtype=np.int64)
    for col, t in enumerate(transitions):
        p1, p2 = t.parents
        swap[queue_index.position(*p1), col] -= 1
        swap[queue_index.position(*p2), col] -= 1
        swap[queue_index.position(*t.child), col] += 1
    eye = np.eye(n_q, dtype=np.int64)
    ebit_update = np.hstack([swap, -eye])
    demand_update = np.hstack([np.zeros((n_q, n_t), dtype=np.int64), -eye])
    return swap, ebit_update, demand_update


def queue_spans(queue_index: QueueIndex, routes: list[Route]) -> np.ndarray:
    """Span of each queue: 1 for physical queues, otherwise the minimum number
    of physical hops its pair covers along any route containing both nodes."""
    spans = np.where(queue_index.physical, 1, 0).astype(np.int64)
    for route in routes:
        for i in range(len(route)):
            for j in range(i + 1, len(route)):
                pos = queue_index.position(route[i], route[j])
                if queue_index.physical[pos]:
                    continue
                hops = j - i
                if spans[pos] == 0 or hops < spans[pos]:
                    spans[pos] = hops
    if (spans == 0).any():
        missing = [queue_index.pairs[i] for i in np.flatnonzero(spans == 0)]
        raise ModelConstructionError(f"queues with undefined span (not physical, on no route): {missing}")
    return spans


def assign_ranks(
    queue_index: QueueIndex, transitions: list[Transition], routes: list[Route]
) -> tuple[np.ndarray, np.ndarray]:
    """Execution rank of every operation (transitions, then consumptions).

    Base ranks follow the span ladder: consuming a span-s queue ranks
    ``2(s-1)``, a transition producing a span-s child ranks ``2s-3``, so low
    spans act first and consumption of a level precedes swaps drawing on it.
    Routes whose spans disagree can break that ladder (a second route may
    produce a queue that is physical, or shorter elsewhere), so ranks are
    lifted to the smallest values that respect the producer -> consume ->
    consuming-transition order; on chains and span-consistent models the lift
    leaves the base ranks untouched. Mutually-producing queue cliques (only
    possible with rerouted second routes) share a rank.
    """
    spans = queue_spans(queue_index, routes)
    n_q, n_t = len(queue_index), len(transitions)
    base = np.empty(n_q + n_t, dtype=np.int64)
    base[:n_q] = 2 * (spans - 1)
    dag = nx.DiGraph()
    dag.add_nodes_from(range(n_q + n_t))
    for col, t in enumerate(transitions):
        op = n_q + col
        base[op] = 2 * spans[queue_index.position(*t.child)] - 3
        for parent in t.parents:
            dag.add_edge(queue_index.position(*parent), op)
        dag.add_edge(op, queue_index.position(*t.child))
    rank = base.copy()
    condensed = nx.condensation(dag)
    for comp_id in nx.topological_sort(condensed):
        members = condensed.nodes[comp_id]["members"]
        level = max(rank[m] for m in members)
        for m in members:
            for pred in dag.predecessors(m):
                if pred not in members:
                    level = max(level, rank[pred] + 1)
        for m in members:
            rank[m] = level
    return rank[n_q:].copy(), rank[:n_q].copy()


@dataclass(frozen=True)
class UserPair:
    """An (Alice, Bob) service pair with its demand rate and routes."""

    endpoints: Pair
    beta: float
    routes: tuple[Route, ...]
    kind: str = "fixed"  # fixed | parasitic

    def __post_init__(self):
        if self.kind not in ("fixed", "parasitic"):
            raise ModelConstructionError(f"unknown pair kind {self.kind!r}")
        if self.beta < 0:
            raise ModelConstructionError(f"pair {self.endpoints}: negative demand rate {self.beta}")
        if not self.routes:
            raise ModelConstructionError(f"pair {self.endpoints}: no routes")


def make_user_pair(
    graph: NetworkGraph,
    endpoints: tuple[str, str],
    beta: float,
    *,
    kind: str = "fixed",
    removal_prob: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> UserPair:
    routes = compute_routes(graph, endpoints, removal_prob, rng)
    return UserPair(normalize_pair(*endpoints), float(beta), tuple(routes), kind)


class NetworkModel:
    """Immutable routed-network model: index maps, matrices and ranks.

    Attributes
    ----------
    swap_matrix : (N_queues, N_transitions) int array, the per-transition net
        effect on ebit queues.
    ebit_update_matrix : ``[swap_matrix | -I]``.
    demand_update_matrix : ``[0 | -I]``.
    transition_ranks, consumption_ranks : execution ranks per operation.
    arrival_means : per-queue mean ebit generation (zero on virtual queues).
    demand_means : per-queue mean demand arrivals (zero off user pairs).
    """

    def __init__(self, graph: NetworkGraph, user_pairs: list[UserPair], eta: float):
        if not 0.0 < eta <= 1.0:
            raise ModelConstructionError(f"eta must be in (0, 1], got {eta}")
        endpoints_seen = set()
        for pair in user_pairs:
            if pair.endpoints in endpoints_seen:
                raise ModelConstructionError(f"duplicate user pair {pair.endpoints}")
            endpoints_seen.add(pair.endpoints)
        self.graph = graph
        self.user_pairs: tuple[UserPair, ...] = tuple(user_pairs)
        self.eta = float(eta)
        routes = [r for p in self.user_pairs for r in p.routes]
        self.routes: tuple[Route, ...] = tuple(routes)
        self.queues = build_queue_index(graph, routes)
        self.transitions: tuple[Transition, ...] = tuple(enumerate_transitions(routes))
        self._transition_pos = {t: i for i, t in enumerate(self.transitions)}
        self.swap_matrix, self.ebit_update_matrix, self.demand_update_matrix = build_matrices(
            self.queues, list(self.transitions)
        )
        self.transition_ranks, self.consumption_ranks = assign_ranks(
            self.queues, list(self.transitions), routes
        )
        self.spans = queue_spans(self.queues, routes)
        self.n_queues = len(self.queues)
        self.n_transitions = len(self.transitions)
        self.n_ops = self.n_queues + self.n_transitions
        self.arrival_means = np.zeros(self.n_queues)
        for pair, rate in graph.rates.items():
            self.arrival_means[self.queues.position(*pair)] = rate
        self.demand_means = np.zeros(self.n_queues)
        for pair in self.user_pairs:
            self.demand_means[self.queues.position(*pair.endpoints)] += pair.beta

    def queue_position(self, a: str, b: str) -> int:
        return self.queues.position(a, b)

    def transition_position(self, left: str, swap: str, right: str) -> int:
        t = Transition(left, swap, right)
        try:
            return self._transition_pos[t]
        except KeyError:
            raise ModelConstructionError(f"no transition {t.name} in model") from None

    def consumption_position(self, a: str, b: str) -> int:
        """Index of a queue's consumption slot within a schedule vector."""
        return self.n_transitions + self.queues.position(a, b)

    def with_demand_rates(self, rates: dict[Pair, float]) -> "NetworkModel":
        """Copy sharing all structure, with user-pair demand rates replaced.

        ``rates`` maps pair endpoints to new beta values; pairs not listed
        keep their rate. Matrices, index maps and ranks are shared, so this
        is cheap enough to call per sweep cell.
        """
        clone = object.__new__(NetworkModel)
        clone.__dict__.update(self.__dict__)
        new_pairs = []
        for pair in self.user_pairs:
            beta = rates.get(pair.endpoints, pair.beta)
            new_pairs.append(UserPair(pair.endpoints, float(beta), pair.routes, pair.kind))
        clone.user_pairs = tuple(new_pairs)
        clone.demand_means = np.zeros(self.n_queues)
        for pair in clone.user_pairs:
            clone.demand_means[self.queues.position(*pair.endpoints)] += pair.beta
        return clone

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "eta": self.eta,
            "user_pairs": [
                {
                    "endpoints": list(p.endpoints),
                    "beta": p.beta,
                    "kind": p.kind,
                    "routes": [list(r) for r in p.routes],
                }
                for p in self.user_pairs
            ],
            "queues": [list(p) for p in self.queues.pairs],
            "physical": self.queues.physical.astype(int).tolist(),
            "transitions": [t.name for t in self.transitions],
            "swap_matrix": self.swap_matrix.tolist(),
            "transition_ranks": self.transition_ranks.tolist(),
            "consumption_ranks": self.consumption_ranks.tolist(),
            "arrival_means": self.arrival_means.tolist(),
            "demand_means": self.demand_means.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def __repr__(self) -> str:
        return (
            f"NetworkModel({len(self.graph.nodes)} nodes, {self.n_queues} queues, "
            f"{self.n_transitions} transitions, {len(self.user_pairs)} pairs)"
        )


def build_model(graph: NetworkGraph, user_pairs: list[UserPair], eta: float) -> NetworkModel:
    return NetworkModel(graph, user_pairs, eta)
