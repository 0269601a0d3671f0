"""Scheduling policies: greedy, Max-Weight and Quadratic at three information levels.

The optimization-based policies share one program shape. Weights reward
consumption by the pending demand on each queue (swap variables always carry
zero weight); constraints cap the net outflow of every ebit queue by what is
available and consumption by pending demand. The three information levels
differ only in how the right-hand sides and demand weights are filled in:

- fully informed (``*_fi``): exact end-of-step arrivals, losses and demand
  arrivals; decisions are feasible by construction;
- average-only / partially informed (``*_pi``): start-of-step snapshot plus
  the process means (``eta q + alpha`` on the ebit side, ``d + beta`` on the
  demand side); decisions may be infeasible and rely on execution clamping;
- node-local (``*_li``): every node solves its own program with exact values
  on its incident queues and averages elsewhere, then applies the components
  it owns.

Quadratic policies add a unit quadratic penalty on the consumption block;
Max-Weight drops it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import SystemState
from .errors import ParameterError
from .solver import DEFAULT_NODE_BUDGET, IntegerProgram, solve
from .stochastic import Purpose, RngStream, StepRealization
from .topology import NetworkModel


class PolicyKind(str, Enum):
    GREEDY = "greedy"
    MW_FI = "mw_fi"
    MW_PI = "mw_pi"
    MW_LI = "mw_li"
    QUAD_FI = "quad_fi"
    QUAD_PI = "quad_pi"
    QUAD_LI = "quad_li"

    @property
    def quadratic(self) -> bool:
        return self in (PolicyKind.QUAD_FI, PolicyKind.QUAD_PI, PolicyKind.QUAD_LI)

    @property
    def information(self) -> str:
        if self is PolicyKind.GREEDY:
            return "local"
        return self.value.split("_")[1]


@dataclass(frozen=True)
class FullInfo:
    """Exact end-of-step knowledge: snapshot plus realized randomness."""

    ebits: np.ndarray
    demands: np.ndarray
    arrivals: np.ndarray
    losses: np.ndarray
    demand_arrivals: np.ndarray


@dataclass(frozen=True)
class AverageInfo:
    """Start-of-step snapshot plus process averages."""

    ebits: np.ndarray
    demands: np.ndarray
    arrival_means: np.ndarray
    demand_means: np.ndarray
    eta: float


@dataclass(frozen=True)
class LocalInfo:
    """What a single node knows: exact values on its incident queues
    (``connected`` mask), snapshot and averages everywhere else."""

    node: str
    connected: np.ndarray
    ebits: np.ndarray
    demands: np.ndarray
    arrivals: np.ndarray
    losses: np.ndarray
    demand_arrivals: np.ndarray
    arrival_means: np.ndarray
    demand_means: np.ndarray
    eta: float


InfoSet = FullInfo | AverageInfo | LocalInfo


def connected_queues(model: NetworkModel, node: str) -> np.ndarray:
    """Boolean mask over queues incident to ``node`` (physical and virtual)."""
    return np.array([node in pair for pair in model.queues.pairs], dtype=bool)


def make_info(
    kind: PolicyKind,
    model: NetworkModel,
    state: SystemState,
    realization: StepRealization,
    node: str | None = None,
) -> InfoSet:
    level = kind.information
    if level == "fi" or kind is PolicyKind.GREEDY:
        return FullInfo(
            state.ebits, state.demands, realization.arrivals, realization.losses, realization.demands
        )
    if level == "pi":
        return AverageInfo(
            state.ebits, state.demands, model.arrival_means, model.demand_means, model.eta
        )
    if level == "li":
        if node is None:
            raise ParameterError("node-local info requires a node id")
        return LocalInfo(
            node,
            connected_queues(model, node),
            state.ebits,
            state.demands,
            realization.arrivals,
            realization.losses,
            realization.demands,
            model.arrival_means,
            model.demand_means,
            model.eta,
        )
    raise ParameterError(f"no info set for policy kind {kind}")


def build_weights(model: NetworkModel, info: InfoSet) -> np.ndarray:
    """Linear objective over the schedule vector: zero on every swap slot,
    minus the (expected) pending demand on every consumption slot."""
    w = np.zeros(model.n_ops)
    if isinstance(info, FullInfo):
        pending = info.demands + info.demand_arrivals
    elif isinstance(info, AverageInfo):
        pending = info.demands + info.demand_means
    else:
        pending = info.demands + np.where(info.connected, info.demand_arrivals, info.demand_means)
    w[model.n_transitions:] = -pending
    return w


def _stacked_constraint_matrix(model: NetworkModel) -> np.ndarray:
    cached = getattr(model, "_stacked_A", None)
    if cached is None:
        cached = np.vstack([-model.ebit_update_matrix, -model.demand_update_matrix]).astype(float)
        model._stacked_A = cached
    return cached


def build_constraints(model: NetworkModel, info: InfoSet) -> tuple[np.ndarray, np.ndarray]:
    """Stacked feasibility rows ``A r <= c``: net ebit outflow per queue capped
    by availability, consumption capped by pending demand. Exact rows where
    the info set has realizations, expectation rows elsewhere (real-valued
    right-hand sides are used as-is)."""
    A = _stacked_constraint_matrix(model)
    if isinstance(info, FullInfo):
        ebit_rhs = info.ebits - info.losses + info.arrivals
        demand_rhs = info.demands + info.demand_arrivals
    elif isinstance(info, AverageInfo):
        ebit_rhs = info.eta * info.ebits + info.arrival_means
        demand_rhs = info.demands + info.demand_means
    else:
        exact_ebit = info.ebits - info.losses + info.arrivals
        mean_ebit = info.eta * info.ebits + info.arrival_means
        ebit_rhs = np.where(info.connected, exact_ebit, mean_ebit)
        demand_rhs = info.demands + np.where(info.connected, info.demand_arrivals, info.demand_means)
    return A, np.concatenate([ebit_rhs, demand_rhs]).astype(float)


def _branch_order(model: NetworkModel, w: np.ndarray) -> np.ndarray:
    """Consumption slots first (most negative weight first, then queue index),
    swap slots after; the search's first descent is then greedy-by-weight and
    tie preference goes to serving the fullest demand queues."""
    cons = np.arange(model.n_transitions, model.n_ops)
    cons = cons[np.lexsort((cons, w[cons]))]
    return np.concatenate([cons, np.arange(model.n_transitions)])


def _schedule_program(model: NetworkModel, info: InfoSet, quadratic: bool) -> IntegerProgram:
    w = build_weights(model, info)
    A, c = build_constraints(model, info)
    psi = np.zeros(model.n_ops)
    if quadratic:
        psi[model.n_transitions:] = 1.0
    # tie preference: serve demand (consumption slots explored from their caps
    # downward), then as few swaps as possible
    descending = np.zeros(model.n_ops, dtype=bool)
    descending[model.n_transitions:] = True
    return IntegerProgram(w, psi, A, c, branch_order=_branch_order(model, w), descending=descending)


def drift_objective(model: NetworkModel, info: FullInfo, r: np.ndarray) -> float:
    """Quadratic-drift score of a schedule under full information.

    ``(d + b)^T demand_update r`` plus the squared consumption counts; the
    schedule that minimizes it is the quadratic policy's choice, and 0 (the
    empty schedule) is always attainable, so optima are never positive.
    """
    pending = info.demands + info.demand_arrivals
    consumption = np.asarray(r[model.n_transitions:], dtype=float)
    return float(pending @ (model.demand_update_matrix @ r) + consumption @ consumption)


def greedy_decide(
    model: NetworkModel,
    state: SystemState,
    realization: StepRealization,
    rng: RngStream | np.random.Generator,
) -> np.ndarray:
    """Greedy schedule: serve whatever demand can be met from stored pairs,
    then keep picking uniformly at random among enabled swaps (both parents
    nonempty in the working copy) until none remain, demand or not. Each
    scheduled unit updates the working copy, so a swap's child can enable
    later picks within the same step."""
    gen = rng.generator(Purpose.POLICY) if isinstance(rng, RngStream) else rng
    available = (state.ebits - realization.losses + realization.arrivals).astype(np.int64)
    pending = (state.demands + realization.demands).astype(np.int64)
    r = np.zeros(model.n_ops, dtype=np.int64)
    for e in np.flatnonzero(model.demand_means > 0):
        served = min(int(available[e]), int(pending[e]))
        if served > 0:
            r[model.n_transitions + e] = served
            available[e] -= served
            pending[e] -= served
    parent_pos = [
        (model.queues.position(*t.parents[0]), model.queues.position(*t.parents[1]),
         model.queues.position(*t.child))
        for t in model.transitions
    ]
    while True:
        enabled = [
            j for j, (p1, p2, _) in enumerate(parent_pos)
            if available[p1] >= 1 and available[p2] >= 1
        ]
        if not enabled:
            break
        j = enabled[int(gen.integers(len(enabled)))]
        p1, p2, child = parent_pos[j]
        r[j] += 1
        available[p1] -= 1
        available[p2] -= 1
        available[child] += 1
    return r


def _owned_slots(model: NetworkModel, node: str) -> np.ndarray:
    """Schedule components node applies itself: swaps it performs (it is the
    middle node) and consumptions of queues whose lexicographically smaller
    endpoint it is."""
    mask = np.zeros(model.n_ops, dtype=bool)
    for j, t in enumerate(model.transitions):
        if t.swap == node:
            mask[j] = True
    for e, pair in enumerate(model.queues.pairs):
        if pair[0] == node:
            mask[model.n_transitions + e] = True
    return mask


def decide(
    kind: PolicyKind,
    model: NetworkModel,
    state: SystemState,
    realization: StepRealization,
    rng: RngStream | np.random.Generator | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
    _solve=solve,
) -> np.ndarray:
    """One scheduling decision under the given policy kind.

    Node-local kinds assemble the global schedule from per-node solutions:
    each node contributes the swap orders it performs and the consumption
    orders of the queues it owns. The combined vector may be infeasible;
    the execution engine absorbs that.
    """
    if kind is PolicyKind.GREEDY:
        if rng is None:
            raise ParameterError("greedy policy needs a random stream")
        return greedy_decide(model, state, realization, rng)
    if kind.information in ("fi", "pi"):
        info = make_info(kind, model, state, realization)
        program = _schedule_program(model, info, kind.quadratic)
        return _solve(program, node_budget).r
    r = np.zeros(model.n_ops, dtype=np.int64)
    for node in model.graph.nodes:
        owned = _owned_slots(model, node)
        if not owned.any():
            continue
        info = make_info(kind, model, state, realization, node=node)
        program = _schedule_program(model, info, kind.quadratic)
        r[owned] = _solve(program, node_budget).r[owned]
    return r


class Policy:
    """A policy bound to a model, with memoized program solves.

    The optimization policies are pure functions of their information set, so
    identical (weights, right-hand side) pairs recur constantly in stable
    regimes; a bounded FIFO memo keeps re-solves cheap without affecting
    determinism.
    """

    def __init__(self, kind: PolicyKind, model: NetworkModel, node_budget: int = DEFAULT_NODE_BUDGET,
                 cache_size: int = 100_000):
        self.kind = PolicyKind(kind)
        self.model = model
        self.node_budget = node_budget
        self._cache: dict[bytes, np.ndarray] = {}
        self._cache_size = cache_size
        self._psi = np.zeros(model.n_ops)
        if self.kind.quadratic:
            self._psi[model.n_transitions:] = 1.0
        self._descending = np.zeros(model.n_ops, dtype=bool)
        self._descending[model.n_transitions:] = True
        if self.kind.information == "li":
            self._owned = {n: _owned_slots(model, n) for n in model.graph.nodes}

    def _memo_decide(self, info: InfoSet, tag: bytes) -> np.ndarray:
        w = build_weights(self.model, info)
        A, c = build_constraints(self.model, info)
        key = tag + w.tobytes() + c.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        program = IntegerProgram(
            w, self._psi, A, c, branch_order=_branch_order(self.model, w),
            descending=self._descending,
        )
        r = solve(program, self.node_budget).r
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = r
        return r

    def decide(
        self,
        state: SystemState,
        realization: StepRealization,
        rng: RngStream | np.random.Generator | None = None,
    ) -> np.ndarray:
        model = self.model
        if self.kind is PolicyKind.GREEDY:
            if rng is None:
                raise ParameterError("greedy policy needs a random stream")
            return greedy_decide(model, state, realization, rng)
        if self.kind.information in ("fi", "pi"):
            info = make_info(self.kind, model, state, realization)
            return self._memo_decide(info, b"g")
        r = np.zeros(model.n_ops, dtype=np.int64)
        for node in model.graph.nodes:
            owned = self._owned[node]
            if not owned.any():
                continue
            info = make_info(self.kind, model, state, realization, node=node)
            r[owned] = self._memo_decide(info, node.encode() + b"|")[owned]
        return r


class FixedSchedulePolicy:
    """Replays a scripted list of schedule vectors; for tests and walkthroughs."""

    kind = None

    def __init__(self, schedules: list[np.ndarray]):
        self.schedules = [np.asarray(r, dtype=np.int64) for r in schedules]
        self._next = 0

    def decide(self, state, realization, rng=None) -> np.ndarray:
        r = self.schedules[self._next]
        self._next += 1
        return r


def make_policy(kind: PolicyKind | str, model: NetworkModel,
                node_budget: int = DEFAULT_NODE_BUDGET) -> Policy:
    return Policy(PolicyKind(kind), model, node_budget)
