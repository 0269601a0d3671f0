"""System state, one-step evolution, and the conflict-managed execution engine.

Two update paths exist on purpose. :func:`evolve_ideal` applies the linear
queue equations directly and is only valid for schedules that satisfy the
feasibility bounds; it raises if they do not. :func:`execute` accepts any
schedule: orders are expanded into unit operations, processed in ascending
rank, randomly ordered within a rank (random timeout + first-come-first-serve)
and clamped when the queues cannot support them. Excess orders fail and are
counted, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleScheduleError
from .stochastic import Purpose, RngStream, StepRealization
from .topology import NetworkModel


@dataclass
class SystemState:
    """Queue backlogs at the start of time step ``t``."""

    t: int
    ebits: np.ndarray
    demands: np.ndarray

    def copy(self) -> "SystemState":
        return SystemState(self.t, self.ebits.copy(), self.demands.copy())


def zero_state(model: NetworkModel) -> SystemState:
    z = np.zeros(model.n_queues, dtype=np.int64)
    return SystemState(0, z.copy(), z.copy())


def make_schedule(
    model: NetworkModel,
    swaps: dict[tuple[str, str, str], int] | None = None,
    consume: dict[tuple[str, str], int] | None = None,
) -> np.ndarray:
    """Schedule vector from named orders; convenience for tests and scripts."""
    r = np.zeros(model.n_ops, dtype=np.int64)
    for (left, mid, right), count in (swaps or {}).items():
        r[model.transition_position(left, mid, right)] = count
    for (a, b), count in (consume or {}).items():
        r[model.consumption_position(a, b)] = count
    return r


@dataclass
class ExecutionReport:
    """What the execution engine actually did with a schedule."""

    executed_swaps: np.ndarray
    executed_consumption: np.ndarray
    failed_swaps: np.ndarray
    failed_consumption: np.ndarray
    served_demand: int
    trace: list[tuple[int, str, int, bool]] = field(default_factory=list)

    @property
    def failed_total(self) -> int:
        return int(self.failed_swaps.sum() + self.failed_consumption.sum())


def feasible(
    model: NetworkModel, state: SystemState, realization: StepRealization, r: np.ndarray
) -> bool:
    """Whether a schedule respects both feasibility bounds: no queue is drained
    below what is physically available, and no queue serves more than its
    pending demand."""
    ebit_net = model.ebit_update_matrix @ r
    demand_net = model.demand_update_matrix @ r
    available = state.ebits - realization.losses + realization.arrivals
    pending = state.demands + realization.demands
    return bool(np.all(-ebit_net <= available) and np.all(-demand_net <= pending))


def evolve_ideal(
    model: NetworkModel, state: SystemState, realization: StepRealization, r: np.ndarray
) -> SystemState:
    """Exact linear one-step update, for feasibility-satisfying schedules.

    Ebit queues follow ``q + a - l + ebit_update @ r``; demand queues follow
    ``max(d + b + demand_update @ r, 0)``. A negative ebit component signals a
    schedule that violated the feasibility bounds and raises.
    """
    q_next = state.ebits - realization.losses + realization.arrivals + model.ebit_update_matrix @ r
    if (q_next < 0).any():
        bad = np.flatnonzero(q_next < 0)
        pairs = [model.queues.pairs[i] for i in bad]
        raise InfeasibleScheduleError(f"schedule drains queue(s) {pairs} below zero")
    d_next = np.maximum(state.demands + realization.demands + model.demand_update_matrix @ r, 0)
    return SystemState(state.t + 1, q_next, d_next)


def execute(
    model: NetworkModel,
    state: SystemState,
    realization: StepRealization,
    r: np.ndarray,
    rng: RngStream | np.random.Generator,
    collect_trace: bool = False,
) -> tuple[SystemState, ExecutionReport]:
    """Run a schedule through the rank/timeout/FCFS discipline.

    Orders are expanded to unit operations. Ranks are processed in ascending
    order; within one rank every unit draws a random timeout, i.e. the units
    are attempted in a uniformly random order. A unit swap executes iff both
    parent queues currently hold an ebit; a unit consumption executes iff its
    queue holds an ebit and a pending demand. Anything else fails silently
    into the report counters, so any schedule - feasible or not - leaves the
    queues nonnegative.
    """
    if (r < 0).any():
        raise ValueError("schedule vector must be nonnegative")
    if (realization.losses > state.ebits).any():
        raise ValueError("losses exceed the stored ebits they are drawn from")
    gen = rng.generator(Purpose.EXECUTION) if isinstance(rng, RngStream) else rng

    available = state.ebits - realization.losses + realization.arrivals
    pending = state.demands + realization.demands
    n_t = model.n_transitions

    executed_swaps = np.zeros(n_t, dtype=np.int64)
    failed_swaps = np.zeros(n_t, dtype=np.int64)
    executed_cons = np.zeros(model.n_queues, dtype=np.int64)
    failed_cons = np.zeros(model.n_queues, dtype=np.int64)
    trace: list[tuple[int, str, int, bool]] = []

    parent_pos = [
        (model.queues.position(*t.parents[0]), model.queues.position(*t.parents[1]),
         model.queues.position(*t.child))
        for t in model.transitions
    ]

    by_rank: dict[int, list[tuple[str, int]]] = {}
    for j in np.flatnonzero(r[:n_t] > 0):
        by_rank.setdefault(int(model.transition_ranks[j]), []).extend(
            [("swap", int(j))] * int(r[j])
        )
    for e in np.flatnonzero(r[n_t:] > 0):
        by_rank.setdefault(int(model.consumption_ranks[e]), []).extend(
            [("consume", int(e))] * int(r[n_t + e])
        )

    for rank in sorted(by_rank):
        units = by_rank[rank]
        order = gen.permutation(len(units)) if len(units) > 1 else range(len(units))
        for idx in order:
            kind, target = units[idx]
            if kind == "swap":
                p1, p2, child = parent_pos[target]
                ok = available[p1] >= 1 and available[p2] >= 1
                if ok:
                    available[p1] -= 1
                    available[p2] -= 1
                    available[child] += 1
                    executed_swaps[target] += 1
                else:
                    failed_swaps[target] += 1
            else:
                ok = available[target] >= 1 and pending[target] >= 1
                if ok:
                    available[target] -= 1
                    pending[target] -= 1
                    executed_cons[target] += 1
                else:
                    failed_cons[target] += 1
            if collect_trace:
                trace.append((rank, kind, target, bool(ok)))

    report = ExecutionReport(
        executed_swaps=executed_swaps,
        executed_consumption=executed_cons,
        failed_swaps=failed_swaps,
        failed_consumption=failed_cons,
        served_demand=int(executed_cons.sum()),
        trace=trace,
    )
    return SystemState(state.t + 1, available, pending), report
