"""Simulation runs, demand-rate sweeps and stability classification.

A step follows the paper-clock: snapshot the queues, let generation, loss and
demand arrival realize, hand the policy its information set, then push the
decision through the execution engine. Runs start from empty queues. Sweeps
evaluate a (beta1, beta2) grid for the two fixed user pairs, re-drawing the
parasitic pairs every run, and can skip cells dominated by an
unequivocally-unstable cell.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ExecutionReport, SystemState, execute, zero_state
from .errors import ParameterError, SimulationError
from .policies import FixedSchedulePolicy, Policy, PolicyKind, make_policy
from .solver import DEFAULT_NODE_BUDGET
from .stochastic import Purpose, RngStream, StepRealization, draw_step
from .topology import (
    NetworkGraph,
    NetworkModel,
    Pair,
    build_model,
    make_user_pair,
    normalize_pair,
)

log = logging.getLogger(__name__)

STABLE, UNSTABLE, AMBIGUOUS, SKIPPED = "stable", "unstable", "ambiguous", "skipped"


@dataclass
class SimConfig:
    """Per-run simulation knobs (rates already converted to per-step units)."""

    eta: float
    n_steps: int = 5000
    n_runs: int = 10
    seed: int = 0
    r_min: float = 3.0
    slope_threshold: float = 0.01
    solver_node_budget: int = DEFAULT_NODE_BUDGET
    trace_level: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_runs < 1:
            raise ParameterError(f"n_runs must be >= 1, got {self.n_runs}")
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError(f"eta must be in (0, 1], got {self.eta}")


@dataclass
class SweepConfig:
    """Demand grid for the two fixed pairs plus the parasitic traffic setup."""

    beta1_values: tuple[float, ...]
    beta2_values: tuple[float, ...]
    parasitic_count: int = 8
    parasitic_load: float = 0.0
    route_removal_prob: float = 0.0
    pareto_skip: bool = True

    def __post_init__(self):
        for name, values in (("beta1_values", self.beta1_values), ("beta2_values", self.beta2_values)):
            values = tuple(float(v) for v in values)
            setattr(self, name, values)
            if not values:
                raise ParameterError(f"{name} is empty")
            if any(b < a for a, b in zip(values, values[1:])) or len(set(values)) != len(values):
                raise ParameterError(f"{name} must be strictly increasing")
        if self.parasitic_load < 0:
            raise ParameterError("parasitic load must be nonnegative")


@dataclass
class StepRecord:
    t: int
    realization: StepRealization
    schedule: np.ndarray
    report: ExecutionReport


@dataclass
class RunResult:
    """Metrics of one simulation run."""

    total_demand_series: np.ndarray
    avg_backlog: float
    max_excursion: int
    served_total: int
    failed_total: int
    demand_arrivals_total: int
    final_backlog: int


@dataclass
class CellResult:
    """Run-averaged metrics of one (beta1, beta2) sweep cell."""

    beta1: float
    beta2: float
    label: str
    avg_backlog: float = float("nan")
    max_excursion: float = float("nan")
    served_total: float = float("nan")
    failed_ops: float = float("nan")
    runs: list[RunResult] = field(default_factory=list)


def run_step(
    model: NetworkModel,
    state: SystemState,
    policy,
    rng: RngStream,
    realization: StepRealization | None = None,
) -> tuple[SystemState, StepRecord]:
    """Advance one time step: draw (or inject) the randomness, ask the policy
    for a schedule, execute it."""
    step_rng = rng.at(step=state.t)
    if realization is None:
        realization = draw_step(model, state.ebits, step_rng)
    schedule = policy.decide(state, realization, step_rng)
    next_state, report = execute(model, state, realization, schedule, step_rng)
    return next_state, StepRecord(state.t, realization, schedule, report)


def run_simulation(
    model: NetworkModel,
    policy: Policy | FixedSchedulePolicy | PolicyKind | str,
    sim: SimConfig,
    run: int = 0,
    trace_cb=None,
) -> RunResult:
    """Simulate ``sim.n_steps`` steps from empty queues and collect metrics.

    The demand ledger is asserted on every run: demands that arrived must
    equal demands served plus the final backlog (the execution engine never
    clamps demand away, so the clamped term is identically zero).
    """
    if not isinstance(policy, (Policy, FixedSchedulePolicy)):
        policy = make_policy(policy, model, sim.solver_node_budget)
    rng = RngStream(sim.seed, run=run)
    state = zero_state(model)
    series = np.zeros(sim.n_steps + 1, dtype=np.int64)
    served = failed = arrivals = 0
    for _ in range(sim.n_steps):
        state, record = run_step(model, state, policy, rng)
        series[state.t] = int(state.demands.sum())
        served += record.report.served_demand
        failed += record.report.failed_total
        arrivals += int(record.realization.demands.sum())
        if trace_cb is not None:
            trace_cb(
                {
                    "run": run,
                    "t": state.t,
                    "total_demand": int(state.demands.sum()),
                    "total_ebits": int(state.ebits.sum()),
                    "served": record.report.served_demand,
                    "failed": record.report.failed_total,
                }
            )
    final_backlog = int(state.demands.sum())
    if arrivals != served + final_backlog:
        raise SimulationError(
            f"demand ledger violated: {arrivals} arrivals != {served} served + {final_backlog} backlog"
        )
    return RunResult(
        total_demand_series=series,
        avg_backlog=float(series[1:].mean()),
        max_excursion=int(series.max()),
        served_total=served,
        failed_total=failed,
        demand_arrivals_total=arrivals,
        final_backlog=final_backlog,
    )


def classify_stability(
    series_list: list[np.ndarray], r_min: float = 3.0, slope_threshold: float = 0.01
) -> str:
    """Label a set of total-demand series.

    Stable when the runs keep returning to an empty backlog: the mean count of
    zero-backlog steps over the last half of the window is at least ``r_min``.
    Unstable when every run shows a clear linear trend there (least-squares
    slope above ``slope_threshold`` demands/step). Anything else is ambiguous.
    """
    if not series_list:
        raise ParameterError("no series to classify")
    for s in series_list:
        if len(s) < 10:
            raise ParameterError(f"series of length {len(s)} is too short to classify (need >= 10)")
    zero_counts = []
    slopes = []
    for s in series_list:
        window = np.asarray(s[len(s) // 2:], dtype=float)
        zero_counts.append(int((window == 0).sum()))
        x = np.arange(len(window), dtype=float)
        slopes.append(float(np.polyfit(x, window, 1)[0]))
    if float(np.mean(zero_counts)) >= r_min:
        return STABLE
    if all(m > slope_threshold for m in slopes):
        return UNSTABLE
    return AMBIGUOUS


def draw_parasitic_pairs(
    graph: NetworkGraph, excluded: set[Pair], count: int, gen: np.random.Generator
) -> list[Pair]:
    """Uniformly draw ``count`` distinct node pairs avoiding ``excluded``."""
    candidates = [
        normalize_pair(a, b)
        for a, b in itertools.combinations(graph.nodes, 2)
        if normalize_pair(a, b) not in excluded
    ]
    if count > len(candidates):
        raise ParameterError(
            f"cannot draw {count} parasitic pairs from {len(candidates)} candidates"
        )
    chosen = gen.choice(len(candidates), size=count, replace=False)
    return [candidates[int(i)] for i in sorted(chosen)]


def build_sweep_models(
    graph: NetworkGraph,
    fixed_endpoints: tuple[tuple[str, str], tuple[str, str]],
    sweep: SweepConfig,
    sim: SimConfig,
) -> list[NetworkModel]:
    """One model per run: fixed pairs plus freshly drawn parasitic pairs.

    Routes use deterministic per-(run, pair) substreams of the master seed, so
    a sweep is reproducible and each run keeps the same parasitic draw across
    all cells and policies.
    """
    fixed = [normalize_pair(*e) for e in fixed_endpoints]
    if len(set(fixed)) != len(fixed):
        raise ParameterError("fixed pairs must be distinct")
    models = []
    for run in range(sim.n_runs):
        run_rng = RngStream(sim.seed, run=run)
        parasitic = draw_parasitic_pairs(
            graph, set(fixed), sweep.parasitic_count, run_rng.generator(Purpose.PAIRS)
        )
        pairs = []
        for idx, endpoints in enumerate(fixed + parasitic):
            kind = "fixed" if idx < len(fixed) else "parasitic"
            beta = 0.0 if kind == "fixed" else sweep.parasitic_load
            pairs.append(
                make_user_pair(
                    graph,
                    endpoints,
                    beta,
                    kind=kind,
                    removal_prob=sweep.route_removal_prob,
                    rng=run_rng.generator(Purpose.ROUTES, queue=idx),
                )
            )
        models.append(build_model(graph, pairs, sim.eta))
    return models


def evaluate_cell(
    models: list[NetworkModel],
    fixed_endpoints: tuple[Pair, Pair],
    policy_kind: PolicyKind | str,
    beta1: float,
    beta2: float,
    sim: SimConfig,
    trace_cb=None,
) -> CellResult:
    """Run all runs of one sweep cell and aggregate their metrics."""
    pair1, pair2 = (normalize_pair(*e) for e in fixed_endpoints)
    results = []
    for run, base in enumerate(models):
        model = base.with_demand_rates({pair1: beta1, pair2: beta2})
        results.append(run_simulation(model, policy_kind, sim, run=run, trace_cb=trace_cb))
    label = classify_stability(
        [r.total_demand_series for r in results], sim.r_min, sim.slope_threshold
    )
    return CellResult(
        beta1=beta1,
        beta2=beta2,
        label=label,
        avg_backlog=float(np.mean([r.avg_backlog for r in results])),
        max_excursion=float(max(r.max_excursion for r in results)),
        served_total=float(np.mean([r.served_total for r in results])),
        failed_ops=float(np.mean([r.failed_total for r in results])),
        runs=results,
    )


def _cell_worker(payload) -> CellResult:
    models, fixed_endpoints, policy_kind, beta1, beta2, sim = payload
    return evaluate_cell(models, fixed_endpoints, policy_kind, beta1, beta2, sim)


@dataclass
class SweepResult:
    beta1_values: tuple[float, ...]
    beta2_values: tuple[float, ...]
    cells: dict[tuple[int, int], CellResult] = field(default_factory=dict)

    def label_grid(self) -> list[list[str]]:
        return [
            [self.cells[(i, j)].label for j in range(len(self.beta2_values))]
            for i in range(len(self.beta1_values))
        ]


def run_sweep(
    graph: NetworkGraph,
    fixed_endpoints: tuple[tuple[str, str], tuple[str, str]],
    policy_kind: PolicyKind | str,
    sweep: SweepConfig,
    sim: SimConfig,
    jobs: int = 1,
    completed: dict[tuple[int, int], str] | None = None,
    on_cell=None,
    cell_runner=None,
    trace_factory=None,
) -> SweepResult:
    """Evaluate the demand grid for one policy at one parasitic load.

    Cells are processed in anti-diagonal waves of the (beta1, beta2) index
    lattice so every potential dominator is labeled before the cells it could
    skip; within a wave, cells are independent and may run in parallel.
    ``completed`` maps already-evaluated cells to their labels (resume
    support); those cells are not re-run but still feed the Pareto skip.
    ``cell_runner`` overrides the per-cell evaluation (tests).
    """
    fixed = (normalize_pair(*fixed_endpoints[0]), normalize_pair(*fixed_endpoints[1]))
    models = None
    if cell_runner is None:
        models = build_sweep_models(graph, fixed_endpoints, sweep, sim)
    result = SweepResult(tuple(sweep.beta1_values), tuple(sweep.beta2_values))
    completed = dict(completed or {})
    unstable: list[tuple[int, int]] = [c for c, lab in completed.items() if lab == UNSTABLE]

    def dominated(i: int, j: int) -> bool:
        return any((i2, j2) != (i, j) and i2 <= i and j2 <= j for i2, j2 in unstable)

    n1, n2 = len(sweep.beta1_values), len(sweep.beta2_values)
    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    if trace_factory is not None and executor is not None:
        log.warning("per-step traces are only emitted with jobs=1; ignoring trace request")
        trace_factory = None
    try:
        for s in range(n1 + n2 - 1):
            wave = [(i, s - i) for i in range(max(0, s - n2 + 1), min(n1, s + 1))]
            todo = []
            for i, j in wave:
                if (i, j) in completed:
                    continue
                b1, b2 = sweep.beta1_values[i], sweep.beta2_values[j]
                if sweep.pareto_skip and dominated(i, j):
                    cell = CellResult(beta1=b1, beta2=b2, label=SKIPPED)
                    result.cells[(i, j)] = cell
                    completed[(i, j)] = SKIPPED
                    if on_cell is not None:
                        on_cell((i, j), cell)
                else:
                    todo.append((i, j, b1, b2))
            if cell_runner is not None:
                outcomes = [cell_runner(b1, b2) for _, _, b1, b2 in todo]
            elif executor is not None and len(todo) > 1:
                payloads = [(models, fixed, policy_kind, b1, b2, sim) for _, _, b1, b2 in todo]
                outcomes = list(executor.map(_cell_worker, payloads))
            else:
                outcomes = [
                    evaluate_cell(
                        models, fixed, policy_kind, b1, b2, sim,
                        trace_cb=trace_factory(i, j, b1, b2) if trace_factory else None,
                    )
                    for i, j, b1, b2 in todo
                ]
            for (i, j, _, _), cell in zip(todo, outcomes):
                result.cells[(i, j)] = cell
                completed[(i, j)] = cell.label
                if cell.label == UNSTABLE:
                    unstable.append((i, j))
                if on_cell is not None:
                    on_cell((i, j), cell)
    finally:
        if executor is not None:
            executor.shutdown()
    return result
