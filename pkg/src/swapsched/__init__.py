"""Discrete-time simulator and scheduling-policy library for
entanglement-swapping quantum networks.

The package is organized around an immutable :class:`~swapsched.topology.NetworkModel`
(routed graph, queue/transition index maps, update matrices, execution ranks),
seeded stochastic processes for generation/loss/demand, a clamping execution
engine, an exact integer-program solver, seven scheduling policies, and a
sweep harness that maps stability regions over demand-rate grids.
"""

from .dynamics import (
    ExecutionReport,
    SystemState,
    evolve_ideal,
    execute,
    feasible,
    make_schedule,
    zero_state,
)
from .errors import (
    ConfigError,
    InfeasibleScheduleError,
    ModelConstructionError,
    ParameterError,
    ProgramError,
    RoutingError,
    SimulationError,
    SwapschedError,
    TopologyError,
)
from .harness import (
    CellResult,
    RunResult,
    SimConfig,
    SweepConfig,
    SweepResult,
    classify_stability,
    evaluate_cell,
    run_simulation,
    run_step,
    run_sweep,
)
from .policies import (
    AverageInfo,
    FixedSchedulePolicy,
    FullInfo,
    LocalInfo,
    Policy,
    PolicyKind,
    build_constraints,
    build_weights,
    decide,
    drift_objective,
    greedy_decide,
    make_info,
    make_policy,
)
from .solver import IntegerProgram, Solution, derive_bounds, dump_program, load_program, solve
from .stochastic import (
    Purpose,
    RngStream,
    StepRealization,
    draw_step,
    memory_efficiency,
    sample_arrivals,
    sample_demands,
    sample_losses,
)
from .topology import (
    NetworkGraph,
    NetworkModel,
    QueueIndex,
    Transition,
    UserPair,
    build_matrices,
    build_model,
    build_queue_index,
    compute_routes,
    enumerate_transitions,
    generate_topology,
    load_edge_list,
    make_user_pair,
    assign_ranks,
)

__version__ = "0.1.0"
