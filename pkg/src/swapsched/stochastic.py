"""Seeded random processes: ebit generation, memory loss, demand arrival.

All draws go through counter-based Philox streams addressed by
``(run, step, queue, purpose)``, so any sample is reproducible in isolation
and independent of evaluation order or parallel scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ParameterError
from .topology import NetworkModel

#: queue slot used for draws that are not tied to a single queue
SHARED_SLOT = (1 << 48) - 1


class Purpose(IntEnum):
    ARRIVAL = 0
    LOSS = 1
    DEMAND = 2
    POLICY = 3
    EXECUTION = 4
    PAIRS = 5
    ROUTES = 6


@dataclass(frozen=True)
class RngStream:
    """Hierarchical random stream: one master seed, substreams per
    (run, step, queue, purpose) key.

    Each key addresses a disjoint block of the Philox counter space under the
    master seed's key, so identical (seed, key) always reproduces the same
    draw sequence, distinct keys are independent, and no draw depends on
    evaluation order or parallel scheduling.
    """

    master_seed: int
    run: int = 0
    step: int = 0

    def at(self, run: int | None = None, step: int | None = None) -> "RngStream":
        return RngStream(
            self.master_seed,
            self.run if run is None else run,
            self.step if step is None else step,
        )

    def generator(self, purpose: Purpose, queue: int = SHARED_SLOT) -> np.random.Generator:
        counter = [0, (int(queue) << 8) | int(purpose), self.step, self.run]
        return np.random.Generator(np.random.Philox(counter=counter, seed=self.master_seed))


@dataclass(frozen=True)
class StepRealization:
    """The random draws of one time step.

    ``arrivals`` are new ebits per queue (zero on virtual queues), ``losses``
    the ebits lost from storage (at most the start-of-step backlog, new
    arrivals are immune), ``demands`` the new requests per queue (zero off
    user-pair queues).
    """

    arrivals: np.ndarray
    losses: np.ndarray
    demands: np.ndarray

    @staticmethod
    def zeros(n_queues: int) -> "StepRealization":
        z = np.zeros(n_queues, dtype=np.int64)
        return StepRealization(z.copy(), z.copy(), z.copy())


def memory_efficiency(delta_t: float, tau: float) -> float:
    """Storage-and-retrieval efficiency of a memory over one time step of
    ``delta_t`` seconds, for an expected qubit lifetime ``tau``."""
    if tau <= 0:
        raise ParameterError(f"memory lifetime tau must be positive, got {tau}")
    if delta_t < 0:
        raise ParameterError(f"time step must be nonnegative, got {delta_t}")
    return math.exp(-delta_t / tau)


def sample_arrivals(model: NetworkModel, rng: RngStream) -> np.ndarray:
    """Poisson ebit generation per physical queue; zero on virtual queues."""
    a = np.zeros(model.n_queues, dtype=np.int64)
    for e in np.flatnonzero(model.arrival_means > 0):
        a[e] = rng.generator(Purpose.ARRIVAL, e).poisson(model.arrival_means[e])
    return a


def sample_losses(ebits: np.ndarray, eta: float, rng: RngStream) -> np.ndarray:
    """Binomial memory loss per queue: each stored ebit independently survives
    the step with probability ``eta``. Trial counts are the start-of-step
    backlogs, so the loss never exceeds what was stored."""
    if not 0.0 < eta <= 1.0:
        raise ParameterError(f"eta must be in (0, 1], got {eta}")
    losses = np.zeros(len(ebits), dtype=np.int64)
    if eta == 1.0:
        return losses
    for e in np.flatnonzero(ebits > 0):
        losses[e] = rng.generator(Purpose.LOSS, e).binomial(int(ebits[e]), 1.0 - eta)
    return losses


def sample_demands(model: NetworkModel, rng: RngStream) -> np.ndarray:
    """Poisson demand arrivals on user-pair queues; zero elsewhere."""
    b = np.zeros(model.n_queues, dtype=np.int64)
    for e in np.flatnonzero(model.demand_means > 0):
        b[e] = rng.generator(Purpose.DEMAND, e).poisson(model.demand_means[e])
    return b


def draw_step(model: NetworkModel, ebits: np.ndarray, rng: RngStream) -> StepRealization:
    """Draw all random processes of one step given the start-of-step backlog."""
    return StepRealization(
        arrivals=sample_arrivals(model, rng),
        losses=sample_losses(ebits, model.eta, rng),
        demands=sample_demands(model, rng),
    )
