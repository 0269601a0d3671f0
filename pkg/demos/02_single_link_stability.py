#!/usr/bin/env python3
"""Stability of a single memory-equipped link under the fully informed
Max-Weight policy.

One fiber link generates about one ebit per step (Poisson), stored pairs
decay with efficiency eta = 0.9 per step. A demand rate safely below the
effective service capacity keeps the backlog returning to zero; doubling the
capacity produces the textbook linear blow-up.
"""

import swapsched as ss

GRAPH = ss.NetworkGraph([("A", "B", 1.0)])

for beta in (0.5, 2.0):
    model = ss.build_model(GRAPH, [ss.UserPair(("A", "B"), beta, (("A", "B"),))], eta=0.9)
    sim = ss.SimConfig(eta=0.9, n_steps=5000, n_runs=1, seed=7)
    result = ss.run_simulation(model, "mw_fi", sim)
    label = ss.classify_stability([result.total_demand_series])
    series = result.total_demand_series
    print(f"beta = {beta:>3}: label={label:<9} avg backlog={result.avg_backlog:8.2f} "
          f"peak={result.max_excursion:6d} served={result.served_total}")
    tail = series[len(series) // 2:]
    print(f"           zero-backlog steps in 2nd half: {(tail == 0).sum()} / {len(tail)}")
