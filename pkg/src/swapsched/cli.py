"""Experiment configuration, invocation and result serialization.

One experiment is one YAML file (strictly validated: unknown or duplicate
keys are errors, messages carry the key path). Command-line flags cover only
the config path, output directory, parallelism and log level. Each
(policy, parasitic load) combination produces one ``grid_<policy>_<L>.csv``
with a row per (beta1, beta2) cell; rows are flushed in canonical order so an
interrupted sweep resumes from its last complete row. A ``summary.json``
echoes the effective configuration (defaults applied) next to per-policy
aggregates.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, SwapschedError
from .harness import (
    SKIPPED,
    CellResult,
    SimConfig,
    SweepConfig,
    run_sweep,
)
from .policies import PolicyKind
from .stochastic import memory_efficiency
from .topology import NetworkGraph, generate_topology

log = logging.getLogger(__name__)

_MISSING = object()


class _DupCheckingLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of silently
    keeping the last one."""


def _construct_mapping(loader, node, deep=False):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise ConfigError(f"duplicate key {key!r} at line {key_node.start_mark.line + 1}")
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_DupCheckingLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


class _Section:
    """Typed key extraction from one config mapping, with path-carrying errors."""

    def __init__(self, data, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.taken: set[str] = set()

    def _path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, kind: str, default=_MISSING, minimum=None, maximum=None, choices=None):
        self.taken.add(key)
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"{self._path(key)}: missing required key")
            return default
        value = self.data[key]
        path = self._path(key)
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
        elif kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: expected a number, got {value!r}")
            value = float(value)
        elif kind == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{path}: expected a string, got {value!r}")
        elif kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        elif kind == "list":
            if not isinstance(value, list):
                raise ConfigError(f"{path}: expected a list, got {value!r}")
        else:  # pragma: no cover - internal misuse
            raise AssertionError(kind)
        if minimum is not None and value < minimum:
            raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
        if maximum is not None and value > maximum:
            raise ConfigError(f"{path}: must be <= {maximum}, got {value}")
        if choices is not None and value not in choices:
            raise ConfigError(f"{path}: must be one of {sorted(choices)}, got {value!r}")
        return value

    def subsection(self, key: str, required: bool = True):
        self.taken.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self._path(key)}: missing required section")
            return _Section({}, self._path(key))
        return _Section(self.data[key], self._path(key))

    def finish(self):
        unknown = sorted(set(self.data) - self.taken)
        if unknown:
            raise ConfigError(f"{self._path(unknown[0])}: unknown key")


def _rate_list(section: _Section, key: str, default=_MISSING) -> tuple[float, ...]:
    raw = section.take(key, "list", default=default)
    path = f"{section.path}.{key}"
    values = []
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]: expected a number, got {v!r}")
        if v < 0:
            raise ConfigError(f"{path}[{i}]: rates must be nonnegative, got {v}")
        values.append(float(v))
    if not values:
        raise ConfigError(f"{path}: must not be empty")
    return tuple(values)


@dataclass
class FixedPairSpec:
    endpoints: tuple[str, str]
    beta_values: tuple[float, ...]


@dataclass
class ExperimentConfig:
    """Fully validated experiment description with defaults applied."""

    topology_kind: str
    topology_params: dict
    topology_seed: int | None
    delta_t: float
    eta: float
    alpha_per_step: float
    rate_units: str
    rate_factor: float
    fixed_pairs: tuple[FixedPairSpec, FixedPairSpec]
    parasitic_count: int
    parasitic_loads: tuple[float, ...]
    route_removal_prob: float
    policies: tuple[PolicyKind, ...]
    n_steps: int
    n_runs: int
    seed: int
    r_min: float
    slope_threshold: float
    solver_node_budget: int
    pareto_skip: bool
    output_dir: str
    trace_level: int
    effective: dict = field(repr=False, default_factory=dict)


def parse_config(source: str | Path | dict) -> ExperimentConfig:
    """Parse and validate an experiment config (YAML text, path, or mapping)."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text() if (isinstance(source, Path) or "\n" not in str(source)) else str(source)
        try:
            raw = yaml.load(text, Loader=_DupCheckingLoader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
    root = _Section(raw, "")

    topo = root.subsection("topology")
    kind = topo.take("kind", "str", choices={"grid", "holed_grid", "erdos_renyi", "watts_strogatz", "custom"})
    topo_seed = None
    params: dict = {}
    if kind in ("grid", "holed_grid"):
        params["rows"] = topo.take("rows", "int", minimum=1)
        params["cols"] = topo.take("cols", "int", minimum=1)
        if kind == "holed_grid":
            params["removal_prob"] = topo.take("removal_prob", "float", minimum=0.0, maximum=1.0)
    elif kind == "erdos_renyi":
        params["n"] = topo.take("n", "int", minimum=2)
        params["p"] = topo.take("p", "float", minimum=0.0, maximum=1.0)
    elif kind == "watts_strogatz":
        params["n"] = topo.take("n", "int", minimum=2)
        params["n_neighbors"] = topo.take("n_neighbors", "int", minimum=2)
        params["p"] = topo.take("p", "float", minimum=0.0, maximum=1.0)
    else:
        params["path"] = topo.take("path", "str")
    if kind in ("holed_grid", "erdos_renyi", "watts_strogatz"):
        topo_seed = topo.take("seed", "int", default=None)
    topo.finish()

    physics = root.subsection("physics")
    delta_t = physics.take("delta_t", "float", minimum=0.0)
    tau = physics.take("tau", "float", default=None)
    eta = physics.take("eta", "float", default=None)
    if (tau is None) == (eta is None):
        raise ConfigError("physics: exactly one of 'tau' and 'eta' must be given")
    if eta is not None and not 0.0 < eta <= 1.0:
        raise ConfigError(f"physics.eta: must be in (0, 1], got {eta}")
    if tau is not None:
        if tau <= 0:
            raise ConfigError(f"physics.tau: must be positive, got {tau}")
        eta = memory_efficiency(delta_t, tau)
    alpha = physics.take("alpha", "float", minimum=0.0)
    rate_units = physics.take("rate_units", "str", default="per_step", choices={"per_step", "hz"})
    physics.finish()
    rate_factor = delta_t if rate_units == "hz" else 1.0
    if rate_units == "hz" and delta_t <= 0:
        raise ConfigError("physics.delta_t: must be positive when rates are in hz")

    pairs = root.subsection("pairs")
    fixed_raw = pairs.take("fixed", "list")
    if len(fixed_raw) != 2:
        raise ConfigError(f"pairs.fixed: expected exactly 2 fixed pairs, got {len(fixed_raw)}")
    fixed_specs = []
    for i, entry in enumerate(fixed_raw):
        sec = _Section(entry, f"pairs.fixed[{i}]")
        endpoints = sec.take("endpoints", "list")
        if len(endpoints) != 2 or not all(isinstance(e, str) for e in endpoints):
            raise ConfigError(f"pairs.fixed[{i}].endpoints: expected two node names")
        if endpoints[0] == endpoints[1]:
            raise ConfigError(f"pairs.fixed[{i}].endpoints: endpoints must differ")
        betas = tuple(b * rate_factor for b in _rate_list(sec, "beta_values"))
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ConfigError(f"pairs.fixed[{i}].beta_values: must be strictly increasing")
        sec.finish()
        fixed_specs.append(FixedPairSpec((endpoints[0], endpoints[1]), betas))
    parasitic = pairs.subsection("parasitic", required=False)
    parasitic_count = parasitic.take("count", "int", default=8, minimum=0)
    parasitic_loads = tuple(
        v * rate_factor for v in _rate_list(parasitic, "load_values", default=[0.0])
    )
    parasitic.finish()
    removal_prob = pairs.take("route_removal_prob", "float", default=0.0, minimum=0.0, maximum=1.0)
    pairs.finish()

    policies_raw = root.take("policies", "list")
    if not policies_raw:
        raise ConfigError("policies: must list at least one policy")
    policy_kinds = []
    valid = {k.value for k in PolicyKind}
    for i, name in enumerate(policies_raw):
        if name not in valid:
            raise ConfigError(f"policies[{i}]: unknown policy {name!r} (choose from {sorted(valid)})")
        policy_kinds.append(PolicyKind(name))
    if len(set(policy_kinds)) != len(policy_kinds):
        raise ConfigError("policies: duplicate policy names")

    simulation = root.subsection("simulation")
    n_steps = simulation.take("n_steps", "int", default=5000, minimum=1)
    n_runs = simulation.take("n_runs", "int", default=10, minimum=1)
    seed = simulation.take("seed", "int")
    r_min = simulation.take("r_min", "float", default=3.0, minimum=0.0)
    slope_threshold = simulation.take("slope_threshold", "float", default=0.01, minimum=0.0)
    budget = simulation.take("solver_node_budget", "int", default=10_000_000, minimum=1)
    pareto_skip = simulation.take("pareto_skip", "bool", default=True)
    simulation.finish()

    output = root.subsection("output")
    out_dir = output.take("directory", "str")
    trace_level = output.take("trace_level", "int", default=0, minimum=0, maximum=2)
    output.finish()
    root.finish()

    config = ExperimentConfig(
        topology_kind=kind,
        topology_params=params,
        topology_seed=topo_seed if topo_seed is not None else seed,
        delta_t=delta_t,
        eta=eta,
        alpha_per_step=alpha * rate_factor,
        rate_units=rate_units,
        rate_factor=rate_factor,
        fixed_pairs=(fixed_specs[0], fixed_specs[1]),
        parasitic_count=parasitic_count,
        parasitic_loads=parasitic_loads,
        route_removal_prob=removal_prob,
        policies=tuple(policy_kinds),
        n_steps=n_steps,
        n_runs=n_runs,
        seed=seed,
        r_min=r_min,
        slope_threshold=slope_threshold,
        solver_node_budget=budget,
        pareto_skip=pareto_skip,
        output_dir=out_dir,
        trace_level=trace_level,
    )
    config.effective = _effective_dict(config)
    return config


def _effective_dict(c: ExperimentConfig) -> dict:
    return {
        "topology": {"kind": c.topology_kind, "seed": c.topology_seed, **c.topology_params},
        "physics": {
            "delta_t": c.delta_t,
            "eta": c.eta,
            "alpha_per_step": c.alpha_per_step,
            "rate_units": c.rate_units,
        },
        "pairs": {
            "fixed": [
                {"endpoints": list(p.endpoints), "beta_values_per_step": list(p.beta_values)}
                for p in c.fixed_pairs
            ],
            "parasitic": {
                "count": c.parasitic_count,
                "load_values_per_step": list(c.parasitic_loads),
            },
            "route_removal_prob": c.route_removal_prob,
        },
        "policies": [p.value for p in c.policies],
        "simulation": {
            "n_steps": c.n_steps,
            "n_runs": c.n_runs,
            "seed": c.seed,
            "r_min": c.r_min,
            "slope_threshold": c.slope_threshold,
            "solver_node_budget": c.solver_node_budget,
            "pareto_skip": c.pareto_skip,
        },
        "output": {"directory": c.output_dir, "trace_level": c.trace_level},
    }


CSV_HEADER = "beta1,beta2,avg_backlog,max_excursion,stability,served_total,failed_ops"


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _csv_row(cell: CellResult) -> str:
    return ",".join(
        [
            _fmt(cell.beta1),
            _fmt(cell.beta2),
            _fmt(cell.avg_backlog),
            _fmt(cell.max_excursion),
            cell.label,
            _fmt(cell.served_total),
            _fmt(cell.failed_ops),
        ]
    )


class _GridWriter:
    """Flushes cell rows to CSV in canonical (beta1-major) order.

    Cells arrive in sweep-wave order; rows are buffered and written as soon as
    every earlier row exists, so the file on disk is always a valid prefix of
    the full grid and an interrupted run can resume from it.
    """

    def __init__(self, path: Path, sweep: SweepConfig, n_existing: int):
        self.path = path
        self.canon = [
            (i, j) for i in range(len(sweep.beta1_values)) for j in range(len(sweep.beta2_values))
        ]
        self.cursor = n_existing
        self.pending: dict[tuple[int, int], str] = {}
        mode = "a" if n_existing else "w"
        self.handle = path.open(mode, encoding="utf-8", newline="")
        if not n_existing:
            self.handle.write(CSV_HEADER + "\n")
            self.handle.flush()

    def add(self, coords: tuple[int, int], cell: CellResult) -> None:
        self.pending[coords] = _csv_row(cell)
        while self.cursor < len(self.canon) and self.canon[self.cursor] in self.pending:
            self.handle.write(self.pending.pop(self.canon[self.cursor]) + "\n")
            self.handle.flush()
            self.cursor += 1

    def close(self) -> None:
        self.handle.close()


def _read_completed(path: Path, sweep: SweepConfig) -> dict[tuple[int, int], str]:
    """Read the canonical prefix of an existing grid CSV for resuming."""
    if not path.exists():
        return {}
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        return {}
    if lines[0] != CSV_HEADER:
        raise ConfigError(f"{path}: existing file does not carry the expected header")
    canon = [(i, j) for i in range(len(sweep.beta1_values)) for j in range(len(sweep.beta2_values))]
    completed: dict[tuple[int, int], str] = {}
    for pos, line in enumerate(lines[1:]):
        if pos >= len(canon):
            raise ConfigError(f"{path}: more rows than grid cells; not resumable with this config")
        i, j = canon[pos]
        fields = line.split(",")
        if len(fields) != 7 or fields[0] != _fmt(sweep.beta1_values[i]) or fields[1] != _fmt(sweep.beta2_values[j]):
            raise ConfigError(f"{path}: row {pos + 1} does not match this config's grid; not resumable")
        completed[(i, j)] = fields[4]
    return completed


def _grid_filename(policy: PolicyKind, load: float) -> str:
    return f"grid_{policy.value}_{_fmt(load)}.csv"


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1) -> dict:
    """Run every (policy, parasitic load) sweep and write artifacts.

    Returns the summary dictionary that is also written to ``summary.json``.
    """
    started = time.time()
    outdir = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    graph = generate_topology(
        config.topology_kind,
        alpha=config.alpha_per_step,
        seed=config.topology_seed,
        **config.topology_params,
    )
    if config.topology_kind == "custom" and config.rate_units == "hz":
        graph = graph.scaled(config.rate_factor)
    fixed_endpoints = (config.fixed_pairs[0].endpoints, config.fixed_pairs[1].endpoints)
    sim = SimConfig(
        eta=config.eta,
        n_steps=config.n_steps,
        n_runs=config.n_runs,
        seed=config.seed,
        r_min=config.r_min,
        slope_threshold=config.slope_threshold,
        solver_node_budget=config.solver_node_budget,
        trace_level=config.trace_level,
    )

    summary: dict = {
        "config": config.effective,
        "seed": config.seed,
        "graph": {"nodes": len(graph.nodes), "edges": len(graph.edges)},
        "grids": {},
    }
    for policy in config.policies:
        for load in config.parasitic_loads:
            sweep = SweepConfig(
                beta1_values=config.fixed_pairs[0].beta_values,
                beta2_values=config.fixed_pairs[1].beta_values,
                parasitic_count=config.parasitic_count,
                parasitic_load=load,
                route_removal_prob=config.route_removal_prob,
                pareto_skip=config.pareto_skip,
            )
            csv_path = outdir / _grid_filename(policy, load)
            completed = _read_completed(csv_path, sweep)
            if completed:
                log.info("%s: resuming with %d completed cells", csv_path.name, len(completed))
            writer = _GridWriter(csv_path, sweep, n_existing=len(completed))
            open_traces: list = []
            trace_factory = None
            if config.trace_level >= 2:
                def trace_factory(i, j, b1, b2, _policy=policy, _load=load):
                    name = f"trace_{_policy.value}_L{_fmt(_load)}_b{_fmt(b1)}_b{_fmt(b2)}.ndjson"
                    handle = (outdir / name).open("w", encoding="utf-8")
                    open_traces.append(handle)
                    return lambda record: handle.write(json.dumps(record, sort_keys=True) + "\n")
            try:
                result = run_sweep(
                    graph,
                    fixed_endpoints,
                    policy,
                    sweep,
                    sim,
                    jobs=jobs,
                    completed=completed,
                    on_cell=writer.add,
                    trace_factory=trace_factory,
                )
            finally:
                writer.close()
                for handle in open_traces:
                    handle.close()
            labels = [c.label for c in result.cells.values()] + [
                lab for coords, lab in completed.items()
            ]
            evaluated = [
                c.avg_backlog for c in result.cells.values() if c.label != SKIPPED
            ]
            summary["grids"][csv_path.name] = {
                "policy": policy.value,
                "parasitic_load_per_step": load,
                "cells": len(labels),
                "labels": {lab: labels.count(lab) for lab in sorted(set(labels))},
                "mean_avg_backlog": float(sum(evaluated) / len(evaluated)) if evaluated else None,
            }
            log.info("wrote %s", csv_path)
    summary["wall_time_seconds"] = round(time.time() - started, 3)
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="swapsched",
        description="Run entanglement-swapping network scheduling experiments from a YAML config.",
    )
    parser.add_argument("--config", required=True, help="path to the experiment YAML")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for sweep cells")
    parser.add_argument(
        "--log", default="info", choices=["debug", "info", "warning", "error"], help="log level"
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(Path(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        run_experiment(config, out_dir=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (SwapschedError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
