import json
from pathlib import Path

import pytest

import swapsched as ss
from swapsched.cli import main, parse_config, run_experiment

MINIMAL = """
topology:
  kind: grid
  rows: 1
  cols: 4
physics:
  delta_t: 1.0
  eta: 0.9
  alpha: 1.0
pairs:
  fixed:
    - endpoints: [n00-00, n00-03]
      beta_values: [0.1, 1.5]
    - endpoints: [n00-01, n00-02]
      beta_values: [0.1, 1.5]
  parasitic:
    count: 1
    load_values: [0.0]
policies: [mw_fi]
simulation:
  n_steps: 120
  n_runs: 2
  seed: 11
output:
  directory: out
"""


def write_config(tmp_path, text=MINIMAL, **overrides):
    import yaml

    data = yaml.safe_load(text)
    for dotted, value in overrides.items():
        node = data
        *parents, last = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[last] = value
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


class TestParseConfig:
    def test_minimal_with_defaults(self, tmp_path):
        config = parse_config(write_config(tmp_path))
        assert config.n_steps == 120
        assert config.parasitic_count == 1
        assert config.r_min == 3.0
        assert config.slope_threshold == 0.01
        assert config.pareto_skip is True
        assert config.trace_level == 0
        assert config.effective["simulation"]["solver_node_budget"] == 10_000_000

    def test_eta_out_of_range(self, tmp_path):
        with pytest.raises(ss.ConfigError, match="physics.eta"):
            parse_config(write_config(tmp_path, **{"physics.eta": 1.2}))

    def test_tau_eta_mutual_exclusion(self, tmp_path):
        with pytest.raises(ss.ConfigError, match="exactly one of 'tau' and 'eta'"):
            parse_config(write_config(tmp_path, **{"physics.tau": 5.0}))

    def test_tau_converted(self, tmp_path):
        import yaml

        data = yaml.safe_load(MINIMAL)
        del data["physics"]["eta"]
        data["physics"]["tau"] = 10.0
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump(data))
        config = parse_config(path)
        assert config.eta == pytest.approx(ss.memory_efficiency(1.0, 10.0))

    def test_unknown_key_path(self, tmp_path):
        with pytest.raises(ss.ConfigError, match="simulation.warp_speed"):
            parse_config(write_config(tmp_path, **{"simulation.warp_speed": 1}))

    def test_missing_key_path(self, tmp_path):
        import yaml

        data = yaml.safe_load(MINIMAL)
        del data["simulation"]["seed"]
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ss.ConfigError, match="simulation.seed"):
            parse_config(path)

    def test_type_mismatch(self, tmp_path):
        with pytest.raises(ss.ConfigError, match="simulation.n_steps"):
            parse_config(write_config(tmp_path, **{"simulation.n_steps": "many"}))

    def test_duplicate_key(self, tmp_path):
        path = tmp_path / "dup.yaml"
        path.write_text(MINIMAL + "\npolicies: [greedy]\n")
        with pytest.raises(ss.ConfigError, match="duplicate key"):
            parse_config(path)

    def test_unknown_policy(self, tmp_path):
        with pytest.raises(ss.ConfigError, match=r"policies\[0\]"):
            parse_config(write_config(tmp_path, policies=["fancy"]))

    def test_betas_must_increase(self, tmp_path):
        import yaml

        data = yaml.safe_load(MINIMAL)
        data["pairs"]["fixed"][0]["beta_values"] = [0.5, 0.5]
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump(data))
        with pytest.raises(ss.ConfigError, match="strictly increasing"):
            parse_config(path)

    def test_hz_rates_scaled(self, tmp_path):
        config = parse_config(
            write_config(
                tmp_path,
                **{"physics.rate_units": "hz", "physics.delta_t": 0.001, "physics.alpha": 1000},
            )
        )
        assert config.alpha_per_step == pytest.approx(1.0)
        assert config.fixed_pairs[0].beta_values[0] == pytest.approx(0.1 * 0.001)


class TestRunExperiment:
    def test_artifacts_and_reproducibility(self, tmp_path):
        config = parse_config(write_config(tmp_path))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_experiment(config, out_dir=out_a)
        run_experiment(config, out_dir=out_b)
        csv_a = (out_a / "grid_mw_fi_0.csv").read_bytes()
        csv_b = (out_b / "grid_mw_fi_0.csv").read_bytes()
        assert csv_a == csv_b
        lines = csv_a.decode().splitlines()
        assert lines[0] == "beta1,beta2,avg_backlog,max_excursion,stability,served_total,failed_ops"
        assert len(lines) == 5  # header + 2x2 cells
        summary = json.loads((out_a / "summary.json").read_text())
        assert summary["config"]["simulation"]["n_steps"] == 120
        assert summary["config"]["simulation"]["r_min"] == 3.0  # defaults echoed
        assert "grid_mw_fi_0.csv" in summary["grids"]

    def test_two_policies_two_loads(self, tmp_path):
        config = parse_config(
            write_config(
                tmp_path,
                policies=["greedy", "mw_fi"],
                **{"pairs.parasitic.load_values": [0.0, 0.1], "simulation.n_steps": 60,
                   "simulation.n_runs": 1},
            )
        )
        out = tmp_path / "out"
        run_experiment(config, out_dir=out)
        files = sorted(p.name for p in out.glob("grid_*.csv"))
        assert files == [
            "grid_greedy_0.1.csv",
            "grid_greedy_0.csv",
            "grid_mw_fi_0.1.csv",
            "grid_mw_fi_0.csv",
        ]
        total_rows = sum(
            len((out / f).read_text().splitlines()) - 1 for f in files
        )
        assert total_rows == 16

    def test_resume_matches_full_run(self, tmp_path):
        config = parse_config(write_config(tmp_path))
        full, resumed = tmp_path / "full", tmp_path / "resumed"
        run_experiment(config, out_dir=full)
        run_experiment(config, out_dir=resumed)
        csv = resumed / "grid_mw_fi_0.csv"
        lines = csv.read_text().splitlines()
        csv.write_text("\n".join(lines[:3]) + "\n")  # keep header + 2 rows
        run_experiment(config, out_dir=resumed)
        assert csv.read_bytes() == (full / "grid_mw_fi_0.csv").read_bytes()

    def test_mismatched_resume_rejected(self, tmp_path):
        config = parse_config(write_config(tmp_path))
        out = tmp_path / "out"
        out.mkdir()
        (out / "grid_mw_fi_0.csv").write_text(
            "beta1,beta2,avg_backlog,max_excursion,stability,served_total,failed_ops\n"
            "9,9,0,0,stable,0,0\n"
        )
        with pytest.raises(ss.ConfigError, match="not resumable"):
            run_experiment(config, out_dir=out)

    def test_traces_written(self, tmp_path):
        config = parse_config(
            write_config(tmp_path, **{"output.trace_level": 2, "simulation.n_steps": 30,
                                      "simulation.n_runs": 1})
        )
        out = tmp_path / "out"
        run_experiment(config, out_dir=out)
        traces = list(out.glob("trace_*.ndjson"))
        assert traces
        first = json.loads(traces[0].read_text().splitlines()[0])
        assert {"run", "t", "total_demand"} <= set(first)


class TestMain:
    def test_success_exit_code(self, tmp_path):
        path = write_config(tmp_path, **{"simulation.n_steps": 30, "simulation.n_runs": 1})
        assert main(["--config", str(path), "--out", str(tmp_path / "o"), "--log", "warning"]) == 0

    def test_config_error_exit_code(self, tmp_path):
        path = write_config(tmp_path, **{"physics.eta": 2.0})
        assert main(["--config", str(path)]) == 1

    def test_missing_file_exit_code(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.yaml")]) == 1

    def test_runtime_error_exit_code(self, tmp_path):
        # endpoints that are not in the generated graph fail at run time
        path = write_config(tmp_path, **{"pairs.fixed": [
            {"endpoints": ["zz", "n00-03"], "beta_values": [0.1]},
            {"endpoints": ["n00-01", "n00-02"], "beta_values": [0.1]},
        ], "simulation.n_steps": 10, "simulation.n_runs": 1})
        assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 2
