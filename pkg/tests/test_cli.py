import csv
import json

import numpy as np
import pytest

from projtomo import cli
from projtomo.measurement import load_records
from projtomo.representations import load_plan
from projtomo.state import expectation, fidelity, load_density, trace_distance


@pytest.fixture
def run(tmp_path):
    def _run(command, config, *extra):
        path = tmp_path / "cfg.json"
        cfg = {"out": str(tmp_path / "out"), **config}
        path.write_text(json.dumps(cfg))
        return cli.main([command, "--config", str(path), *extra])

    return _run


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


MINIMAL = {"mode": "minimal", "dim": 4, "shots": 2000, "seed": 3}


class TestPlan:
    def test_minimal_count(self, run, tmp_path, capsys):
        assert run("plan", MINIMAL) == 0
        assert len(load_plan(tmp_path / "out" / "plan.json")) == 16
        assert "16 projectors" in capsys.readouterr().out

    def test_operator_basis_count(self, run, tmp_path):
        assert run("plan", {"mode": "operator_basis", "dim": 4}) == 0
        assert len(load_plan(tmp_path / "out" / "plan.json")) == 28

    def test_missing_dim(self, run):
        assert run("plan", {"mode": "minimal"}) == 2

    def test_unknown_key(self, run):
        assert run("plan", {"mode": "minimal", "dim": 3, "bogus": 1}) == 2

    def test_degenerate_angles_is_config_error(self, run):
        assert run("plan", {"mode": "minimal", "dim": 3, "angles": {"alpha": 0, "beta": 3.141592653589793}}) == 2

    def test_optics_probe_plan(self, run, tmp_path):
        assert run("plan", {"mode": "optics", "cutoff": 5, "dim": 4}) == 0
        obj = json.loads((tmp_path / "out" / "plan.json").read_text())
        assert [p["label"] for p in obj["probes"][:2]] == ["a_n1m0", "b_n1m0"]
        assert len(obj["probes"]) == 6


class TestSimulateReconstruct:
    def test_exact_expectations_bit_exact(self, run, tmp_path):
        cfg = {**MINIMAL, "state": {"ginibre": {"seed": 5}}}
        run("plan", cfg)
        assert run("simulate", cfg, "--exact") == 0
        data = load_records(tmp_path / "out" / "expectations.csv")
        from projtomo.config import ExperimentConfig

        rho = ExperimentConfig(cfg).state()
        for rec in data.records():
            assert rec.estimate == expectation(rho, rec.spec.projector(4))

    def test_simulate_deterministic(self, run, tmp_path):
        run("plan", MINIMAL)
        run("simulate", MINIMAL)
        first = (tmp_path / "out" / "expectations.csv").read_bytes()
        run("simulate", MINIMAL)
        assert (tmp_path / "out" / "expectations.csv").read_bytes() == first
        run("simulate", MINIMAL, "--seed", "4")
        assert (tmp_path / "out" / "expectations.csv").read_bytes() != first

    def test_zero_shots_rejected(self, run):
        assert run("simulate", {**MINIMAL, "shots": 0}) == 2

    def test_missing_plan_is_io_error(self, run):
        assert run("simulate", MINIMAL) == 4

    @pytest.mark.parametrize("mode", ["minimal", "operator_basis"])
    def test_exact_round_trip(self, run, tmp_path, mode):
        cfg = {**MINIMAL, "mode": mode}
        run("plan", cfg)
        run("simulate", cfg, "--exact")
        assert run("reconstruct", cfg) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["metrics"]["fidelity"] > 1 - 1e-9
        assert report["tool_version"] and report["config"]["dim"] == 4
        assert report["scheme"] == mode

    def test_outputs(self, run, tmp_path):
        run("plan", MINIMAL)
        run("simulate", MINIMAL)
        run("reconstruct", MINIMAL)
        out = tmp_path / "out"
        rows = read_csv(out / "metrics.csv")
        assert len(rows) == 1 and rows[0]["shots"] == "2000"
        elems = read_csv(out / "elements.csv")
        assert len(elems) == 16
        assert set(elems[0]) == {"n", "m", "est_re", "est_im", "true_re", "true_im", "abs_error", "residual"}

    def test_metrics_recomputable(self, run, tmp_path):
        run("plan", MINIMAL)
        run("simulate", MINIMAL)
        run("reconstruct", MINIMAL)
        out = tmp_path / "out"
        stored = json.loads((out / "report.json").read_text())["metrics"]
        rho_hat, _ = load_density(out / "rho_hat.json")
        rho_true, _ = load_density(out / "rho_true.json")
        assert abs(fidelity(rho_hat, rho_true) - stored["fidelity"]) < 1e-12
        assert abs(trace_distance(rho_hat, rho_true) - stored["trace_distance"]) < 1e-12
        assert abs(np.abs(rho_hat.matrix - rho_true.matrix).max() - stored["max_element_error"]) < 1e-12

    def test_corrupted_csv_reports_line(self, run, tmp_path, caplog):
        run("plan", MINIMAL)
        run("simulate", MINIMAL)
        path = tmp_path / "out" / "expectations.csv"
        lines = path.read_text().splitlines(keepends=True)
        lines[6] = lines[6].replace(",pair,", ",pear,")
        path.write_text("".join(lines))
        assert run("reconstruct", MINIMAL) == 4
        assert "line 7" in caplog.text

    def test_three_state_run(self, run, tmp_path):
        cfg = {**MINIMAL, "three_state": True, "weighted": True}
        run("plan", cfg)
        assert len(load_plan(tmp_path / "out" / "plan.json")) == 4 + 3 * 6
        run("simulate", cfg, "--exact")
        assert run("reconstruct", cfg) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["scheme"] == "three_state"
        assert report["metrics"]["max_element_error"] < 1e-10

    def test_env_seed_is_lowest_priority(self, run, tmp_path, monkeypatch):
        cfg = {k: v for k, v in MINIMAL.items() if k != "seed"}
        run("plan", cfg)
        monkeypatch.setenv("TOMO_SEED", "3")
        run("simulate", cfg)
        from_env = (tmp_path / "out" / "expectations.csv").read_bytes()
        monkeypatch.delenv("TOMO_SEED")
        run("simulate", MINIMAL)
        assert (tmp_path / "out" / "expectations.csv").read_bytes() == from_env


OPTICS = {"mode": "optics", "dim": 4, "cutoff": 6, "shots": 100000, "seed": 1}


class TestOptics:
    def test_exact_with_probe_shift(self, run, tmp_path):
        assert run("optics", OPTICS, "--exact", "--check-probe-shift") == 0
        out = tmp_path / "out"
        report = json.loads((out / "report.json").read_text())
        assert report["metrics"]["fidelity"] > 1 - 1e-8
        assert report["probe_shift"]["max_discrepancy"] < 1e-8
        bands = read_csv(out / "bands.csv")
        assert len(bands) == 6
        assert max(float(b["abs_error"]) for b in bands) < 1e-8
        assert read_csv(out / "probe_shift.csv")

    def test_efficiency_applies_inverse_bernoulli(self, run, tmp_path):
        assert run("optics", {**OPTICS, "efficiency": 0.7}, "--exact") == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["metrics"]["max_element_error"] < 1e-6

    def test_noisy_run(self, run, tmp_path):
        assert run("optics", OPTICS) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert 0 < report["metrics"]["trace_distance"] < 0.2

    def test_cutoff_too_small_is_config_error(self, run):
        assert run("optics", {**OPTICS, "cutoff": 2}, "--exact") == 2

    def test_ill_conditioned_inversion_is_numeric_failure(self, run):
        # efficiency 0.05 at cutoff 30 needs an inverse with gain far beyond the 1e12 bound
        with pytest.warns(Warning):
            assert run("optics", {**OPTICS, "dim": 2, "cutoff": 30, "efficiency": 0.05}, "--exact") == 3

    def test_requires_optics_mode(self, run):
        assert run("optics", MINIMAL) == 2


SWEEP = {"mode": "minimal", "dim": 3, "seed": 11,
         "sweep": {"shot_levels": [1000, 100000], "trials": 6}}


class TestSweep:
    def test_columns_and_scaling(self, run, tmp_path):
        assert run("sweep", SWEEP) == 0
        rows = read_csv(tmp_path / "out" / "sweep.csv")
        assert [r["shots"] for r in rows] == ["1000", "100000"]
        assert set(rows[0]) == {"shots", "trials", "mean_trace_distance", "std_trace_distance"}
        assert float(rows[0]["mean_trace_distance"]) > float(rows[1]["mean_trace_distance"])

    def test_single_trial_has_empty_sigma(self, run, tmp_path):
        run("sweep", {**SWEEP, "sweep": {"shot_levels": [100, 1000], "trials": 1}})
        assert all(r["std_trace_distance"] == "" for r in read_csv(tmp_path / "out" / "sweep.csv"))

    def test_compare_columns(self, run, tmp_path):
        run("sweep", {**SWEEP, "sweep": {"shot_levels": [100, 1000], "trials": 3, "compare_three_state": True}})
        row = read_csv(tmp_path / "out" / "sweep.csv")[0]
        assert float(row["mse_two_state"]) > 0 and float(row["mse_three_state"]) > 0

    def test_needs_two_levels(self, run):
        assert run("sweep", {**SWEEP, "sweep": {"shot_levels": [100]}}) == 2

    def test_workers_do_not_change_output(self, run, tmp_path):
        run("sweep", {**SWEEP, "sweep": {**SWEEP["sweep"], "workers": 1}})
        serial = (tmp_path / "out" / "sweep.csv").read_bytes()
        run("sweep", {**SWEEP, "sweep": {**SWEEP["sweep"], "workers": 2}})
        assert (tmp_path / "out" / "sweep.csv").read_bytes() == serial

    def test_optics_sweep(self, run, tmp_path):
        cfg = {"mode": "optics", "dim": 3, "cutoff": 4, "seed": 2,
               "sweep": {"shot_levels": [1000, 100000], "trials": 3}}
        assert run("sweep", cfg) == 0
        assert len(read_csv(tmp_path / "out" / "sweep.csv")) == 2
