import json

import numpy as np
import pytest

from iadmm.bench import (
    ExperimentConfig,
    Variant,
    config_from_dict,
    load_config,
    run_experiment,
    summarize,
)
from iadmm.cli import main as cli_main
from iadmm.core import ConfigError
from iadmm.matio import load_sparse01
from iadmm.solver import read_trace_csv


def tiny_config(**overrides) -> ExperimentConfig:
    base = dict(
        sizes=((10, 8),),
        rank=2,
        density=0.25,
        variants=(Variant(0.1, 0.1, True), Variant(0.1, 0.1, False)),
        include_gd=True,
        datasets_per_size=1,
        inits_per_dataset=1,
        budget_iters=15,
        budget_seconds=None,
        master_seed=77,
        b2=0.9,
        check_level="cheap",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigParsing:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict({"sizes": [[4, 4]], "typo_key": 1})

    def test_unknown_variant_key_rejected(self):
        with pytest.raises(ConfigError, match="variant"):
            config_from_dict({"variants": [{"tau1": 1, "tau2": 1, "bogus": 2}]})

    def test_budget_must_be_single_mode(self):
        with pytest.raises(ConfigError):
            config_from_dict({"budget": {"iters": 5, "seconds": 1.0}})

    def test_round_trip_through_file(self, tmp_path):
        doc = {
            "sizes": [[6, 5]],
            "rank": 2,
            "density": 0.2,
            "variants": [{"tau1": 0.5, "tau2": 0.5}],
            "include_gd": False,
            "datasets_per_size": 1,
            "inits_per_dataset": 1,
            "budget": {"iters": 3},
            "master_seed": 5,
            "b2": 0.9,
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        cfg = load_config(path)
        assert cfg.sizes == ((6, 5),)
        assert cfg.variants[0].label == "iadmm(0.5,0.5)"
        assert cfg.budget_iters == 3

    def test_labels(self):
        assert Variant(0.1, 0.1, True).label == "iadmm(0.1,0.1)"
        assert Variant(1.0, 1.0, False).label == "admm(1,1)"


class TestRunExperiment:
    def test_file_counts(self, tmp_path):
        cfg = tiny_config()
        run_experiment(cfg, tmp_path)
        traces = sorted(tmp_path.glob("trace_*.csv"))
        # 1 cell x (2 variants + gd)
        assert len(traces) == 3
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "runs_manifest.json").exists()
        assert (tmp_path / "plot_iters_10x8.csv").exists()
        assert (tmp_path / "plot_time_10x8.csv").exists()

    def test_two_cells_two_variants_no_gd(self, tmp_path):
        cfg = tiny_config(include_gd=False, inits_per_dataset=2)
        run_experiment(cfg, tmp_path)
        assert len(list(tmp_path.glob("trace_*.csv"))) == 4

    def test_summary_schema(self, tmp_path):
        cfg = tiny_config()
        summary = run_experiment(cfg, tmp_path)
        assert set(summary) == {"experiment", "rows", "provenance"}
        assert set(summary["provenance"]) == {"master_seed", "version"}
        for row in summary["rows"]:
            assert set(row) == {"algorithm", "m", "n", "mean", "std", "n_trials"}
            assert row["n_trials"] == 1
            assert row["std"] >= 0.0

    def test_determinism_byte_identical_summary(self, tmp_path):
        cfg = tiny_config(inits_per_dataset=2)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        sa = (tmp_path / "a" / "summary.json").read_bytes()
        sb = (tmp_path / "b" / "summary.json").read_bytes()
        assert sa == sb
        ia = (tmp_path / "a" / "plot_iters_10x8.csv").read_bytes()
        ib = (tmp_path / "b" / "plot_iters_10x8.csv").read_bytes()
        assert ia == ib

    def test_different_seed_changes_summary(self, tmp_path):
        run_experiment(tiny_config(), tmp_path / "a")
        run_experiment(tiny_config(master_seed=78), tmp_path / "b")
        sa = json.loads((tmp_path / "a" / "summary.json").read_text())
        sb = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert sa["rows"] != sb["rows"]

    def test_variant_fairness_shared_inputs(self, tmp_path):
        cfg = tiny_config()
        run_experiment(cfg, tmp_path)
        manifest = json.loads((tmp_path / "runs_manifest.json").read_text())
        hashes = {r["input_sha256"] for r in manifest["runs"]}
        assert len(hashes) == 1  # single cell: every algorithm saw the same inputs

    def test_invalid_variant_aborts_before_running(self, tmp_path):
        cfg = tiny_config(variants=(Variant(1.0, 1.0, True),), b2=0.5)
        # classical multipliers at beta 1 violate the smoothness gate
        with pytest.raises(ConfigError):
            run_experiment(cfg, tmp_path / "out")
        assert not (tmp_path / "out" / "summary.json").exists()

    def test_gate_relaxation_allows_classical_run(self, tmp_path):
        cfg = tiny_config(variants=(Variant(1.0, 1.0, True),), enforce_gate=False)
        summary = run_experiment(cfg, tmp_path)
        assert summary["rows"]

    def test_trace_schema_and_model_objective(self, tmp_path):
        cfg = tiny_config()
        run_experiment(cfg, tmp_path)
        manifest = json.loads((tmp_path / "runs_manifest.json").read_text())
        for meta in manifest["runs"]:
            rows = read_trace_csv(tmp_path / meta["file"])
            assert rows[0]["k"] == 0
            assert "model_objective" in rows[-1]
            assert rows[-1]["model_objective"] == pytest.approx(
                meta["final_objective"], rel=1e-12
            )


class TestSummarize:
    def test_single_trace_stats(self, tmp_path):
        cfg = tiny_config(include_gd=False, variants=(Variant(0.1, 0.1, True),))
        run_experiment(cfg, tmp_path)
        summary, _ = summarize(tmp_path)
        row = summary["rows"][0]
        assert row["std"] == 0.0 and row["n_trials"] == 1

    def test_mean_and_sample_std(self, tmp_path):
        # two trials: mean and n-1 std recomputed from the traces
        cfg = tiny_config(include_gd=False, variants=(Variant(0.1, 0.1, True),),
                          inits_per_dataset=2)
        run_experiment(cfg, tmp_path)
        manifest = json.loads((tmp_path / "runs_manifest.json").read_text())
        finals = [r["final_objective"] for r in manifest["runs"]]
        summary, _ = summarize(tmp_path)
        row = summary["rows"][0]
        assert row["mean"] == pytest.approx(np.mean(finals), rel=1e-12)
        assert row["std"] == pytest.approx(np.std(finals, ddof=1), rel=1e-12)

    def test_plot_grids(self, tmp_path):
        cfg = tiny_config()
        run_experiment(cfg, tmp_path)
        time_lines = (tmp_path / "plot_time_10x8.csv").read_text().splitlines()
        iter_lines = (tmp_path / "plot_iters_10x8.csv").read_text().splitlines()
        assert time_lines[0].startswith("time_s,")
        assert len(time_lines) == 101  # header + 100 grid points
        assert iter_lines[0] == "k,admm(0.1,0.1),gd,iadmm(0.1,0.1)"
        assert len(iter_lines) == 17  # header + initial record + 15 iterations

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            summarize(tmp_path)


class TestCli:
    def test_run_and_summarize_and_check(self, tmp_path, capsys):
        doc = {
            "sizes": [[10, 8]],
            "rank": 2,
            "density": 0.25,
            "variants": [
                {"tau1": 0.1, "tau2": 0.1, "inertial": True},
                {"tau1": 0.1, "tau2": 0.1, "inertial": False},
            ],
            "include_gd": True,
            "datasets_per_size": 1,
            "inits_per_dataset": 1,
            "budget": {"iters": 10},
            "master_seed": 3,
            "b2": 0.9,
            "check_level": "full",
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(doc))
        out = tmp_path / "out"
        assert cli_main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "summary.json").exists()
        assert cli_main(["summarize", "--out", str(out)]) == 0
        assert cli_main(["check", "--out", str(out)]) == 0
        checks = json.loads((out / "checks.json").read_text())
        assert any(c["name"] == "lyapunov_descent" and c["status"] == "passed"
                   for c in checks)
        assert any(c["name"] == "y_sufficient_decrease" for c in checks)

    def test_budget_override(self, tmp_path):
        doc = {
            "sizes": [[8, 6]], "rank": 2, "density": 0.25,
            "variants": [{"tau1": 0.1, "tau2": 0.1}], "include_gd": False,
            "datasets_per_size": 1, "inits_per_dataset": 1,
            "budget": {"iters": 50}, "master_seed": 1, "b2": 0.9,
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(doc))
        out = tmp_path / "out"
        cli_main(["run", "--config", str(cfg_path), "--out", str(out),
                  "--budget-iters", "4"])
        manifest = json.loads((out / "runs_manifest.json").read_text())
        assert manifest["runs"][0]["iterations"] == 4

    def test_gen_data(self, tmp_path):
        out = tmp_path / "y.txt"
        assert cli_main(["gen-data", "--rows", "6", "--cols", "4",
                         "--density", "0.5", "--seed", "11", "--out", str(out)]) == 0
        m = load_sparse01(out)
        assert m.shape == (6, 4)
        direct = __import__("iadmm.logmf", fromlist=["generate_matrix"]).generate_matrix(
            6, 4, 0.5, 11
        )
        np.testing.assert_array_equal(m, direct)
