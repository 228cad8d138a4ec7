import io
import json

import pandas as pd
import pytest

from src.cli import main, parse_values
from src.config import parse_run_config
from src.custom_exception import InvalidInputError
from src.selftest import FAULT_ENV
from src.simulation import PLACEHOLDER_COSTS
from tests.conftest import BENCHMARK_NET


def data_flags(toy_dir):
    return ["--network", str(toy_dir / "network.net"), "--weights", str(toy_dir / "weights"),
            "--data", str(toy_dir / "data")]


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestRun:

    def test_json_report_is_byte_identical_across_runs(self, toy_dir, capsys):
        argv = ["run", *data_flags(toy_dir), "--sigma", "0.8", "--seed", "3", "--format", "json"]
        code, first, _ = run_cli(capsys, argv)
        assert code == 0
        _, second, _ = run_cli(capsys, argv)
        assert first == second
        report = json.loads(first)
        assert report["schema"] == 1 and report["mode"] == "run"
        assert [row["name"] for row in report["layers"]] == ["conv1", "conv2", "pool1", "fc1", "fc2"]
        assert len(report["predictions"]) == 1 and len(report["predictions"][0]) == 3

    def test_worker_processes_give_the_same_report(self, toy_dir, capsys):
        argv = ["run", *data_flags(toy_dir), "--sigma", "1.2", "--format", "json"]
        _, serial, _ = run_cli(capsys, argv + ["--jobs", "1"])
        _, parallel, _ = run_cli(capsys, argv + ["--jobs", "2"])
        strip = lambda text: {k: v for k, v in json.loads(text).items() if k != "config"}
        assert strip(serial) == strip(parallel)

    def test_exact_engine_scores_generated_labels(self, toy_dir, capsys):
        code, out, _ = run_cli(capsys, ["run", *data_flags(toy_dir), "--engine", "oracle", "--format", "json"])
        summary = json.loads(out)["summary"]
        assert code == 0
        assert summary["accuracy"] == 1.0
        assert summary["popcount_error"]["std"] == 0.0

    def test_csv_ends_with_total_row(self, toy_dir, capsys):
        _, out, _ = run_cli(capsys, ["run", *data_flags(toy_dir), "--engine", "proposal_b", "--format", "csv",
                                     "--explain"])
        frame = pd.read_csv(io.StringIO(out))
        assert frame["name"].iloc[-1] == "total"
        assert frame["accuracy"].iloc[-1] == 1.0
        assert frame["engine_ops"].iloc[:-1].sum() == frame["engine_ops"].iloc[-1]
        assert "dual_read_count" in frame.columns

    def test_table_with_baseline(self, toy_dir, capsys):
        code, out, _ = run_cli(capsys, ["run", *data_flags(toy_dir), "--engine", "oracle", "--baseline"])
        assert code == 0
        assert "Accuracy: 1.000" in out
        assert "Speedup vs baseline" in out

    def test_proposal_b_beats_baseline(self, toy_dir, capsys):
        _, out, _ = run_cli(capsys, ["run", *data_flags(toy_dir), "--engine", "proposal_b", "--baseline",
                                     "--format", "json"])
        total = json.loads(out)["speedup"]["total"]
        assert total["energy_ratio"] > 1.0
        assert total["latency_ratio"] > 1.0

    def test_report_written_to_file(self, toy_dir, tmp_path, capsys):
        out_file = tmp_path / "reports" / "run.json"
        code, out, _ = run_cli(capsys, ["run", *data_flags(toy_dir), "--format", "json", "--out", str(out_file)])
        assert code == 0 and out == ""
        assert json.loads(out_file.read_text())["engine"] == "proposal_a"


class TestAssumptions:

    @pytest.fixture(autouse=True)
    def default_log_level(self, monkeypatch):
        monkeypatch.delenv("XCELRAM_LOG_LEVEL", raising=False)

    def test_single_rwl_run_is_tagged(self, toy_dir, tmp_path, capsys):
        config = tmp_path / "single.cfg"
        config.write_text("[geometry]\ndual_rwl = false\n")
        argv = ["run", "--config", str(config), *data_flags(toy_dir)]
        code, out, err = run_cli(capsys, argv + ["--format", "json"])
        assert code == 0
        assert json.loads(out)["summary"]["extrapolations"] == ["single_rwl"]
        assert err.count("single-RWL ADC mode is an extrapolation") == 1
        _, table, _ = run_cli(capsys, argv)
        assert "Extrapolated modes: single_rwl" in table

    def test_dual_rwl_run_has_no_tag(self, toy_dir, capsys):
        code, out, err = run_cli(capsys, ["run", *data_flags(toy_dir), "--format", "json"])
        assert code == 0
        assert json.loads(out)["summary"]["extrapolations"] == []
        assert "extrapolation" not in err
        assert "Extrapolated" not in run_cli(capsys, ["run", *data_flags(toy_dir)])[1]

    def test_placeholder_costs_warned_once(self, capsys):
        code, _, err = run_cli(capsys, ["profile", "--network", str(BENCHMARK_NET), "--format", "json"])
        assert code == 0
        assert err.count("placeholder cost constants in use") == 1
        assert "dram_access_energy_pj" in err

    def test_measured_costs_silence_the_warning(self, tmp_path, capsys):
        config = tmp_path / "costs.cfg"
        config.write_text("[costs]\n" + "".join(f"{name} = 3.25\n" for name in PLACEHOLDER_COSTS))
        code, _, err = run_cli(capsys, ["profile", "--config", str(config), "--network", str(BENCHMARK_NET)])
        assert code == 0
        assert "placeholder" not in err


class TestExitCodes:

    @pytest.mark.parametrize("argv", [
        ["run", "--engine", "warp"],
        ["run", "--engine", "proposal_b", "--sections", "4", "--network", "x.net"],
        ["profile"],
        ["profile", "--network", "missing.net"],
        ["sweep", "--parameter", "sigma", "--values", "a,b", "--network", "x.net"],
        ["frobnicate"],
    ])
    def test_validation_errors_exit_1(self, argv, capsys):
        code, _, _ = run_cli(capsys, argv)
        assert code == 1

    def test_help_exits_0(self, capsys):
        assert run_cli(capsys, ["--help"])[0] == 0

    def test_sections_sweep_rejected_for_proposal_b(self, toy_dir, capsys):
        code, _, err = run_cli(capsys, ["sweep", *data_flags(toy_dir), "--engine", "proposal_b",
                                        "--parameter", "sections", "--values", "1,2"])
        assert code == 1
        assert "error:" in err


class TestProfile:

    def test_benchmark_profile(self, capsys):
        code, out, _ = run_cli(capsys, ["profile", "--network", str(BENCHMARK_NET), "--format", "json",
                                        "--baseline"])
        report = json.loads(out)
        assert code == 0
        assert report["mode"] == "profile"
        assert report["summary"]["binary_mac_fraction"] >= 0.99
        assert report["speedup"]["total"]["energy_ratio"] > 1.0
        assert report["speedup"]["conv2"]["latency_ratio"] > 1.0

    def test_sectioning_shows_in_profile(self, capsys):
        totals = {}
        for sections in ("1", "4"):
            _, out, _ = run_cli(capsys, ["profile", "--network", str(BENCHMARK_NET), "--format", "json",
                                         "--sections", sections])
            rows = json.loads(out)["layers"]
            totals[sections] = sum(r["pseudo_reads"] for r in rows), sum(r["adc_conversions"] for r in rows)
        assert totals["1"][0] == 4 * totals["4"][0]
        assert totals["1"][1] == totals["4"][1]


class TestSweep:

    def test_sections_sweep_scales_pseudo_reads(self, toy_dir, capsys):
        code, out, _ = run_cli(capsys, ["sweep", *data_flags(toy_dir), "--parameter", "sections",
                                        "--values", "1,2,4", "--sigma", "0"])
        frame = pd.read_csv(io.StringIO(out))
        assert code == 0
        reads = dict(zip(frame["value"], frame["pseudo_reads"]))
        assert reads[1.0] == 2 * reads[2.0] == 4 * reads[4.0]
        assert (frame["adc_conversions"] == frame["adc_conversions"].iloc[0]).all()
        assert (frame["accuracy"] == 1.0).all()

    def test_sigma_sweep_json(self, toy_dir, capsys):
        code, out, _ = run_cli(capsys, ["sweep", *data_flags(toy_dir), "--parameter", "sigma",
                                        "--values", "0,2.5", "--format", "json"])
        rows = json.loads(out)["rows"]
        assert code == 0
        assert [r["value"] for r in rows] == [0.0, 2.5]
        assert rows[0]["error_std"] == 0.0
        assert rows[1]["error_std"] > 0.0
        assert rows[0]["accuracy"] == 1.0 >= rows[1]["accuracy"]

    def test_accuracy_falls_with_noise_over_ten_trials(self, toy_dir, capsys):
        code, out, _ = run_cli(capsys, ["sweep", *data_flags(toy_dir), "--parameter", "sigma",
                                        "--values", "0,0.4359,1.0", "--trials", "10", "--format", "json"])
        rows = json.loads(out)["rows"]
        assert code == 0
        accuracy = [r["accuracy"] for r in rows]
        spread = [r["error_std"] for r in rows]
        assert accuracy[0] == 1.0
        assert accuracy[0] >= accuracy[1]
        # 30 inferences per value; allow three flips between the two noisy points
        assert accuracy[2] <= accuracy[1] + 0.1
        assert spread[0] == 0.0 < spread[1] < spread[2]

    def test_parse_values(self):
        assert parse_values("0.1, 0.2,") == [0.1, 0.2]
        with pytest.raises(InvalidInputError):
            parse_values(",")


class TestSelftestCommand:

    def test_passes(self, capsys):
        code, out, _ = run_cli(capsys, ["selftest", "--pairs", "200"])
        assert code == 0
        assert out.startswith("selftest passed")

    def test_injected_fault_exits_3(self, capsys):
        code, _, err = run_cli(capsys, ["selftest", "--pairs", "50", "--inject-fault"])
        assert code == 3
        assert "selftest checks failed" in err

    def test_fault_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv(FAULT_ENV, "1")
        assert run_cli(capsys, ["selftest", "--pairs", "50"])[0] == 3


class TestMisc:

    def test_echo_config_reparses(self, capsys):
        code, out, _ = run_cli(capsys, ["run", "--engine", "proposal_b", "--sigma", "0.25", "--echo-config"])
        assert code == 0
        config = parse_run_config(out)
        assert config.engine == "proposal_b"
        assert config.geometry.sections == 1
        assert config.adc.sigma == 0.25

    def test_gen_toy_data(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, ["gen-toy-data", "--out", str(tmp_path), "--images", "2"])
        assert code == 0
        assert (tmp_path / "network.net").exists()
        assert len(list((tmp_path / "data").glob("*.xrt"))) == 2
        assert "weights:" in out
