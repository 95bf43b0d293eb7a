import json

import pytest

from spdemc.cli import dispatch


@pytest.fixture
def linear_config(tmp_path):
    config = {
        "problem": {"preset": "linear_nu43"},
        "methods": ["MIMC1", "MLMC"],
        "epsilons": [0.25, 0.125],
        "replicates": 1,
        "seeds": [7],
        "surface": {"maxLevel": 2, "samples": 16},
        "reference": {"mode": "exact-zero"},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestDispatch:
    def test_missing_config_names_path(self, tmp_path, capsys):
        code = dispatch(["sweep", "--config", str(tmp_path / "absent.json")])
        assert code == 1
        assert "absent.json" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self):
        assert dispatch(["rates", "--frobnicate"]) == 1

    def test_unknown_command_is_usage_error(self):
        assert dispatch(["transmogrify"]) == 1

    def test_help_exits_zero(self):
        assert dispatch(["--help"]) == 0

    def test_malformed_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert dispatch(["estimate", "--config", str(bad)]) == 1


class TestValidate:
    def test_passes(self, capsys):
        assert dispatch(["validate"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "FAIL" not in out


class TestRates:
    def test_writes_csv_and_fit(self, linear_config, tmp_path, capsys):
        out_dir = tmp_path / "results"
        code = dispatch(["rates", "--config", str(linear_config), "--seed", "7",
                         "--out", str(out_dir), "--threads", "1"])
        assert code == 0
        rates_csv = out_dir / "rates.csv"
        fit_json = out_dir / "fit.json"
        assert rates_csv.exists() and fit_json.exists()
        header = rates_csv.read_text().splitlines()[0]
        assert header == "l1,l2,eF,stderr,m"


class TestEstimate:
    def test_writes_estimator_json(self, linear_config, tmp_path):
        out_dir = tmp_path / "est"
        code = dispatch(["estimate", "--config", str(linear_config),
                         "--epsilon", "0.25", "--method", "MIMC1",
                         "--out", str(out_dir)])
        assert code == 0
        doc = json.loads((out_dir / "estimate.json").read_text())
        assert doc["config"]["method"] == "mimc"
        assert doc["totalCost"] > 0

    def test_budget_cap_is_runtime_error(self, linear_config, tmp_path, capsys):
        code = dispatch(["estimate", "--config", str(linear_config),
                         "--epsilon", "0.015625", "--budget-cap", "10",
                         "--out", str(tmp_path / "x")])
        assert code == 2
        assert "budget" in capsys.readouterr().err.lower()


class TestReference:
    def test_exact_zero_reference(self, linear_config, tmp_path):
        out_dir = tmp_path / "ref"
        code = dispatch(["reference", "--config", str(linear_config),
                         "--out", str(out_dir)])
        assert code == 0
        doc = json.loads((out_dir / "reference.json").read_text())
        assert doc["mode"] == "exact-zero"
        assert doc["value"] == [0.0]


class TestSweep:
    def test_sweep_outputs(self, linear_config, tmp_path):
        out_dir = tmp_path / "sweep"
        code = dispatch(["sweep", "--config", str(linear_config),
                         "--out", str(out_dir), "--threads", "2"])
        assert code == 0
        lines = (out_dir / "sweep.csv").read_text().splitlines()
        assert lines[0] == "method,epsilon,error_sq,cost,walltime_s,seed,replicate"
        assert len(lines) == 1 + 2 * 2  # two methods, two tolerances, one replicate

    def test_deterministic_mode_byte_identical(self, linear_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out_dir in (out_a, out_b):
            code = dispatch(["sweep", "--config", str(linear_config),
                             "--seed", "99", "--deterministic",
                             "--out", str(out_dir), "--threads", "2"])
            assert code == 0
        assert (out_a / "sweep.csv").read_bytes() == (out_b / "sweep.csv").read_bytes()
