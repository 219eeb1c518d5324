import json
import subprocess
import sys

import pytest

from mimo_rade.cli import load_config, main
from mimo_rade.harness import ConfigError, ExperimentConfig
from mimo_rade.neighbors import load_neighbor_list

SMALL = ["--n", "3", "--sigma", "0.5", "--matrices", "2", "--messages", "20", "--workers", "1"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def strip_timing(text):
    data = json.loads(text)
    data.pop("timing")
    data["provenance"].pop("timestamp")
    for c in data["cells"]:
        c.pop("wall_seconds"), c.pop("seconds_per_1000")
    return data


class TestDecode:
    def test_noiseless_round_trip(self, capsys):
        code, out, _ = run(["decode", "--n", "4", "--m", "8", "--sigma", "0", "--seed", "1",
                            "--scheme", "brute"], capsys)
        assert code == 0
        data = json.loads(out)
        assert data["decoded"] == data["transmitted"] and data["match"]

    @pytest.mark.parametrize("scheme", ["nnx", "rade1", "rade2"])
    def test_other_schemes_noiseless(self, scheme, capsys):
        code, out, _ = run(["decode", "--n", "5", "--sigma", "0", "--scheme", scheme, "--iters", "2",
                            "--k", "2n+1", "--k1", "2n"], capsys)
        assert code == 0
        assert json.loads(out)["match"]

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("MIMO_RADE_SEED", "77")
        _, out, _ = run(["decode", "--n", "3", "--sigma", "0.1"], capsys)
        assert json.loads(out)["seed"] == 77
        _, out, _ = run(["decode", "--n", "3", "--sigma", "0.1", "--seed", "5"], capsys)
        assert json.loads(out)["seed"] == 5

    def test_bad_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("MIMO_RADE_SEED", "abc")
        code, _, err = run(["decode", "--n", "3", "--sigma", "0.1"], capsys)
        assert code == 2 and "MIMO_RADE_SEED" in err


class TestExperiments:
    def test_json_report_and_determinism(self, capsys):
        code, first, _ = run(["experiment1", *SMALL, "--seed", "9"], capsys)
        assert code == 0
        code, second, _ = run(["experiment1", *SMALL, "--seed", "9"], capsys)
        assert strip_timing(first) == strip_timing(second)
        data = json.loads(first)
        assert data["config"]["master_seed"] == 9
        assert len(data["cells"]) == 1

    @pytest.mark.parametrize("fmt,marker", [("csv", "n,sigma,scheme"), ("table", "scheme=nnx")])
    def test_formats(self, fmt, marker, capsys):
        code, out, _ = run(["experiment2", *SMALL, "--format", fmt], capsys)
        assert code == 0 and marker in out

    def test_output_file(self, tmp_path, capsys):
        target = tmp_path / "r.json"
        code, out, _ = run(["experiment3", *SMALL, "--t", "1", "--output", str(target)], capsys)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["experiment"] == "experiment3"

    def test_unwritable_output(self, tmp_path, capsys):
        code, _, err = run(["experiment1", *SMALL, "--output", str(tmp_path / "no" / "r.json")], capsys)
        assert code == 2 and "cannot write" in err

    def test_strict_budget(self, capsys):
        argv = ["experiment2", *SMALL, "--brute-budget", "10"]
        assert run(argv, capsys)[0] == 0
        code, _, err = run([*argv, "--strict"], capsys)
        assert code == 3 and "budget" in err

    def test_unknown_flag(self, capsys):
        code, _, err = run(["experiment1", "--bogus"], capsys)
        assert code == 2 and "bogus" in err

    def test_missing_subcommand(self, capsys):
        assert run([], capsys)[0] == 2

    def test_observation2(self, capsys):
        code, out, _ = run(["observation2", "--n", "6", "--num-matrices", "20"], capsys)
        assert code == 0
        assert set(json.loads(out)["extra"]["observation2"]) == {"6"}


class TestConfigFiles:
    def test_minimal(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"n_list": [6], "sigma_list": [0.25]}')
        cfg = load_config(path)
        assert cfg == ExperimentConfig(n_list=[6], sigma_list=[0.25])

    def test_zero_messages(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"messages_per_matrix": 0}')
        with pytest.raises(ConfigError, match="messages_per_matrix"):
            load_config(path)

    def test_parse_error_position(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text('{\n  "n_list": [6,]\n}')
        with pytest.raises(ConfigError, match="line 2 column"):
            load_config(path)
        code, _, err = run(["experiment1", "--config", str(path)], capsys)
        assert code == 2 and "line 2" in err

    def test_unknown_key_exit(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text('{"n_list": [3], "mystery": true}')
        code, _, err = run(["experiment1", "--config", str(path)], capsys)
        assert code == 2 and "mystery" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, _ = run(["experiment1", "--config", str(tmp_path / "none.json")], capsys)
        assert code == 2

    def test_flags_override_file(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n_list": [3], "sigma_list": [0.5], "matrices_per_n": 2,
                                    "messages_per_matrix": 10, "master_seed": 5}))
        _, out, _ = run(["experiment1", "--config", str(path), "--messages", "12", "--workers", "1"], capsys)
        cfg = json.loads(out)["config"]
        assert cfg["messages_per_matrix"] == 12 and cfg["master_seed"] == 5

    def test_effective_config_reloads(self, tmp_path, capsys):
        _, out, _ = run(["experiment2", *SMALL, "--seed", "4"], capsys)
        report = json.loads(out)
        path = tmp_path / "effective.json"
        path.write_text(json.dumps(report["config"]))
        before = path.read_text()
        _, again, _ = run(["experiment2", "--config", str(path)], capsys)
        assert strip_timing(out) == strip_timing(again)
        assert path.read_text() == before


class TestCacheNeighbors:
    def test_writes_cache_used_by_experiments(self, tmp_path, capsys):
        code, _, err = run(["cache-neighbors", "--n", "3", "--k", "2n^2", "--output", str(tmp_path)], capsys)
        assert code == 0
        path = tmp_path / "neighbors_m8_n3_k18.bin"
        assert load_neighbor_list(path).k == 18
        code, out, _ = run(["experiment3", *SMALL, "--t", "1", "--k1", "2n^2",
                            "--neighbor-cache", str(tmp_path)], capsys)
        assert code == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mimo_rade", "decode", "--n", "3", "--sigma", "0"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["match"]
