import json

import numpy as np
import pytest

from main import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main


def _read_csv(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


class TestSubcommands:
    def test_solve_constant_coefficient(self, tmp_path):
        code = main(["solve", "--epsilon", "0.05", "--phi-method", "constant", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        cols = _read_csv(tmp_path / "solution.csv")
        assert set(cols) == {"x", "u_eps", "u_bar", "corrector", "U_eps"}
        np.testing.assert_allclose(cols["u_eps"], cols["u_bar"], atol=1e-10)
        assert len(cols["x"]) == 401

    def test_solve_random_coefficient(self, tmp_path):
        code = main(["solve", "--epsilon", "0.1", "--f", "sin", "--b", "0.2", "--seed", "3", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        cols = _read_csv(tmp_path / "solution.csv")
        assert cols["u_eps"][-1] == pytest.approx(0.2)
        assert np.max(np.abs(cols["corrector"])) > 0

    def test_simulate_path_is_byte_identical_on_rerun(self, tmp_path):
        argv = ["simulate-path", "--n", "200", "--seed", "9", "--config"]
        config = tmp_path / "path.json"
        config.write_text(json.dumps({"m": 1, "h0": 0.75, "delta": 0.05, "window_tolerance": 0.01}))
        assert main(argv + [str(config), "--out-dir", str(tmp_path / "a")]) == EXIT_OK
        assert main(argv + [str(config), "--out-dir", str(tmp_path / "b")]) == EXIT_OK
        assert (tmp_path / "a" / "path.csv").read_bytes() == (tmp_path / "b" / "path.csv").read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert "path.csv" in manifest["outputs"]
        assert manifest["seed_base"] == 9

    def test_simulate_several_paths(self, tmp_path):
        config = tmp_path / "path.json"
        config.write_text(json.dumps({"m": 1, "h0": 0.75, "delta": 0.05, "window_tolerance": 0.01}))
        argv = ["simulate-path", "--config", str(config), "--n", "100", "--paths", "2"]
        assert main(argv + ["--out-dir", str(tmp_path)]) == EXIT_OK
        cols = _read_csv(tmp_path / "path.csv")
        assert set(cols) == {"x", "g_0", "g_1"}
        assert not np.array_equal(cols["g_0"], cols["g_1"])
        kernel = json.loads((tmp_path / "kernel.json").read_text())
        assert kernel["normalization"] == pytest.approx(1.0, abs=1e-6)
        assert kernel["potter_constant"] >= 1.0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert {"path.csv", "kernel.json"} <= set(manifest["outputs"])

    def test_build_phi(self, tmp_path):
        code = main(["build-phi", "--method", "inductive_bounded", "--m", "2", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        expansion = _read_csv(tmp_path / "expansion.csv")
        assert abs(expansion["V_q"][0]) < 1e-8 and abs(expansion["V_q"][1]) < 1e-8
        table = _read_csv(tmp_path / "phi_table.csv")
        assert "a" in table and np.all(table["a"] > 0)

    def test_hermite_path(self, tmp_path):
        code = main(["hermite-path", "--m", "1", "--h0", "0.75", "--n-grid", "25", "--out-dir", str(tmp_path)])
        assert code == EXIT_OK
        cols = _read_csv(tmp_path / "hermite_path.csv")
        assert len(cols["t"]) == 26 and cols["Z"][0] == 0.0

    def test_hermite_path_circulant(self, tmp_path):
        argv = ["hermite-path", "--m", "1", "--h0", "0.75", "--n-grid", "32", "--method", "circulant", "--seed", "5"]
        assert main(argv + ["--out-dir", str(tmp_path)]) == EXIT_OK
        cols = _read_csv(tmp_path / "hermite_path.csv")
        assert len(cols["t"]) == 33 and cols["Z"][0] == 0.0
        config = json.loads((tmp_path / "config.json").read_text())
        assert config["method"] == "circulant"

    def test_oscillatory_from_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OSCILLAB_THREADS", "2")
        config = tmp_path / "osc.json"
        config.write_text(
            json.dumps(
                {
                    "m": 1,
                    "h0": 0.75,
                    "epsilons": [0.1],
                    "replicas": 100,
                    "window_tolerance": 0.01,
                    "hermite": {"n_grid": 30},
                }
            )
        )
        out = tmp_path / "run"
        assert main(["oscillatory", "--config", str(config), "--out-dir", str(out)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["mode"] == "oscillatory"
        for name in ("cells.csv", "cells.dat", "samples_eps_0.1.csv", "samples_limit.csv", "manifest.json"):
            assert (out / name).exists(), name
        assert (out / "cells.dat").read_text().startswith("# epsilon")


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_invalid_h0_names_constraint(self, tmp_path, caplog):
        code = main(["simulate-path", "--m", "1", "--h0", "0.4", "--out-dir", str(tmp_path)])
        assert code == EXIT_VALIDATION
        assert "1 - 1/(2m)" in caplog.text

    def test_circulant_needs_first_order(self, tmp_path):
        argv = ["hermite-path", "--m", "2", "--h0", "0.9", "--method", "circulant", "--out-dir", str(tmp_path)]
        assert main(argv) == EXIT_VALIDATION

    def test_invalid_epsilon(self, tmp_path):
        assert main(["solve", "--epsilon", "-0.1", "--out-dir", str(tmp_path)]) == EXIT_VALIDATION

    def test_runtime_error(self, tmp_path, caplog):
        # 100 cells at epsilon = 0.05 give a path step of 0.2
        code = main(["solve", "--epsilon", "0.05", "--grid", "100", "--out-dir", str(tmp_path)])
        assert code == EXIT_RUNTIME
        assert "path step" in caplog.text
