import json

import numpy as np
import pytest

from edreg.cli import main, read_csv, write_csv
from edreg.datasets import circle, two_particles


@pytest.fixture
def files(tmp_path):
    def put(name, rows):
        path = tmp_path / name
        write_csv(path, rows)
        return str(path)

    return put


def run(*argv):
    return main([str(a) for a in argv])


class TestCsv:
    def test_roundtrip_bytes(self, tmp_path, rng):
        path = tmp_path / "a.csv"
        write_csv(path, rng.normal(size=(20, 3)))
        first = path.read_bytes()
        write_csv(path, read_csv(path))
        assert path.read_bytes() == first

    def test_malformed(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3\n")
        assert run("register", "--source", bad, "--target", bad, "--out", tmp_path / "o") == 1
        bad.write_text("1,x\n")
        assert run("register", "--source", bad, "--target", bad, "--out", tmp_path / "o") == 1


class TestRegister:
    def test_identical(self, files, tmp_path):
        src = files("x.csv", circle(20))
        out = tmp_path / "out"
        assert run("register", "--source", src, "--target", src, "--out", out, "--grid", 5) == 0
        result = json.loads((out / "result.json").read_text())
        assert result["converged"] and result["kernel_energy"] == 0.0
        assert (out / "trajectories.csv").exists()
        assert len(read_csv(out / "grid_advected.csv")) == 25

    def test_two_particles(self, files, tmp_path):
        X, Y = two_particles()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"T": 1000, "k_max": 100, "rho_init": 10.0, "loss": {"kind": "exact_ed"},
                                   "regularization": {"kind": "l2_momentum", "weight": 1e-6}}))
        out = tmp_path / "out"
        assert run("register", "--config", cfg, "--source", files("x.csv", X), "--target", files("y.csv", Y),
                   "--out", out) == 0
        result = json.loads((out / "result.json").read_text())
        assert result["kernel_energy"] == pytest.approx(0.64, rel=0.05)
        assert result["normalization"]["scale"] == 1.0

    def test_deterministic_outputs(self, files, tmp_path, rng):
        X, Y = rng.normal(size=(15, 2)), rng.normal(size=(12, 2))
        args = ["register", "--source", files("x.csv", X), "--target", files("y.csv", Y),
                "--mode", "sliced", "--projections", 8, "--seed", 3]
        codes = [run(*args, "--out", tmp_path / name) for name in ("a", "b")]
        assert codes[0] == codes[1] and codes[0] in (0, 2)
        for name in ("result.json", "trajectories.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_non_convergence_exit_code(self, files, tmp_path, rng):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"T": 2, "k_max": 1, "epsilon": 1e-12, "inner": {"max_inner_iters": 2}}))
        code = run("register", "--config", cfg, "--source", files("x.csv", rng.normal(size=(6, 2))),
                   "--target", files("y.csv", rng.normal(size=(6, 2))), "--out", tmp_path / "o")
        assert code == 2
        assert (tmp_path / "o" / "result.json").exists()

    def test_unknown_config_key(self, files, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"T": 2, "epsilon_typo": 1.0}))
        src = files("x.csv", circle(5))
        assert run("register", "--config", cfg, "--source", src, "--target", src, "--out", tmp_path / "o") == 1

    def test_dimension_mismatch(self, files, tmp_path):
        code = run("register", "--source", files("x.csv", np.zeros((3, 2))), "--target",
                   files("y.csv", np.zeros((3, 3))), "--out", tmp_path / "o")
        assert code == 1


class TestInterpolate:
    def test_two_point(self, files, tmp_path):
        out = tmp_path / "o"
        code = run("interpolate", "--points", files("p.csv", [[0.0], [1.0]]), "--values",
                   files("v.csv", [[0.0], [1.0]]), "--queries", files("q.csv", [[0.5]]), "--out", out)
        assert code == 0
        res = json.loads((out / "interpolation.json").read_text())
        assert res["semi_norm_sq"][0] == pytest.approx(0.5)
        np.testing.assert_allclose(read_csv(out / "evaluations.csv"), [[0.5]])

    def test_constant_values(self, files, tmp_path, rng):
        out = tmp_path / "o"
        assert run("interpolate", "--points", files("p.csv", rng.normal(size=(10, 2))), "--values",
                   files("v.csv", np.full((10, 1), 2.0)), "--out", out) == 0
        assert abs(json.loads((out / "interpolation.json").read_text())["semi_norm_sq"][0]) <= 1e-10

    def test_not_unisolvent(self, files, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kernel": {"kind": "ms_spline", "m": 2, "s": 0.0}, "degree": 1}))
        code = run("interpolate", "--config", cfg, "--points", files("p.csv", [[0, 0], [1, 1], [2, 2]]),
                   "--values", files("v.csv", [[0.0], [1.0], [2.0]]), "--out", tmp_path / "o")
        assert code == 1
        assert "NotUnisolvent" in capsys.readouterr().err


class TestOracleTwoParticles:
    def test_outputs(self, tmp_path):
        for T in (250, 500, 1000):
            assert run("oracle-two-particles", "--T", T, "--grid", 20, "--out", tmp_path / str(T)) == 0
        dev = {T: json.loads((tmp_path / str(T) / "summary.json").read_text())["max_relative_deviation"]
               for T in (250, 500, 1000)}
        assert dev[1000] <= 0.02
        assert dev[500] / dev[1000] == pytest.approx(2.0, rel=0.3)
        assert json.loads((tmp_path / "1000" / "summary.json").read_text())["grid_min_distance"] > 0

    def test_bad_parameters(self, tmp_path):
        assert run("oracle-two-particles", "--eps", 2.0, "--out", tmp_path / "o") == 1


class TestBench:
    def test_one_dimensional_is_exact(self, tmp_path):
        out = tmp_path / "b.csv"
        assert run("bench-sliced", "--n", "200", "--P", "1,4", "--d", 1, "--reps", 3, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("n,P,d,mean_error")
        for line in lines[1:]:
            assert float(line.split(",")[3]) <= 1e-12

    def test_bad_list(self, tmp_path):
        assert run("bench-sliced", "--n", "a,b", "--P", "4", "--out", tmp_path / "b.csv") == 1
