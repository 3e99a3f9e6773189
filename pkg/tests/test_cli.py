import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
import scipy.io

from nested_neumann import direct_inverse_oracle, random_spd
from nested_neumann.cli import BENCH_COLUMNS, main
from nested_neumann.mmio import read_matrix, write_dense

from oracles import rel


def _write(path, m):
    write_dense(path, m)
    return str(path)


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def spd_c1e4(tmp_path):
    path = tmp_path / "spd_32_c1e4.mtx"
    assert main(["gen-matrix", "--N", "32", "--cond", "1e4", "--seed", "0", "--out", str(path)]) == 0
    return path


class TestInvert:
    def test_identity(self, tmp_path):
        src = _write(tmp_path / "identity_8.mtx", np.eye(8))
        assert main(["invert", src, "--method", "nn", "--depth", "2"]) == 0
        report = json.loads((tmp_path / "identity_8.inv.json").read_text())
        assert report["history"][-1][1] < 1e-12
        np.testing.assert_allclose(read_matrix(tmp_path / "identity_8.inv.mtx"), np.eye(8), atol=1e-12)

    def test_cond_1e4(self, spd_c1e4, tmp_path):
        out, rep = tmp_path / "inv.mtx", tmp_path / "rep.json"
        code = main(["invert", str(spd_c1e4), "--method", "nn", "--depth", "2", "--tol", "1e-10",
                     "--cond", "1e4", "--out", str(out), "--report", str(rep)])
        assert code == 0
        report = json.loads(rep.read_text())
        assert report["stopped_reason"] == "tolerance"
        assert report["history"][-1][0] == 13
        assert report["counts"]["n3_multiplies"] == 39
        assert report["kappa_used"] == 1e4
        w = read_matrix(spd_c1e4)
        assert rel(read_matrix(out), direct_inverse_oracle(w)) < 1e-6

    def test_nonsquare(self, tmp_path, capsys):
        src = tmp_path / "nonsquare.mtx"
        scipy.io.mmwrite(str(src), np.ones((3, 4)))
        assert main(["invert", str(src)]) == 1
        assert "square" in capsys.readouterr().err

    def test_budget_exit(self, spd_c1e4):
        assert main(["invert", str(spd_c1e4), "--nests", "2"]) == 2

    @pytest.mark.parametrize("method,extra", [
        ("ns", ["--order", "8"]), ("newton", []), ("chebyshev", []), ("nn-explicit", ["--nests", "2"]),
        ("factorized-ns", ["--gamma", "15"]), ("cns", ["--ci", "1", "--terms", "2"]),
        ("sparse-factorized", ["--gamma", "7"]),
    ])
    def test_every_method_runs(self, tmp_path, method, extra):
        src = _write(tmp_path / "w.mtx", random_spd(8, 2.0, 0))
        code = main(["invert", src, "--method", method, "--tol", "1e-2", *extra])
        assert code in (0, 2)
        report = json.loads((tmp_path / "w.inv.json").read_text())
        assert report["config"]["method"] == method

    def test_missing_parameter(self, tmp_path):
        src = _write(tmp_path / "w.mtx", np.eye(2))
        assert main(["invert", src, "--method", "factorized-ns"]) == 1

    def test_bad_theta_flag(self, tmp_path):
        src = _write(tmp_path / "w.mtx", np.eye(2))
        assert main(["invert", src, "--theta", "power"]) == 1

    def test_non_contracting_power(self, tmp_path, capsys):
        src = _write(tmp_path / "w.mtx", 0.1 * np.eye(4))
        assert main(["invert", src, "--theta", "power:3"]) == 1
        assert "does not contract" in capsys.readouterr().err

    def test_power_theta(self, tmp_path):
        src = _write(tmp_path / "w.mtx", np.diag([1.0, 3.0]))
        assert main(["invert", src, "--theta", "power:8"]) == 0

    def test_estimate_kappa(self, spd_c1e4, tmp_path):
        rep = tmp_path / "r.json"
        assert main(["invert", str(spd_c1e4), "--estimate-kappa", "--report", str(rep)]) == 0
        assert json.loads(rep.read_text())["kappa_used"] == pytest.approx(1e4, rel=1e-6)

    def test_estimate_kappa_size_limit(self, tmp_path):
        src = _write(tmp_path / "big.mtx", np.eye(130))
        assert main(["invert", src, "--estimate-kappa"]) == 1

    def test_not_psd(self, tmp_path):
        src = _write(tmp_path / "neg.mtx", -np.eye(3))
        assert main(["invert", src]) == 1

    def test_missing_input(self, tmp_path):
        assert main(["invert", str(tmp_path / "absent.mtx")]) == 1


class TestSolve:
    def test_complex_normal_equations(self, tmp_path):
        a = tmp_path / "a.mtx"
        assert main(["gen-matrix", "--N", "16", "--cond", "1e2", "--kind", "general", "--complex",
                     "--out", str(a)]) == 0
        b = _write(tmp_path / "b.mtx", np.random.default_rng(0).standard_normal((16, 2)) + 1j)
        assert main(["solve", str(a), b]) == 0
        x = read_matrix(tmp_path / "b.x.mtx")
        am = read_matrix(a)
        assert np.linalg.norm(am @ x - read_matrix(b)) / np.linalg.norm(read_matrix(b)) < 1e-8
        assert json.loads((tmp_path / "b.x.json").read_text())["backward_residual"] < 1e-8

    def test_sparse_factorized(self, tmp_path):
        a = tmp_path / "sp.mtx"
        assert main(["gen-matrix", "--N", "64", "--kind", "sparse-spd", "--density", "0.05",
                     "--out", str(a)]) == 0
        b = _write(tmp_path / "b.mtx", np.ones((64, 2)))
        rep = tmp_path / "r.json"
        code = main(["solve", str(a), b, "--method", "sparse-factorized", "--gamma", "31",
                     "--report", str(rep)])
        assert code in (0, 2)
        assert json.loads(rep.read_text())["counts"]["spmv_count"] == 62

    def test_sparse_needs_gamma(self, tmp_path):
        a = _write(tmp_path / "a.mtx", np.eye(2))
        assert main(["solve", a, a, "--method", "sparse-factorized"]) == 1

    def test_row_mismatch(self, tmp_path):
        a = _write(tmp_path / "a.mtx", np.eye(3))
        b = _write(tmp_path / "b.mtx", np.ones((4, 1)))
        assert main(["solve", a, b]) == 1

    def test_budget_exit(self, tmp_path):
        a = tmp_path / "a.mtx"
        main(["gen-matrix", "--N", "8", "--cond", "1e3", "--kind", "general", "--out", str(a)])
        b = _write(tmp_path / "b.mtx", np.ones((8, 1)))
        assert main(["solve", str(a), b, "--nests", "2"]) == 2


class TestBench:
    def test_nn_counts(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--methods", "nn,ns", "--N", "16", "--cond", "1e2", "--depths", "1,2,3",
                     "--out", str(out)]) == 0
        rows = _rows(out.read_text())
        assert list(rows[0]) == BENCH_COLUMNS
        nn = [r for r in rows if r["method"] == "nn"]
        assert nn and all(int(r["n3_multiplies"]) == int(r["i"]) * (int(r["L"]) + 1) for r in nn)
        assert all(r["n3_multiplies"] == r["predicted_n3"] for r in nn)
        ns = {(r["L"], r["i"]): r for r in rows if r["method"] == "ns"}
        for r in nn:
            twin = ns[(r["L"], r["i"])]
            assert twin["gamma_effective"] == r["gamma_effective"]
            assert abs(float(twin["eps_final"]) - float(r["eps_final"])) <= 1e-10
            assert int(twin["n3_multiplies"]) == (int(r["L"]) + 1) ** int(r["i"])

    def test_deterministic_across_workers(self, tmp_path, monkeypatch):
        args = ["bench", "--methods", "nn,factorized-ns,cns,sparse-factorized", "--N", "8,12",
                "--cond", "10,1e3", "--seed", "4"]
        tables = []
        for workers in ("1", "3"):
            monkeypatch.setenv("NN_WORKERS", workers)
            out = tmp_path / f"b{workers}.csv"
            assert main([*args, "--out", str(out)]) == 0
            rows = _rows(out.read_text())
            for r in rows:
                r.pop("wall_seconds")
            tables.append(rows)
        assert tables[0] == tables[1]

    def test_failed_row_is_recorded(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--methods", "factorized-ns", "--gammas", "3,6", "--N", "8",
                     "--out", str(out)]) == 0
        rows = _rows(out.read_text())
        assert rows[0]["error"] == "" and "PlanError" in rows[1]["error"]

    def test_all_rows_fail(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--methods", "factorized-ns", "--gammas", "6", "--out", str(out)]) == 2

    def test_rhs(self, tmp_path):
        out = tmp_path / "b.csv"
        main(["bench", "--methods", "sparse-factorized", "--gammas", "7", "--N", "16", "--rhs", "3",
              "--out", str(out)])
        assert _rows(out.read_text())[0]["spmv_count"] == "21"

    def test_empty_methods(self, capsys):
        assert main(["bench", "--methods", ""]) == 1
        assert "method" in capsys.readouterr().err

    def test_unknown_method(self):
        assert main(["bench", "--methods", "magic"]) == 1

    def test_stdout(self, capsys):
        assert main(["bench", "--methods", "newton", "--N", "4", "--nests", "1"]) == 0
        assert capsys.readouterr().out.startswith("method,N,cond")


class TestAnalyzeCost:
    def test_csv(self, capsys):
        assert main(["analyze-cost", "--N", "10", "--depths", "2", "--nests", "2", "--gammas", "15"]) == 0
        rows = _rows(capsys.readouterr().out)
        by_formula = {r["formula"]: r for r in rows}
        assert by_formula["nn_recursive"]["total"] == "6900"
        assert by_formula["factorized_dense"]["n3_coeff"] == "8"

    def test_json_budget(self, tmp_path):
        out = tmp_path / "c.json"
        assert main(["analyze-cost", "--budget", "12", "--max-depth", "4", "--format", "json",
                     "--out", str(out)]) == 0
        rows = json.loads(out.read_text())
        assert [r["order"] for r in rows] == [127, 242, 255, 124]
        assert [r["L"] for r in rows if r["optimal"]] == [3]

    def test_bad_gamma(self):
        assert main(["analyze-cost", "--gammas", "6"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nested_neumann", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "invert" in proc.stdout


def test_no_command():
    assert main([]) == 1
