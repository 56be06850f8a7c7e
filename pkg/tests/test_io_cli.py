import csv
import io as stdio
import json
import subprocess
import sys

import numpy as np
import pytest

from spars0 import cli
from spars0 import io as sio
from spars0.apps import portfolio
from spars0.bench import CSV_COLUMNS, BenchSpec, RunConfig, run_bench, run_solve, summary_csv


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def fixture_doc(name, **params):
    return {"family": "fixture", "payload": {"fixture": name, "params": params}}


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def strip_times(doc):
    if isinstance(doc, dict):
        return {k: strip_times(v) for k, v in doc.items()
                if k not in ("wall_time", "wall_time_ms", "mean_time")}
    if isinstance(doc, list):
        return [strip_times(v) for v in doc]
    return doc


class TestIo:
    @pytest.mark.parametrize("kind", sio.SCHEMAS)
    def test_schemas_load(self, kind):
        assert sio.schema(kind)["$schema"].startswith("http://json-schema.org/")

    def test_problem_schema_rejects_unknown_family(self):
        with pytest.raises(sio.InputError, match="family"):
            sio.problem_from_dict({"family": "nope", "payload": {}})

    def test_missing_payload_key(self):
        with pytest.raises(sio.InputError):
            sio.problem_from_dict({"family": "portfolio", "payload": {"Q": [[1.0]]}})

    def test_portfolio_round_trip(self):
        inst = portfolio.gen_portfolio(4, 0)
        doc = sio.problem_document("portfolio", inst.to_dict(), inst.name, rho=0.5)
        loaded = sio.problem_from_dict(json.loads(sio.dumps(doc)))
        assert loaded.problem.n == 4 and loaded.problem.rho == 0.5
        assert loaded.name == inst.name and loaded.extras["alpha0"] > 0
        x = np.full(4, 0.25)
        assert loaded.problem.f(x) == pytest.approx(float(x @ inst.Q @ x))

    def test_quadratic_family(self):
        doc = {"family": "quadratic", "payload": {"H": [[2.0]], "c": [-4.0], "const": 4.0,
                                                  "upper": [10.0]}}
        p = sio.problem_from_dict(doc).problem
        assert p.f(np.array([2.0])) == 0.0 and p.upper[0] == 10.0

    def test_unknown_fixture(self):
        with pytest.raises(sio.InputError, match="unknown fixture"):
            sio.problem_from_dict(fixture_doc("nope"))

    def test_libsvm_relative_path(self, tmp_path):
        (tmp_path / "d.libsvm").write_text("+1 1:1 2:0.5\n-1 1:-1\n+1 2:2\n")
        path = write(tmp_path / "p.json", {"family": "logistic", "payload": {"libsvm_path": "d.libsvm"}})
        loaded = sio.load_problem(path)
        assert loaded.problem.n == 4 and loaded.to_original(np.arange(4.0)).tolist() == [-2.0, -2.0]

    def test_missing_libsvm(self, tmp_path):
        path = write(tmp_path / "p.json", {"family": "svm", "payload": {"libsvm_path": "x.libsvm"}})
        with pytest.raises(sio.InputError, match="cannot read"):
            sio.load_problem(path)

    def test_point_dimensions(self):
        p = sio.problem_from_dict(fixture_doc("ball_sum", n=3)).problem
        pt = sio.point_from_dict({"x": [0, 0, 0], "lambda": [1.0]}, p)
        assert pt.lam.tolist() == [1.0] and pt.mu is None
        with pytest.raises(sio.InputError, match="n = 3"):
            sio.point_from_dict({"x": [0, 0]}, p)
        with pytest.raises(sio.InputError, match="lambda"):
            sio.point_from_dict({"x": [0, 0, 0], "lambda": [1.0, 2.0]}, p)

    def test_dumps(self):
        text = sio.dumps({"b": np.float64(np.inf), "a": np.arange(2), "c": np.bool_(True)})
        assert text.endswith("\n") and json.loads(text) == {"a": [0, 1], "b": None, "c": True}
        assert list(json.loads(text)) == ["a", "b", "c"]

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(sio.InputError, match="malformed"):
            sio.read_json(path)


class TestSolveCommand:
    def test_toy(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("shifted_square"))
        code, out, _ = run(["solve", "--problem", prob, "--alpha0", "0.5", "--beta", "2"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["status"] == "Step3"
        assert doc["support"] == [0] and doc["l0_objective"] == pytest.approx(1.0, abs=1e-9)
        sio.validate(doc, "report")

    def test_exit_codes(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("linear_descent"))
        assert run(["solve", "--problem", prob, "--max-outer", "1"], capsys)[0] == 2
        assert run(["solve", "--problem", prob, "--alpha0", "0.1", "--beta", "2"], capsys)[0] == 3

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{")
        code, _, err = run(["solve", "--problem", str(path)], capsys)
        assert code == 1 and "malformed" in err

    def test_schema_violation(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", {"family": "portfolio"})
        code, _, err = run(["solve", "--problem", prob], capsys)
        assert code == 1 and "schema" in err

    @pytest.mark.parametrize("flags", [["--beta", "1.0"], ["--alpha0", "-1"], ["--eps-factor", "2"],
                                       ["--penalty", "huber"], ["--threads", "0"], ["--bogus"]])
    def test_bad_flags(self, tmp_path, capsys, flags):
        prob = write(tmp_path / "p.json", fixture_doc("shifted_square"))
        assert run(["solve", "--problem", prob, *flags], capsys)[0] == 1

    def test_penalty_options(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("two_targets"))
        for flags in (["--penalty", "huber", "--huber-eps", "0.5"], ["--penalty", "quadratic"],
                      ["--eps-coupled-c", "0.01"], ["--multiplier-free"]):
            code, out, _ = run(["solve", "--problem", prob, "--alpha0", "0.5", "--beta", "2",
                                *flags], capsys)
            assert code == 0 and json.loads(out)["l0_objective"] == pytest.approx(1.25, abs=1e-8)

    def test_split_problem_reports_original(self, tmp_path, capsys):
        (tmp_path / "d.libsvm").write_text(
            "".join(f"{'+1' if i % 2 else '-1'} 1:{(i % 2) * 2 - 1 + 0.1 * i} 2:{0.3 * i}\n"
                    for i in range(8)))
        prob = write(tmp_path / "p.json", {"family": "logistic",
                                           "payload": {"libsvm_path": "d.libsvm"}})
        code, out, _ = run(["solve", "--problem", prob], capsys)
        doc = json.loads(out)
        assert code == 0 and len(doc["x_original"]) == 2 and len(doc["x"]) == 4

    def test_output_file_deterministic(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("two_targets"))
        docs = []
        for i in range(2):
            out = tmp_path / f"r{i}.json"
            assert run(["solve", "--problem", prob, "--out", str(out)], capsys)[0] == 0
            docs.append(strip_times(json.loads(out.read_text())))
        assert docs[0] == docs[1]
        assert sio.dumps(docs[0]) == sio.dumps(docs[1])


class TestDiagnoseCommand:
    def diagnose(self, tmp_path, capsys, doc, point):
        prob = write(tmp_path / "p.json", doc)
        pt = write(tmp_path / "x.json", point)
        code, out, _ = run(["diagnose", "--problem", prob, "--point", pt], capsys)
        assert code == 0
        d = json.loads(out)
        sio.validate(d, "diagnose")
        return d

    def test_degenerate_sphere(self, tmp_path, capsys):
        d = self.diagnose(tmp_path, capsys, fixture_doc("degenerate_sphere", n=3), {"x": [1, 1, 1]})
        assert d["s_residual"] == pytest.approx(1.0, abs=1e-12)
        assert d["sp_mfcq"] is False and d["sp_licq"] is False
        assert d["sp_sosc"] == "not_applicable"

    def test_ball_sum_origin(self, tmp_path, capsys):
        d = self.diagnose(tmp_path, capsys, fixture_doc("ball_sum", n=3), {"x": [0, 0, 0]})
        assert d["s_residual"] == 0.0 and d["sp_licq"] is True and d["sp_sosc"] == "holds"

    def test_infeasible_point(self, tmp_path, capsys):
        d = self.diagnose(tmp_path, capsys, fixture_doc("ball_sum", n=3),
                          {"x": [2.0, -0.5, 0.0], "lambda": [0.0]})
        assert d["feasibility"]["g"] == pytest.approx(3.25) and d["feasibility"]["bounds"] == 0.5
        assert d["infeasibility"] > 0 and d["multipliers_given"] is True

    def test_dimension_mismatch(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("ball_sum", n=3))
        pt = write(tmp_path / "x.json", {"x": [0, 0]})
        code, _, err = run(["diagnose", "--problem", prob, "--point", pt], capsys)
        assert code == 1 and "n = 3" in err


class TestOracleCommand:
    def test_table(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("two_targets"))
        code, out, _ = run(["oracle", "--problem", prob, "--table"], capsys)
        d = json.loads(out)
        assert code == 0 and d["best_support"] == [0] and len(d["table"]) == 4
        sio.validate(d, "oracle")

    def test_refusal(self, tmp_path, capsys):
        prob = write(tmp_path / "p.json", fixture_doc("ball_sum", n=3))
        code, _, err = run(["oracle", "--problem", prob, "--max-n", "2"], capsys)
        assert code == 1 and "refused" in err


class TestGenerateCommand:
    @pytest.mark.parametrize("family,args", [("portfolio", ["--n", "5"]),
                                             ("basis_pursuit", ["--m", "6", "--n", "10", "--k", "0"]),
                                             ("dictionary", ["--n", "3", "--l", "4", "--m", "5",
                                                             "--nnz", "2"]),
                                             ("logistic", ["--m", "10", "--n", "4", "--k", "2"]),
                                             ("svm", ["--m", "10", "--n", "4", "--k", "2"])])
    def test_families(self, tmp_path, capsys, family, args):
        out = tmp_path / f"{family}.json"
        assert run(["generate", family, "--seed", "3", *args, "--out", str(out)], capsys)[0] == 0
        loaded = sio.load_problem(out)
        assert loaded.family == family and loaded.problem.n > 0

    def test_basis_pursuit_zero_k(self, tmp_path, capsys):
        out = tmp_path / "bp.json"
        run(["generate", "basis_pursuit", "--m", "6", "--n", "10", "--k", "0", "--out", str(out)],
            capsys)
        p = sio.load_problem(out).problem
        assert p.infeasibility(np.zeros(10)) == 0.0

    def test_classification_needs_out(self, capsys):
        code, _, err = run(["generate", "logistic"], capsys)
        assert code == 1 and "--out" in err

    def test_negative_size(self, capsys):
        assert run(["generate", "portfolio", "--n", "-2"], capsys)[0] == 1

    def test_stdout_deterministic(self, capsys):
        a = run(["generate", "portfolio", "--seed", "7"], capsys)[1]
        b = run(["generate", "portfolio", "--seed", "7"], capsys)[1]
        assert a == b and json.loads(a)["family"] == "portfolio"


class TestBench:
    def test_portfolio_with_oracle(self, tmp_path, capsys):
        prefix = tmp_path / "pf"
        code, _, _ = run(["bench", "portfolio", "--count", "2", "--param", "n=5", "--oracle",
                          "--out", str(prefix)], capsys)
        assert code == 0
        summary = json.loads(prefix.with_suffix(".json").read_text())
        sio.validate(summary, "bench")
        rows = list(csv.DictReader(stdio.StringIO(prefix.with_suffix(".csv").read_text())))
        assert len(rows) == 2 and tuple(rows[0]) == CSV_COLUMNS
        assert summary["aggregates"]["count"] == 2 and summary["aggregates"]["errors"] == 0
        assert summary["aggregates"]["match_rate"] is not None

    def test_deterministic_and_threaded(self):
        spec = BenchSpec("svm_synth", count=2, seed=1, params=(("m", 10), ("n", 3)))
        a = run_bench(spec, RunConfig(), threads=1)
        b = run_bench(spec, RunConfig(), threads=2)
        assert strip_times(a) == strip_times(b)
        assert [r["name"] for r in a["rows"]] == sorted(r["name"] for r in a["rows"])

    def test_error_rows_recorded(self):
        spec = BenchSpec("portfolio", count=1, params=(("n", 1),))
        s = run_bench(spec, RunConfig())
        assert s["rows"][0]["status"] == "Error" and "n >= 2" in s["rows"][0]["error"]
        assert summary_csv(s).splitlines()[0].startswith("name,seed,n,status")

    def test_all_failing_exits_one(self, capsys):
        assert run(["bench", "portfolio", "--count", "1", "--param", "n=1"], capsys)[0] == 1

    def test_bad_param(self, capsys):
        assert run(["bench", "portfolio", "--param", "n"], capsys)[0] == 1
        assert run(["bench", "portfolio", "--param", "n=x"], capsys)[0] == 1

    def test_thread_env(self, monkeypatch):
        from spars0.bench import default_threads

        monkeypatch.setenv("SPARS0_THREADS", "3")
        assert default_threads() == 3
        monkeypatch.setenv("SPARS0_THREADS", "many")
        with pytest.raises(ValueError):
            default_threads()

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BenchSpec("nope")
        with pytest.raises(ValueError):
            BenchSpec("portfolio", count=0)


@pytest.mark.slow
def test_smaller_beta_is_not_worse_on_portfolios():
    """beta = 1.1 reaches an objective at most that of beta = 5 on most seeds."""
    wins = 0
    seeds = range(10)
    for seed in seeds:
        inst = portfolio.gen_portfolio(8, seed)
        loaded = sio.LoadedProblem(portfolio.build_portfolio(inst), "portfolio", inst,
                                   extras={"alpha0": inst.recommended_alpha0()})
        slow, _ = run_solve(loaded, RunConfig(beta=1.1))
        fast, _ = run_solve(loaded, RunConfig(beta=5.0))
        assert slow.status == "Step3"
        wins += slow.l0_objective <= fast.l0_objective * (1 + 1e-6)
    assert wins >= 0.8 * len(seeds)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "spars0.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "spars0" in out.stdout
