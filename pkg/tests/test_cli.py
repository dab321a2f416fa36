import csv
import io
import json
import subprocess
import sys

import pytest

from banachrm import cli
from banachrm import pde_problems as pp
from banachrm.errors import SolverFailure
from banachrm.suites import SuiteReport


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def table(text):
    return list(csv.DictReader(io.StringIO("\n".join(body(text)))))


def test_constants_sixty_rows(capsys):
    code, out, _ = run(["constants", "--p-min", "1.02", "--p-max", "50", "--p-steps", "60", "--no-best"], capsys)
    assert code == 0
    rows = table(out)
    assert len(rows) == 60
    assert float(rows[0]["p"]) == pytest.approx(1.02)
    assert float(rows[0]["c_ao"]) == pytest.approx(0.984424, abs=1e-6)
    assert float(rows[-1]["p"]) == pytest.approx(50.0)


def test_constants_best_column(capsys):
    code, out, _ = run(["constants", "--p-min", "1.02", "--p-max", "3", "--p-steps", "3"], capsys)
    assert code == 0
    assert float(table(out)[0]["c_best"]) == pytest.approx(1.869203, abs=1e-6)


def test_output_uses_scientific_notation(capsys):
    _, out, _ = run(["constants", "--p-steps", "2", "--no-best"], capsys)
    val = table(out)[0]["c_bm"]
    mant = val.split("e")[0].lstrip("-").replace(".", "")
    assert "e" in val and len(mant) == 12


def test_laplace_smooth_rate(capsys):
    code, out, _ = run(["laplace", "--smooth", "--p", "1.5", "--k", "1", "--mesh-list", "2,4,8,16,32,64"], capsys)
    assert code == 0
    assert len(table(out)) == 6
    summary = {ln.split()[2].split("=")[0]: float(ln.split("=")[1]) for ln in out.splitlines()
               if ln.startswith("# summary")}
    assert summary["rate_err_energy"] == pytest.approx(1.0, abs=0.1)


def test_empty_mesh_list_is_config_error(capsys):
    code, out, err = run(["laplace", "--smooth", "--mesh-list", ""], capsys)
    assert code == 1 and "mesh list is empty" in err and out == ""


@pytest.mark.parametrize("argv", [
    ["laplace", "--alpha", "0.5", "--smooth"],
    ["gibbs", "--p-list", "a,b"],
    ["advect", "--p", "1.0"],
    ["constants", "--jobs", "0"],
    ["bogus"],
    ["verify", "no-such-suite"],
])
def test_bad_arguments_exit_one(argv, capsys):
    assert run(argv, capsys)[0] == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfgf = tmp_path / "run.cfg"
    cfgf.write_text("# comment\np-steps = 4\nno-best = true\np_max = 3\n")
    code, out, _ = run(["constants", "--config", str(cfgf), "--p-steps", "3"], capsys)
    assert code == 0
    rows = table(out)
    assert len(rows) == 3 and float(rows[-1]["p"]) == pytest.approx(3.0)
    assert "# config p_steps=3" in out and "# config no_best=true" in out


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfgf = tmp_path / "run.cfg"
    cfgf.write_text("p_steps=4\nfrobnicate=1\n")
    code, _, err = run(["constants", "--config", str(cfgf)], capsys)
    assert code == 1 and "frobnicate" in err


def test_config_seed_and_format(tmp_path, capsys):
    cfgf = tmp_path / "run.cfg"
    cfgf.write_text("seed=7\nformat=json\ncount=3\n")
    code, out, _ = run(["bestapprox", "--config", str(cfgf)], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["config"]["seed"] == 7 and len(doc["rows"]) == 3


def test_solver_keys(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text("solver.tol=1e-10\nsolver.max_newton=80\nsolver.continuation_p=2,1.75\n")
    code, out, _ = run(["laplace", "--smooth", "--mesh-list", "2,4,8", "--config", str(good)], capsys)
    assert code == 0 and "# config solver.tol=1e-10" in out
    bad = tmp_path / "bad.cfg"
    bad.write_text("solver.delta_start=1e-12\nsolver.delta_end=1e-2\n")
    assert run(["laplace", "--smooth", "--config", str(bad)], capsys)[0] == 1
    assert run(["constants", "--config", str(good)], capsys)[0] == 1


def test_reproducible_bodies(capsys):
    argv = ["bestapprox", "--p", "1.3", "--count", "20", "--seed", "3"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
    _, c, _ = run(argv[:-1] + ["4"], capsys)
    assert body(c) != body(a)


def test_parallel_matches_serial(capsys):
    argv = ["laplace", "--alpha", "0.5", "--p", "1.25", "--mesh-list", "2,4,8,16"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv + ["--jobs", "2"], capsys)
    assert body(a) == body(b)
    strip = lambda t: [ln for ln in t.splitlines() if not ln.startswith("# config jobs")]
    assert strip(a) == strip(b)


def test_json_output(capsys):
    code, out, _ = run(["gibbs", "--p-list", "2,1.5", "--refine", "2", "--format", "json"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["scenario"] == "gibbs" and doc["status"] == "ok"
    ov = [r["overshoot"] for r in doc["rows"]]
    assert ov[0] > ov[1] > 0


def test_output_directory_and_rates(tmp_path, capsys):
    code, out, _ = run(["advect", "--rhs", "smooth", "--n-elem", "64", "--sweep", "--output", str(tmp_path)],
                       capsys)
    path = tmp_path / "advect.csv"
    assert code == 0 and out.strip() == str(path) and path.exists()
    assert len(table(path.read_text())) == 6
    code, out, _ = run(["rates", "--input", str(path), "--columns", "err_lp"], capsys)
    rows = table(out)
    assert code == 0 and rows[0]["column"] == "err_lp"
    assert float(rows[0]["rate"]) == pytest.approx(1.0, abs=0.05)
    assert run(["rates", "--input", str(path), "--columns", "nope"], capsys)[0] == 1


def test_bestapprox_explicit_instance(capsys):
    code, out, _ = run(["bestapprox", "--p", "2", "--y", "1,2", "--basis", "1,0"], capsys)
    row = table(out)[0]
    assert code == 0 and float(row["ratio"]) == pytest.approx(1 / 5 ** 0.5)
    assert run(["bestapprox", "--y", "1,2", "--basis", "1,0,0"], capsys)[0] == 1


def test_graded_subcommand(capsys):
    code, out, _ = run(["graded", "--eps-list", "0.5,0.05", "--no-infsup"], capsys)
    rows = table(out)
    assert code == 0 and len(rows) == 2
    assert float(rows[1]["galerkin"]) > float(rows[0]["galerkin"])


def test_solver_failure_exit_two_keeps_partial_rows(monkeypatch, capsys):
    real = pp.laplace_mesh_run

    def flaky(data, degrees, n, cfg=None):
        if n == 8:
            raise SolverFailure("stagnation", residual=1.0)
        return real(data, degrees, n, cfg)

    monkeypatch.setattr(pp, "laplace_mesh_run", flaky)
    code, out, err = run(["laplace", "--smooth", "--mesh-list", "2,4,8,16"], capsys)
    assert code == 2
    assert len(table(out)) == 2 and "# status: solver failure" in out and "stagnation" in err


def test_verify_failure_exit_three(monkeypatch, capsys):
    import banachrm.suites as suites

    def fake(name, seed=0):
        rep = SuiteReport(name)
        rep.add("made_up", False, 2.0, 1.0, "y=[1, 2]")
        return rep

    monkeypatch.setattr(suites, "run_suite", fake)
    code, out, err = run(["verify", "rates-smoke"], capsys)
    assert code == 3 and "FAIL rates-smoke:made_up" in err and "counterexample: y=[1, 2]" in err


def test_verify_rates_smoke(capsys):
    code, out, err = run(["verify", "rates-smoke"], capsys)
    assert code == 0 and "FAIL" not in err and err.count("PASS") >= 3


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "banachrm", "constants", "--p-steps", "2", "--no-best"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and len(body(res.stdout)) == 3
