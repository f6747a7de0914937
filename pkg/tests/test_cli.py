"""Problem files, command dispatch, exit codes and JSON reports."""

import json
import subprocess
import sys

import numpy as np
import pytest

from nmfp.cli import (
    COMMANDS,
    EXIT_INCONCLUSIVE,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_REFUTED,
    InputError,
    corpus_names,
    load_problem_file,
    main,
    run,
)

# expected exit code per bundled problem, in COMMANDS order:
# derivatives, check-kkt, sufficiency, duality, pareto
EXPECTED = {
    "section4": (0, 0, 0, 0, 0),
    "section4_dual": (0, 0, 0, 0, 0),
    "example31": (0, 1, 2, 1, 0),
    "example21": (0, 2, 2, 2, 0),
    "square": (0, 0, 0, 0, 0),
    "single_point": (0, 0, 0, 0, 0),
    "uniform": (0, 0, 0, 0, 0),
    "cubic_dual": (0, 0, 1, 1, 1),
    "absolute": (0, 2, 2, 2, 0),
}


def verdict(report, check, **match):
    for v in report["verdicts"]:
        if v.get("check") == check and all(v.get(k) == val for k, val in match.items()):
            return v
    raise AssertionError(f"no {check} verdict with {match}")


def test_corpus_is_complete():
    assert sorted(EXPECTED) == corpus_names()


# -- problem files -----------------------------------------------------------

def test_load_section4(section4):
    assert section4.point.tolist() == [0.0, 0.0] and section4.direction.tolist() == [0.0, 1.0]
    assert section4.multipliers.lam.tolist() == [1.0, 2.0]
    assert section4.resolution == 201
    np.testing.assert_array_equal(section4.grid_box[0], [-1.0, 0.0])


def test_load_from_path(tmp_path):
    f = tmp_path / "p.toml"
    f.write_text('[problem]\ndimension = 1\nlower = [-1.0]\nupper = [1.0]\nf = ["x1^2"]\nF = ["1"]\n')
    pf = load_problem_file(str(f))
    assert pf.problem.n == 1 and pf.point is None


@pytest.mark.parametrize("body, message", [
    ('[problem]\ndimension = 1\nlower = [-1.0]\nupper = [1.0]\nf = ["x1^2"]\n', "F"),
    ('[problem]\ndimension = 1\nlower = [-1.0]\nupper = [1.0]\nf = ["x1 +"]\nF = ["1"]\n', None),
    ('[problem]\ndimension = 1\nlower = [1.0]\nupper = [-1.0]\nf = ["x1"]\nF = ["1"]\n', None),
    ('[problem]\ndimension = 2\nlower = [-1.0]\nupper = [1.0]\nf = ["x1"]\nF = ["1"]\n', "entries"),
    ('[problem]\ndimension = 1\nlower = [-1.0]\nupper = [1.0]\nf = ["x1"]\nF = ["1"]\n[bogus]\n', "bogus"),
    ("[problem\n", None),
])
def test_malformed_files(tmp_path, body, message):
    f = tmp_path / "bad.toml"
    f.write_text(body)
    with pytest.raises(InputError, match=message):
        load_problem_file(str(f))


def test_missing_file():
    with pytest.raises(InputError, match="no such"):
        load_problem_file("/nonexistent/problem.toml")


# -- exit codes --------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(EXPECTED))
@pytest.mark.parametrize("index, command", list(enumerate(COMMANDS)))
def test_corpus_exit_codes(name, index, command):
    _, code = run(command, name)
    assert code == EXPECTED[name][index]


@pytest.mark.parametrize("argv", [
    ["bogus", "square"],
    ["pareto", "no_such_problem"],
    ["pareto", "square", "--point", "0 1"],
    ["pareto", "square", "--point", "abc"],
    ["pareto", "square", "--grid", "1"],
    ["pareto", "square", "--grid", "x"],
    ["check-kkt", "section4", "--point", "1 1"],
])
def test_input_errors_exit_3(argv, capsys):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == EXIT_INPUT
    assert "input error" in capsys.readouterr().err


def test_exit_code_constants():
    assert (EXIT_OK, EXIT_REFUTED, EXIT_INCONCLUSIVE, EXIT_INPUT) == (0, 1, 2, 3)


# -- report contents ---------------------------------------------------------

def test_derivatives_example21():
    report, code = run("derivatives", "example21")
    assert code == 0
    t1 = verdict(report, "derivatives", function="f1")
    t2 = verdict(report, "derivatives", function="F1")
    assert t1["pales_zeidan"]["value"] == pytest.approx(2.0, abs=0.1)
    assert t2["pales_zeidan"]["value"] == pytest.approx(2.0, abs=0.1)
    assert t2["second"]["verdict"] == "nonexistent"
    q = verdict(report, "quotient", function="f1/F1")
    assert q["pales_zeidan"]["value"] == pytest.approx(4.0, abs=0.2)


def test_derivatives_quadratic_closed_forms():
    report, _ = run("derivatives", "section4", point="0.5 0.25", direction="1 2")
    f1 = verdict(report, "derivatives", function="f1")
    # f1 = 3x1⁴ + 5x1² + 6x2²: gradient (12x1³ + 10x1, 12x2) = (6.5, 3) at (0.5, 0.25)
    assert f1["gateaux"]["value"] == pytest.approx(6.5 + 6.0, abs=1e-9)
    # Hessian diag(36x1² + 10, 12) = diag(19, 12): vᵀHv = 19 + 48 = 67
    assert f1["second"]["value"] == pytest.approx(67.0, abs=1e-4)
    assert f1["pales_zeidan"]["value"] == pytest.approx(67.0, abs=1e-4)


def test_derivatives_zero_direction():
    report, _ = run("derivatives", "section4", direction="0 0")
    for v in report["verdicts"]:
        if v.get("check") == "derivatives":
            assert v["gateaux"]["value"] == 0.0 and v["clarke"]["value"] == 0.0


def test_check_kkt_reports():
    rep, code = run("check-kkt", "section4")
    kkt = verdict(rep, "strong-kkt")
    assert code == 0 and kkt["found"] and kkt["delta"] > 1e-6
    rep, code = run("check-kkt", "example31")
    kkt = verdict(rep, "strong-kkt")
    # the whole normalized system is infeasible; JSON carries −inf as a string
    assert code == 1 and not kkt["found"] and kkt["delta"] == "-inf"


def test_check_kkt_without_constraints():
    rep, code = run("check-kkt", "square")
    kkt = verdict(rep, "strong-kkt")
    assert code == 0 and kkt["certificate"]["mu"] == [] and kkt["certificate"]["nu"] == []


def test_pareto_section4_front():
    rep, code = run("pareto", "section4", grid=41)
    p = verdict(rep, "pareto")
    assert code == 0 and [0.0, 0.0] in p["front_values"]


def test_pareto_example31_and_single_point():
    assert run("pareto", "example31", grid=11)[1] == 0
    rep, code = run("pareto", "single_point")
    assert code == 0 and verdict(rep, "pareto")["feasible_count"] == 1


def test_report_schema():
    rep, _ = run("pareto", "square")
    assert set(rep) == {"command", "inputs", "verdicts", "tolerances", "seed", "timings"}
    assert rep["timings"] is None
    assert run("pareto", "square", timings=True)[0]["timings"]["seconds"] >= 0


def test_json_output(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["pareto", "square", "--json", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["command"] == "pareto" and data["inputs"]["problem"] == "square"
    capsys.readouterr()
    assert main(["pareto", "square", "--json", "-"]) == 0
    assert json.loads(capsys.readouterr().out) == data


def test_weak_flag_recorded():
    rep, _ = run("pareto", "uniform", weak=True)
    assert rep["inputs"]["weak"] is True


# -- determinism -------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["pareto", "example31", "--json", "-"],
    ["derivatives", "example21", "--json", "-"],
    ["check-kkt", "section4", "--json", "-"],
])
def test_subprocess_reports_byte_identical(argv):
    cmd = [sys.executable, "-m", "nmfp.cli", *argv]
    a = subprocess.run(cmd, capture_output=True, check=False)
    b = subprocess.run(cmd, capture_output=True, check=False)
    assert a.returncode == b.returncode == 0
    assert a.stdout == b.stdout and a.stdout.strip()


def test_seed_changes_are_recorded():
    a, _ = run("pareto", "square", seed=1)
    b, _ = run("pareto", "square", seed=2)
    assert a["seed"] == 1 and b["seed"] == 2
