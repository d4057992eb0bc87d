import csv
import json
import subprocess
import sys

import pytest

from extremal_lab import symbolic as sym
from extremal_lab.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out), out


def _without_time(text):
    return "\n".join(line for line in text.splitlines() if '"wall_time_ms"' not in line)


# --------------------------------------------------------------------------
# solve


def test_solve_quadratic(capsys, fx, tmp_path):
    out = tmp_path / "quad.csv"
    code, rep, _ = run(capsys, "solve", fx("quadratic.prob"), "--steps", 512, "--out", out)
    assert code == 0 and rep["schema_version"] == "1" and rep["command"] == "solve"
    r = rep["results"]
    assert r["converged"] and abs(r["cost"] - 1.0) <= 1e-9
    assert r["csv"]["rows"] == 513
    with open(out) as fh:
        assert len(list(csv.reader(fh))) == 514
    assert len(rep["inputs"]["problem"]["sha256"]) == 64
    assert isinstance(rep["wall_time_ms"], int)


def test_solve_without_boundary(capsys, fx):
    code, rep, _ = run(capsys, "solve", fx("xu2.prob"))
    assert code == 2 and "boundary incomplete" in rep["error"]["message"]


def test_solve_abnormal_branch_on_basic_problem(capsys, fx):
    code, rep, _ = run(capsys, "solve", fx("quadratic.prob"), "--psi0", "0")
    assert code == 3 and rep["error"]["type"] == "NontrivialityError"


def test_solve_not_converged_exits_3(capsys, fx):
    code, rep, _ = run(capsys, "solve", fx("multiplicative.prob"), "--max-iter", 1)
    assert code == 3 and rep["results"]["converged"] is False


def test_solve_bad_guess(capsys, fx):
    code, rep, _ = run(capsys, "solve", fx("quadratic.prob"), "--guess", "1,2")
    assert code == 2


def test_missing_problem_file(capsys, tmp_path):
    code, rep, _ = run(capsys, "solve", tmp_path / "nope.prob")
    assert code == 2 and "cannot read" in rep["error"]["message"]


def test_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.prob"
    bad.write_text('[problem]\nname = b\nt0 = 0\nt1 = 1\nstates = x1\ncontrols = u1\n'
                   '[lagrangian]\nL = "u1^"\n[dynamics]\nx1 = "u1"\n')
    code, rep, _ = run(capsys, "solve", bad)
    assert code == 2 and rep["error"]["type"] in ("ParseError", "InputError")


# --------------------------------------------------------------------------
# check and noether


@pytest.mark.parametrize("F,mode", [("psi1*x1", "symbolic-zero"), ("H*psi1*x1", "symbolic-zero")])
def test_check_multiplicative(capsys, fx, F, mode):
    code, rep, _ = run(capsys, "check", fx("multiplicative.prob"), "--f", F)
    assert code == 0 and rep["results"]["verdict"]["mode"] == mode


def test_check_violated(capsys, fx):
    code, rep, _ = run(capsys, "check", fx("quadratic.prob"), "--f", "x1")
    v = rep["results"]["verdict"]
    assert code == 0 and v["mode"] == "violated" and abs(v["witness"]["value"]) > 1e-6


def test_check_with_trajectory_reports_drift(capsys, fx, tmp_path):
    out = tmp_path / "q.csv"
    run(capsys, "solve", fx("quadratic.prob"), "--out", out)
    code, rep, _ = run(capsys, "check", fx("quadratic.prob"), "--f", "psi1*t + 2*psi0*x1", "--trajectory", out)
    assert code == 0 and rep["results"]["verdict"]["drift"]["max"] <= 1e-12
    assert "trajectory" in rep["inputs"]


def test_noether_quadratic(capsys, fx):
    code, rep, _ = run(capsys, "noether", fx("quadratic.prob"), fx("shift.fam"))
    r = rep["results"]
    assert code == 0 and r["invariant_to_first_order"] and r["extremal"] == "shooting"
    (k,) = r["parameters"]
    assert sym.parse(k["conserved_quantity"]) == sym.parse("psi1*t + 2*psi0*x1")
    assert r["drifts"]["s1"]["max"] <= 1e-12


def test_noether_homogeneous(capsys, fx):
    code, rep, _ = run(capsys, "noether", fx("cubicpoly.prob"), fx("scale.fam"))
    C = rep["results"]["parameters"][0]["conserved_quantity"]
    assert code == 0 and sym.parse(C) == sym.parse("psi1*x1 + psi2*x2")


def test_noether_invalid_family(capsys, fx):
    code, rep, _ = run(capsys, "noether", fx("quadratic.prob"), fx("bad.fam"))
    assert code == 2 and "identity-at-zero" in rep["error"]["message"]


# --------------------------------------------------------------------------
# transform


def test_transform_lift_and_project(capsys, fx, tmp_path):
    e = tmp_path / "q.csv"
    img = tmp_path / "img.csv"
    back = tmp_path / "back.csv"
    run(capsys, "solve", fx("quadratic.prob"), "--out", e)
    code, rep, _ = run(capsys, "transform", fx("quadratic.prob"), "--kind", "tau", "--lift", e, "--out", img,
                       "--v", "1 + 0.5*sin(6.283185307179586*tau)")
    assert code == 0 and rep["results"]["lift"]["H_img_max_abs"] <= 1e-7
    code, rep, _ = run(capsys, "transform", fx("quadratic.prob"), "--kind", "tau", "--project", img, "--out", back)
    assert code == 0 and abs(rep["results"]["project"]["cost_original"] - 1.0) <= 1e-7


def test_transform_gamkrelidze_image_file(capsys, fx, tmp_path):
    from extremal_lab.problem import load_problem

    path = tmp_path / "img.prob"
    code, rep, _ = run(capsys, "transform", fx("quadratic.prob"), "--kind", "gam", "--upsilon", "1/u1^2",
                       "--image", path)
    assert code == 0 and rep["results"]["image"]["L"] == "1"
    img = load_problem(path)
    assert img.states == ("t_state", "z1") and img.L.kind == "const"


def test_transform_zero_level_violation(capsys, fx, tmp_path):
    e = tmp_path / "q.csv"
    img = tmp_path / "img.csv"
    run(capsys, "solve", fx("quadratic.prob"), "--out", e)
    run(capsys, "transform", fx("quadratic.prob"), "--kind", "tau", "--lift", e, "--out", img)
    rows = list(csv.reader(open(img)))
    col = rows[0].index("psi1")
    for r in rows[1:]:
        r[col] = "0"
    with open(img, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    code, rep, _ = run(capsys, "transform", fx("quadratic.prob"), "--kind", "tau", "--project", img)
    assert code == 3 and "zero-level" in rep["error"]["message"]


def test_transform_flag_errors(capsys, fx):
    assert run(capsys, "transform", fx("quadratic.prob"), "--kind", "gam")[0] == 2
    assert run(capsys, "transform", fx("quadratic.prob"), "--kind", "tau", "--upsilon", "1")[0] == 2
    assert run(capsys, "transform", fx("quadratic.prob"), "--kind", "gam", "--upsilon", "-1")[0] == 2


# --------------------------------------------------------------------------
# regularity


def test_regularity_tonelli_morrey_quadratic(capsys, fx):
    code, rep, _ = run(capsys, "regularity", fx("quadratic.prob"), "--condition", "27",
                       "--box", "t:0,1;x1:-2,2;u1:-10,10", "--samples", 1000)
    r = rep["results"]["result"]
    assert code == 0 and (r["c"], r["k"]) == (0.0, 0.0) and r["box"] == "t:0,1;x1:-2,2;u1:-10,10"


def test_regularity_trend(capsys, fx):
    code, rep, _ = run(capsys, "regularity", fx("xu2.prob"), "--condition", "27", "--samples", 1000)
    assert code == 0 and rep["results"]["result"]["suspected_global_violation"] is True


def test_regularity_coercivity_and_params(capsys, fx):
    code, rep, _ = run(capsys, "regularity", fx("quadratic.prob"), "--condition", "coercivity", "--theta", "r^2",
                       "--samples", 1000)
    assert code == 0 and rep["results"]["result"]["passed"]
    assert run(capsys, "regularity", fx("quadratic.prob"), "--condition", "coercivity")[0] == 2
    assert run(capsys, "regularity", fx("quadratic.prob"), "--condition", "26", "--params", "1,1")[0] == 2
    code, rep, _ = run(capsys, "regularity", fx("quadratic.prob"), "--condition", "26", "--params", "1,1,1,0",
                       "--samples", 1000)
    assert code == 0 and rep["results"]["result"]["passed"]


def test_seed_environment_variable_changes_samples(capsys, fx, monkeypatch):
    args = ("regularity", fx("xu2.prob"), "--condition", "9", "--samples", 1000)
    _, a, _ = run(capsys, *args)
    monkeypatch.setenv("EXTREMAL_LAB_SEED", "7")
    _, b, _ = run(capsys, *args)
    assert a["results"]["result"]["witness"] != b["results"]["result"]["witness"]


# --------------------------------------------------------------------------
# reports


@pytest.mark.parametrize("argv", [
    ("solve", "quadratic.prob"),
    ("check", "multiplicative.prob", "--f", "H*psi1*x1"),
    ("noether", "quadhomog.prob", "quadhomog.fam"),
    ("transform", "multiplicative.prob", "--kind", "gam", "--upsilon", "1/u1^2"),
    ("regularity", "xu2.prob", "--condition", "27", "--samples", "1000"),
    ("regularity", "sine.prob", "--condition", "convexity", "--samples", "1000"),
])
def test_reports_deterministic(capsys, fx, tmp_path, argv):
    argv = [fx(a) if a.endswith((".prob", ".fam")) else a for a in argv]
    texts = []
    for k in range(2):
        report = tmp_path / f"r{k}.json"
        main(["--report", str(report), *argv])
        capsys.readouterr()
        texts.append(report.read_bytes())
    assert _without_time(texts[0].decode()) == _without_time(texts[1].decode())


def test_module_help():
    res = subprocess.run([sys.executable, "-m", "extremal_lab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("solve", "check", "noether", "transform", "regularity"):
        assert cmd in res.stdout


def test_subcommand_help_lists_flags():
    res = subprocess.run([sys.executable, "-m", "extremal_lab", "regularity", "--help"], capture_output=True, text=True)
    for flag in ("--condition", "--box", "--samples", "--theta", "--params"):
        assert flag in res.stdout
