import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from quartic_helmholtz.cli import OUT_ENV, SCHEMA, main
from quartic_helmholtz.kernels import ProblemParams, quartic_green
from quartic_helmholtz.spectral import read_field


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_selfcheck_passes(capsys):
    code, out, _ = run(capsys, "selfcheck")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and rep["schema"] == SCHEMA
    assert all(c["passed"] for c in rep["checks"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "quartic_helmholtz", "selfcheck"], capture_output=True, text=True)
    assert proc.returncode == 0


def test_boundary_parameters_rejected(capsys, tmp_path):
    code, out, err = run(capsys, "solve", "--alpha", "1", "--beta", "-2", "--N", "2", "--p", "7",
                         "--grid", "32,8", "--out", str(tmp_path / "s"))
    assert code == 1
    rep = json.loads(out)
    assert rep["error"] == "ParamsOutsideA1" and "assumption A1" in rep["message"]
    assert "ParamsOutsideA1" in err


@pytest.mark.parametrize("argv", [
    ["solve", "--alpha", "-1"],
    ["kernel-table", "--alpha", "-1", "--beta", "0", "--N", "3", "--rmax", "x"],
    ["solve", "--alpha", "-1", "--beta", "0", "--N", "2", "--p", "7", "--grid", "30,8", "--out", "s"],
    ["no-such-command"],
])
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_kernel_table_matches_closed_form(capsys, tmp_path):
    path = tmp_path / "g.csv"
    code, _, _ = run(capsys, "kernel-table", "--alpha", "-1", "--beta", "0", "--N", "3", "--rmax", "50",
                     "--out", str(path))
    assert code == 0
    rows = list(csv.DictReader(path.open()))
    r = np.array([float(x["r"]) for x in rows])
    g = np.array([float(x["Re"]) + 1j * float(x["Im"]) for x in rows])
    exact = (np.exp(1j * r) - np.exp(-r)) / (8 * np.pi * r)
    assert r[-1] == 50.0
    assert np.max(np.abs(g / exact - 1)) < 1e-10
    rep = json.loads(path.with_suffix(".json").read_text())
    man = json.loads((tmp_path / "g.manifest.json").read_text())
    assert rep["manifest"].endswith("g.manifest.json")
    assert str(path) in man["outputs"]


def test_solve_writes_artifacts_and_replays(capsys, tmp_path):
    prefix = str(tmp_path / "s")
    argv = ["solve", "--alpha", "-1", "--beta", "0", "--N", "2", "--p", "7", "--grid", "32,8", "--out", prefix]
    code, _, _ = run(capsys, *argv)
    assert code == 0
    rep = json.loads((tmp_path / "s.report.json").read_text())
    assert rep["converged"] and rep["J"] > 0
    for key in ("grad_norm", "identity_defect", "consistency_defect", "pde_residual"):
        assert key in rep
    for name in ("s.v.bin", "s.u.bin", "s.trace.csv"):
        assert (tmp_path / name).exists()
    v = read_field(tmp_path / "s.v.bin")
    assert v.grid.points == 32
    man = json.loads((tmp_path / "s.report.manifest.json").read_text())
    assert man["grid"]["M"] == 32 and "shell_clearance" in man["grid"]
    digests = dict(man["outputs"])
    # replay the recorded command line: bitwise identical outputs
    assert main(man["command"][1:]) == 0
    capsys.readouterr()
    again = json.loads((tmp_path / "s.report.manifest.json").read_text())["outputs"]
    for path, digest in digests.items():
        if not path.endswith("report.json"):
            assert again[path] == digest


def test_farfield_and_radiation_from_solution(capsys, tmp_path):
    prefix = str(tmp_path / "s")
    base = ["--alpha", "-1", "--beta", "0", "--N", "2", "--p", "7"]
    assert main(["solve", *base, "--grid", "32,8", "--out", prefix]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "farfield", *base, "--solution", prefix + ".v.bin", "--radii", "3,5,7")
    assert code == 0 and len(json.loads(out)["error"]) == 3
    code, out, _ = run(capsys, "radiation-check", *base, "--solution", prefix + ".v.bin", "--radii", "3,5,7")
    assert code == 0


def test_config_file_and_flag_override(capsys, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# kernel table\nalpha = -1\nbeta = 0\nN = 3\nrmax = 10\ncount = 5\n")
    code, out, _ = run(capsys, "--config", str(conf), "kernel-table", "--count", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4 and lines[0] == "r,Re,Im"
    conf.write_text("alpha = -1\nbogus = 1\n")
    code, _, _ = run(capsys, "--config", str(conf), "kernel-table")
    assert code == 2


def test_output_directory_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    code, _, _ = run(capsys, "kernel-table", "--alpha", "-1", "--beta", "0", "--N", "3", "--rmax", "5",
                     "--count", "4", "--out", "tab.csv")
    assert code == 0 and (tmp_path / "tab.csv").exists()


def test_tail_check_and_radial_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "tail-check", "--alpha", "-1", "--beta", "0", "--N", "3", "--r", "4")
    assert code == 0 and json.loads(out)["verdict"] == "convergent"
    code, _, _ = run(capsys, "radial-shoot", "--alpha", "4", "--beta", "-5", "--N", "3", "--p", "5",
                     "--u0", "0.001", "--u2", "0", "--rmax", "50", "--out", str(tmp_path / "t.csv"))
    assert code == 0 and (tmp_path / "t.csv").exists()
    code, out, _ = run(capsys, "radial-sweep", "--alpha", "4", "--beta", "-5", "--N", "3", "--p", "5",
                       "--grid-spec", "box:1:3", "--rmax", "30", "--out", str(tmp_path / "m.csv"))
    assert code == 0 and json.loads(out)["count"] == 3


def test_kernel_table_uses_kernels_module(capsys):
    code, out, _ = run(capsys, "kernel-table", "--alpha", "4", "--beta", "-5", "--N", "2", "--rmax", "3",
                       "--count", "3")
    rows = list(csv.reader(out.strip().splitlines()))[1:]
    params = ProblemParams(4.0, -5.0, 2)
    for r, re_, im in rows:
        g = complex(quartic_green(params, float(r)))
        assert float(re_) == g.real and float(im) == g.imag
