import json

import pytest

from mlmc_ocp.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from mlmc_ocp.config import PRESET_DIR


def read(path):
    return json.loads(path.read_text())


def test_pathwise_zero_target(tmp_path):
    out = tmp_path / "o"
    assert main(["pathwise", "--out", str(out), "--set", "ocp.z=0", "--set", "pathwise.level=3"]) == EXIT_OK
    s = read(out / "summary.json")
    assert s["cost_value"] == 0.0 and s["u_norm"] == 0.0
    m = read(out / "manifest.json")
    assert m["seed"] == 2024 and m["config"]["ocp.z"] == "0" and "timestamp" in m
    assert (out / "pathwise.csv").read_text().startswith("x1,x2,u,y,p\n")
    assert not [p for p in out.iterdir() if p.name.startswith(".partial")]


def test_allocate_table(tmp_path):
    out = tmp_path / "a"
    assert main(["run", "--config", str(PRESET_DIR / "table1.cfg"), "--out", str(out)]) == EXIT_OK
    s = read(out / "summary.json")
    assert s["M"] == [34878077, 4565951, 597737, 78251, 10244, 1342]
    assert all(abs(r - 7.6387) < 1e-3 for r in s["ratios"])
    assert s["constraint"] <= s["budget"]
    lines = (out / "allocation.csv").read_text().splitlines()
    assert lines[0] == "level,h,M,M_continuous,cost_per_sample,ratio" and len(lines) == 7


def test_convergence_outputs(tmp_path):
    out = tmp_path / "c"
    args = ["convergence", "--out", str(out), "--seed", "3"]
    args += ["--set", "convergence.levels=1..3", "--set", "convergence.reference=4", "--set", "convergence.M=3"]
    assert main(args) == EXIT_OK
    header = (out / "convergence.csv").read_text().splitlines()[0]
    assert header == "level,h,N,err_l2,cost_mean_s"
    fit = (out / "fit.csv").read_text().splitlines()
    assert fit[0] == "quantity,slope,intercept,r2" and fit[1].startswith("err_l2_vs_h,")
    assert (out / "fit_residuals.csv").read_text().startswith("quantity,x,y,fitted,residual\n")
    assert read(out / "summary.json")["seed"] == 3


def test_rates_outputs(tmp_path):
    out = tmp_path / "r"
    args = ["rates", "--out", str(out), "--set", "rates.levels=1..3", "--set", "rates.reference=4"]
    args += ["--set", "rates.pilot_M=2", "--set", "cost.mode=work"]
    assert main(args) == EXIT_OK
    rows = (out / "rates.csv").read_text().splitlines()
    assert rows[0] == "quantity,slope,intercept,r2"
    assert [r.split(",")[0] for r in rows[1:]] == ["err_l2_vs_h", "cost_vs_h", "cost_vs_N"]


def test_mlmc_is_byte_reproducible_in_work_mode(tmp_path):
    args = ["mlmc", "--config", str(PRESET_DIR / "mlmc_desk.cfg"), "--set", "cost.mode=work"]
    args += ["--set", "mlmc.L=1", "--set", "mlmc.costs=work", "--set", "mlmc.pilot_M=2"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b), "--threads", "2"]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert "mlmc.csv" in names and "summary.json" in names
    for name in names:
        if name != "manifest.json":
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "mlmc.csv").read_text().splitlines()[0] == "level,h,M,corr_mean_norm,corr_var,cost_s"


def test_mc_study(tmp_path):
    out = tmp_path / "m"
    args = ["mc", "--out", str(out), "--set", "mc.level=1", "--set", "mc.M=8"]
    args += ["--set", "mc.study_M=2,4,8", "--set", "mc.replications=3", "--set", "mc.reference_M=32"]
    assert main(args) == EXIT_OK
    assert (out / "mc_study.csv").read_text().startswith("M,rms_error\n")
    assert read(out / "summary.json")["bound_violation"] == 0.0


def test_config_error_exit_code(tmp_path, capsys):
    out = tmp_path / "bad"
    assert main(["mc", "--out", str(out), "--set", "mc.M=0"]) == EXIT_CONFIG
    assert list(out.iterdir()) == []
    assert main(["pathwise", "--out", str(out), "--set", "nope=1"]) == EXIT_CONFIG
    assert main(["run", "--out", str(out)]) == EXIT_CONFIG
    assert main(["pathwise", "--set", "novalue"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_solver_failure_exit_code_removes_outputs(tmp_path):
    out = tmp_path / "fail"
    args = ["mc", "--out", str(out), "--set", "ocp.u_a=-0.5", "--set", "ocp.u_b=0.5"]
    args += ["--set", "ocp.newton_maxit=1", "--set", "mc.level=3", "--set", "mc.M=4"]
    assert main(args) == EXIT_SOLVER
    assert list(out.iterdir()) == []


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for name in ("pathwise", "convergence", "mc", "mlmc", "allocate", "rates", "run"):
        assert name in text
