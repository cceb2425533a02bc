import numpy as np
import pytest

from kdvf.cli import main
from kdvf.scenario import bundled_scenarios
from kdvf.series import TimeSeries

SCN = bundled_scenarios()

OPEN_LOOP_OK = """
[scenario]
name = quick_open
model = linear
L = 1.5
n = 120
dt = 1e-4
T = 0.05
lambda = 1.0
record_every = 1
checks = energy-law boundedness

[inputs]
d1 = zero
d2 = zero
w0 = bump 0.05
"""

CLOSED_LOOP_SHORT = """
[scenario]
name = quick_closed
model = linear
L = 1.5
n = 60
dt = 1e-3
T = 1.0
lambda = 1.0
k = auto
r = 0.05
record_every = 5
checks = regulation

[inputs]
d1 = zero
d2 = zero
w0 = zero
"""


def _scn(tmp_path, text, name="s.scn"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_open_loop_ok(tmp_path, capsys):
    code = main(["run", _scn(tmp_path, OPEN_LOOP_OK),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert "[pass] energy-law" in out
    assert "[pass] boundedness" in out
    csv = tmp_path / "out" / "quick_open.csv"
    assert csv.is_file()
    ser = TimeSeries.from_csv(csv)
    assert "wall_clock" in ser.columns
    assert (tmp_path / "out" / "quick_open.report.txt").is_file()


def test_run_closed_loop_short_fails_checks(tmp_path):
    """One second is not enough to regulate; the checks fail honestly."""
    code = main(["run", _scn(tmp_path, CLOSED_LOOP_SHORT),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 2


def test_run_critical_length_refused(tmp_path):
    code = main(["run", str(SCN["critical_length"]),
                 "--out-dir", str(tmp_path)])
    assert code == 5


def test_run_blowup_exits_3(tmp_path):
    code = main(["run", str(SCN["blowup"]), "--out-dir", str(tmp_path)])
    assert code == 3
    ser = TimeSeries.from_csv(tmp_path / "blowup.csv")
    assert ser.truncated


def test_run_bad_config_exits_4(tmp_path):
    code = main(["run", str(SCN["bad_config"]), "--out-dir", str(tmp_path)])
    assert code == 4


def test_run_missing_file_exits_4(tmp_path):
    assert main(["run", str(tmp_path / "nope.scn")]) == 4


def test_bad_arguments_exit_4():
    assert main(["frobnicate"]) == 4
    assert main(["kernel", "--n", "10"]) == 4


def test_kernel_command(tmp_path, capsys):
    code = main(["kernel", "--lambda", "1.0", "--length", "1.5",
                 "--n", "30", "--out", str(tmp_path)])
    assert code == 0
    for name in ("P", "Q", "G"):
        assert (tmp_path / f"kernel_{name}.csv").is_file()
    assert "interior residual" in capsys.readouterr().out


def test_equilibrium_command_linear(tmp_path, capsys):
    out = tmp_path / "w.txt"
    code = main(["equilibrium", "--model", "linear", "--length", "1.5",
                 "--n", "80", "--k", "0.3", "--r", "0.05",
                 "--d-amp", "0.02", "--out", str(out)])
    assert code == 0
    txt = capsys.readouterr().out
    assert "eta_inf" in txt
    assert out.is_file()
    w = np.loadtxt(out)
    assert w.shape == (81,)
    assert abs(w[0]) < 1e-12 and abs(w[-1]) < 1e-12


def test_equilibrium_command_nonlinear(capsys):
    code = main(["equilibrium", "--model", "nonlinear", "--length", "1.5",
                 "--n", "80", "--k", "0.3", "--r", "0.01", "--d-amp", "0.01"])
    assert code == 0
    assert "iterations" in capsys.readouterr().out


def test_equilibrium_large_data_exits_2():
    code = main(["equilibrium", "--model", "nonlinear", "--length", "1.5",
                 "--n", "80", "--k", "0.3", "--r", "0.01", "--d-amp", "1000"])
    assert code == 2


def test_verify_single_suite(capsys):
    code = main(["verify", "m-profile"])
    assert code == 0
    out = capsys.readouterr().out
    assert "suite m-profile: pass" in out


def test_verify_unknown_suite():
    assert main(["verify", "nonesuch"]) == 4
