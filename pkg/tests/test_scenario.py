import math

import numpy as np
import pytest

from kdvf.errors import ConfigurationError
from kdvf.grid import make_grid
from kdvf.scenario import Scenario, bundled_scenarios, load_scenario

L = 1.5

MINIMAL = """
[scenario]
name = demo
model = linear
L = 1.5
n = 80
dt = 1e-3
T = 2.0
lambda = 1.0
k = auto
r = 0.05
record_every = 5
checks = regulation

[inputs]
d1 = sine 0.05
d2 = zero
w0 = bump 0.1
"""


def _write(tmp_path, text, name="demo.scn"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_minimal(tmp_path):
    sc = load_scenario(_write(tmp_path, MINIMAL))
    assert sc.name == "demo"
    assert sc.closed_loop
    assert sc.k == "auto"
    assert sc.checks == ("regulation",)
    assert not sc.nonlinear


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "nope.scn")


def test_missing_required_key(tmp_path):
    text = MINIMAL.replace("dt = 1e-3\n", "")
    with pytest.raises(ConfigurationError):
        load_scenario(_write(tmp_path, text))


def test_bad_model_rejected(tmp_path):
    text = MINIMAL.replace("model = linear", "model = quantum")
    with pytest.raises(ConfigurationError):
        load_scenario(_write(tmp_path, text))


def test_bad_check_rejected(tmp_path):
    text = MINIMAL.replace("checks = regulation", "checks = vibes")
    with pytest.raises(ConfigurationError):
        load_scenario(_write(tmp_path, text))


def test_numeric_gain(tmp_path):
    text = MINIMAL.replace("k = auto", "k = 0.25")
    sc = load_scenario(_write(tmp_path, text))
    assert sc.k == 0.25


def test_open_loop_without_k(tmp_path):
    text = MINIMAL.replace("k = auto\n", "")
    sc = load_scenario(_write(tmp_path, text))
    assert not sc.closed_loop


def test_profiles_build(tmp_path):
    sc = load_scenario(_write(tmp_path, MINIMAL))
    g = sc.build_grid()
    w0 = sc.build_w0(g)
    # bump 0.1 peaks at amp in the middle and honors the Dirichlet ends
    assert abs(w0.values[0]) == 0.0
    assert abs(np.max(w0.values) - 0.1) < 1e-12
    inputs = sc.build_inputs(g)
    d1 = inputs.d1_values(0.0, g)
    assert abs(np.max(np.abs(d1)) - 0.05) < 1e-12
    assert inputs.d2(1.234) == 0.0


def test_norm_token_rescales(tmp_path):
    text = MINIMAL.replace("d1 = sine 0.05", "d1 = sine 0.05 norm")
    sc = load_scenario(_write(tmp_path, text))
    g = sc.build_grid()
    from kdvf.grid import Field
    f = Field(g, sc.build_inputs(g).d1_values(0.0, g))
    assert abs(f.norm_l2() - 0.05) < 1e-12


def test_d2_sine_descriptor(tmp_path):
    text = MINIMAL.replace("d2 = zero", "d2 = sine 0.3 2.0")
    sc = load_scenario(_write(tmp_path, text))
    d2 = sc.build_inputs(sc.build_grid()).d2
    assert abs(d2(0.5) - 0.3 * math.sin(1.0)) < 1e-14


def test_file_profile(tmp_path):
    g = make_grid(L, 80)
    vals = 0.02 * np.sin(np.pi * g.x / L)
    prof = tmp_path / "w0.txt"
    np.savetxt(prof, vals)
    text = MINIMAL.replace("w0 = bump 0.1", "w0 = file w0.txt")
    sc = load_scenario(_write(tmp_path, text))
    w0 = sc.build_w0(g)
    assert np.allclose(w0.values, vals)


def test_unknown_descriptor_rejected(tmp_path):
    text = MINIMAL.replace("w0 = bump 0.1", "w0 = wavelet 3")
    sc = load_scenario(_write(tmp_path, text))
    with pytest.raises(ConfigurationError):
        sc.build_w0(sc.build_grid())


def test_bundled_scenarios_load():
    found = bundled_scenarios()
    assert set(found) >= {
        "linear_regulation", "nonlinear_regulation", "open_loop_decay",
        "iss_disturbed", "zero", "critical_length", "blowup",
        "regulation_short",
    }
    for name, path in found.items():
        if name == "bad_config":
            with pytest.raises(ConfigurationError):
                load_scenario(path)
        else:
            assert load_scenario(path).name == name


def test_scenario_validation_direct():
    with pytest.raises(ConfigurationError):
        Scenario(name="x", model="linear", L=-1.0, n=10, dt=1e-3, T=1.0,
                 lam=1.0, k=None, r=0.0, d1_spec="zero", d2_spec="zero",
                 w0_spec="zero")
    with pytest.raises(ConfigurationError):
        Scenario(name="x", model="linear", L=1.5, n=10, dt=1e-3, T=1.0,
                 lam=1.0, k="half", r=0.0, d1_spec="zero", d2_spec="zero",
                 w0_spec="zero")
