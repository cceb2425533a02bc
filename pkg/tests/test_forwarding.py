import math

import numpy as np
import pytest

from kdvf.errors import (
    ConfigurationError,
    CriticalLengthError,
    NonContractionError,
    PreconditionError,
)
from kdvf.forwarding import (
    ControllerState,
    M_derivative,
    M_profile,
    admissible_gain,
    basin_probe,
    closed_loop_simulate,
    controller_step,
    linear_equilibrium,
    nonlinear_equilibrium,
    regulation_diagnostics,
    sylvester_residual,
)
from kdvf.grid import Field, boundary_slope, diff, make_grid
from kdvf.kernels import gain_p, solve_kernel_P, solve_kernel_Q
from kdvf.lyapunov import compute_constants
from kdvf.scenario import Scenario

L = 1.5
LAM = 1.0
N = 60


@pytest.fixture(scope="module")
def grid():
    return make_grid(L, N)


@pytest.fixture(scope="module")
def consts(grid):
    P, _ = solve_kernel_P(LAM, grid)
    Q, _ = solve_kernel_Q(LAM, grid)
    return compute_constants(LAM, Q, gain_p(P))


def test_M_profile_certificates(grid):
    """M solves M''' + M' = 0 with M(0)=M(L)=0 and M'(0)=-1."""
    M = M_profile(grid)
    assert abs(M.values[0]) < 1e-14
    assert abs(M.values[-1]) < 1e-14
    Mp = M_derivative(grid, 1)
    Mppp = M_derivative(grid, 3)
    assert abs(Mp.values[0] + 1.0) < 1e-14
    assert np.max(np.abs(Mppp.values + Mp.values)) < 1e-13
    # closed-form derivatives agree with numerical differentiation
    assert np.max(np.abs(diff(M, 1, acc=4).values - Mp.values)) < 1e-4


def test_M_profile_resonant_length():
    g = make_grid(2.0 * math.pi, 40)
    with pytest.raises(CriticalLengthError):
        M_profile(g)


def test_M_derivative_bad_order(grid):
    with pytest.raises(ConfigurationError):
        M_derivative(grid, 4)


def test_sylvester_identity_polynomials(grid):
    """The identity int M(w' + w''') = -k_eta - w'(0) holds for every
    admissible test profile; polynomials make the check quadrature-exact."""
    M = M_profile(grid)
    x = grid.x
    # both polynomials have exact zero slope at x = L
    for prof in (x**2 * (L - x) ** 2, x * (L - x) ** 2, np.zeros_like(x)):
        w = Field(grid, prof)
        res = sylvester_residual(M, w, 0.0)
        assert abs(res) < 1e-5 * (1.0 + L**2)


def test_sylvester_preconditions(grid):
    M = M_profile(grid)
    bad_ends = Field(grid, np.ones(grid.n + 1))
    with pytest.raises(PreconditionError):
        sylvester_residual(M, bad_ends, 0.0)
    w = Field(grid, grid.x * (L - grid.x))
    with pytest.raises(PreconditionError):
        sylvester_residual(M, w, 99.0)  # wrong slope at L


def test_admissible_gain_modes(grid, consts):
    M = M_profile(grid)
    k_lin = admissible_gain(consts, M, "linear")
    k_nl = admissible_gain(consts, M, "nonlinear")
    assert 0 < k_nl <= k_lin
    with pytest.raises(ConfigurationError):
        admissible_gain(consts, M, "adaptive")


def test_admissible_gain_stable_across_resolution():
    """The gain bound is a property of the continuum problem; it must agree
    within 10% between n=100 and n=200."""
    vals = []
    for n in (100, 200):
        g = make_grid(L, n)
        P, _ = solve_kernel_P(LAM, g)
        Q, _ = solve_kernel_Q(LAM, g)
        c = compute_constants(LAM, Q, gain_p(P))
        vals.append(admissible_gain(c, M_profile(g), "linear"))
    assert abs(vals[1] - vals[0]) < 0.1 * vals[0]


def test_controller_step_telescopes():
    ctrl = ControllerState(eta=0.0, k=0.4, r=0.05)
    dt = 1e-2
    ys = [0.1, 0.2, 0.0, -0.1]
    for y in ys:
        ctrl, u = controller_step(ctrl, y, dt)
        assert u == ctrl.k * ctrl.eta
    assert abs(ctrl.eta - dt * sum(y - 0.05 for y in ys)) < 1e-15


def test_controller_rejects_nonfinite():
    ctrl = ControllerState(eta=0.0, k=0.4, r=0.0)
    with pytest.raises(ConfigurationError):
        controller_step(ctrl, float("inf"), 1e-2)
    with pytest.raises(ConfigurationError):
        ControllerState(eta=0.0, k=-1.0, r=0.0)


def test_linear_equilibrium_properties(grid):
    d = Field.from_function(grid, lambda x: 0.05 * math.sin(math.pi * x / L))
    r = 0.05
    eq = linear_equilibrium(d, r, k=0.3, grid=grid)
    assert eq.residual < 1e-10
    assert abs(eq.w_inf.values[0]) < 1e-12
    assert abs(eq.w_inf.values[-1]) < 1e-12
    assert abs(boundary_slope(eq.w_inf, "left") - r) < 1e-10


def test_linear_equilibrium_scales_linearly(grid):
    d = Field.from_function(grid, lambda x: 0.05 * math.sin(math.pi * x / L))
    eq1 = linear_equilibrium(d, 0.05, k=0.3, grid=grid)
    eq2 = linear_equilibrium(d * 2.0, 0.10, k=0.3, grid=grid)
    assert np.max(np.abs(eq2.w_inf.values - 2.0 * eq1.w_inf.values)) < 1e-9
    assert abs(eq2.eta_inf - 2.0 * eq1.eta_inf) < 1e-9


def test_nonlinear_equilibrium_small_data(grid):
    d = Field.from_function(grid, lambda x: 0.02 * math.sin(math.pi * x / L))
    eq = nonlinear_equilibrium(d, 0.01, k=0.3, grid=grid)
    assert eq.residual < 1e-8
    assert eq.iterations <= 10
    assert eq.contraction_est is None or eq.contraction_est < 1.0


def test_nonlinear_equilibrium_large_data_fails(grid):
    d = Field.from_function(grid, lambda x: 1000.0 * math.sin(math.pi * x / L))
    with pytest.raises(NonContractionError):
        nonlinear_equilibrium(d, 0.01, k=0.3, grid=grid)


def _scenario(**over):
    base = dict(name="t", model="linear", L=L, n=N, dt=1e-3, T=2.0, lam=LAM,
                k="auto", r=0.05, d1_spec="zero", d2_spec="zero",
                w0_spec="zero", record_every=5)
    base.update(over)
    return Scenario(**base)


def test_closed_loop_requires_gain():
    with pytest.raises(ConfigurationError):
        closed_loop_simulate(_scenario(k=None))


def test_closed_loop_refuses_critical_length():
    with pytest.raises(CriticalLengthError):
        closed_loop_simulate(_scenario(L=2.0 * math.pi))


def test_closed_loop_drives_output_to_reference():
    ser = closed_loop_simulate(_scenario(T=20.0))
    e = ser.column("e")
    assert abs(e[-1]) < 1e-2 * max(abs(e[0]), 1.0)
    assert not ser.truncated
    assert "k" in ser.metadata and float(ser.metadata["k"]) > 0


def test_closed_loop_gain_above_bound_rejected():
    with pytest.raises(ConfigurationError):
        closed_loop_simulate(_scenario(k=50.0))


def test_closed_loop_gain_override_allowed():
    ser = closed_loop_simulate(_scenario(k=50.0, T=0.01, override_safety=True))
    assert len(ser.t) >= 2


def test_regulation_diagnostics_report():
    ser = closed_loop_simulate(_scenario(T=20.0), snapshots=True)
    rep = regulation_diagnostics(ser)
    assert rep.tail_sup_e < 1e-2
    assert rep.x_fit is not None and rep.x_fit.rate > 0


def test_basin_probe_linear_returns_cap(grid):
    sc = _scenario()
    direction = Field.from_function(grid, lambda x: math.sin(math.pi * x / L))
    assert basin_probe(sc, direction, max_scale=3.0) == 3.0


def test_basin_probe_zero_direction(grid):
    sc = _scenario()
    with pytest.raises(PreconditionError):
        basin_probe(sc, Field.zeros(grid), max_scale=1.0)
