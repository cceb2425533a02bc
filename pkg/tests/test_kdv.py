import math

import numpy as np
import pytest

from kdvf.errors import BlowUpError, ConfigurationError
from kdvf.grid import Field, boundary_slope, make_grid
from kdvf.kdv import (
    InputSignals,
    KdvParams,
    KdvState,
    build_linear_system,
    simulate,
    step,
)

L = 1.5


def test_params_validation():
    g = make_grid(L, 50)
    with pytest.raises(ConfigurationError):
        KdvParams(g, dt=-1.0)
    with pytest.raises(ConfigurationError):
        KdvParams(g, dt=1e-3, theta=0.2)


def test_spatial_operator_matches_analytic():
    """A applied to a smooth profile approximates -w' - w''' in the
    interior away from the one-sided closures."""
    g = make_grid(L, 200)
    op = build_linear_system(KdvParams(g, 1e-3))
    w = np.sin(2 * np.pi * g.x / L)
    exact = -(2 * np.pi / L) * np.cos(2 * np.pi * g.x / L) \
        + (2 * np.pi / L) ** 3 * np.cos(2 * np.pi * g.x / L)
    got = op.A @ w
    sl = slice(3, g.n - 3)
    # error constant scales with the fifth derivative (2*pi/L)^5
    assert np.max(np.abs(got[sl] - exact[sl])) < 0.5 * (2 * np.pi / L) ** 5 * g.h**2


def test_factorization_round_trip():
    g = make_grid(L, 100)
    params = KdvParams(g, 1e-3)
    op = build_linear_system(params)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(g.n + 1)
    w[0] = w[-1] = 0.0
    rhs = w - params.dt * (op.A @ w)
    rhs[0] = rhs[-1] = 0.0
    back = op.solve(rhs)
    assert np.max(np.abs(back - w)) < 1e-10


def test_manufactured_solution_convergence():
    """Forced problem with known solution w = e^{-t} sin(pi x / L)."""
    om = math.pi / L

    def exact(t, x):
        return math.exp(-t) * math.sin(om * x)

    def d1_at(t, g):
        x = g.x
        return (-np.exp(-t) * np.sin(om * x)
                + np.exp(-t) * om * np.cos(om * x)
                - np.exp(-t) * om**3 * np.cos(om * x))

    errs = []
    for n in (60, 120):
        g = make_grid(L, n)
        dt = 0.2 * g.h**2
        params = KdvParams(g, dt, theta=0.5)
        inputs = InputSignals(d1=lambda t, g=g: d1_at(t, g),
                              d2=lambda t: math.exp(-t) * om * math.cos(om * L))
        w0 = Field.from_function(g, lambda x: exact(0.0, x))
        ser = simulate(w0, params, inputs, 0.2, record_every=10**9, snapshots=True)
        wT = ser.snapshots[-1]
        ref = np.array([exact(ser.t[-1], x) for x in g.x])
        errs.append(np.max(np.abs(wT - ref)))
    assert errs[0] < 1e-3
    assert errs[1] < errs[0] / 2.5


def test_energy_dissipation_unforced():
    g = make_grid(L, 150)
    w0 = Field.from_function(g, lambda x: 0.1 * math.sin(math.pi * x / L) ** 2)
    ser = simulate(w0, KdvParams(g, 1e-4), InputSignals(), 0.2)
    E = ser.column("E")
    assert np.all(np.diff(E) <= 1e-14)


def test_energy_law_matches_output():
    g = make_grid(L, 200)
    w0 = Field.from_function(g, lambda x: 0.05 * math.sin(math.pi * x / L) ** 2)
    ser = simulate(w0, KdvParams(g, 1e-4), InputSignals(), 0.2)
    t, E, y = ser.t, ser.column("E"), ser.column("y")
    res = np.abs(np.diff(E) / np.diff(t) + y[:-1] ** 2)
    assert np.max(res) < 1e-3 * max(E[0], 1.0)


def test_nonlinear_guard_raises():
    g = make_grid(L, 100)
    params = KdvParams(g, dt=0.05, nonlinear=True)
    op = build_linear_system(params)
    w0 = Field.from_function(g, lambda x: math.sin(math.pi * x / L))
    with pytest.raises(BlowUpError):
        step(KdvState(0.0, w0), params, InputSignals(), op)


def test_blowup_flagged_in_simulate():
    g = make_grid(L, 100)
    params = KdvParams(g, dt=0.05, nonlinear=True)
    w0 = Field.from_function(g, lambda x: math.sin(math.pi * x / L))
    ser = simulate(w0, params, InputSignals(), 1.0)
    assert ser.truncated


def test_dirichlet_rows_exact():
    g = make_grid(L, 100)
    params = KdvParams(g, 1e-3)
    op = build_linear_system(params)
    w0 = Field.from_function(g, lambda x: 0.1 * math.sin(math.pi * x / L))
    st = KdvState(0.0, w0)
    for _ in range(5):
        st = step(st, params, InputSignals(d2=lambda t: 0.3), op)
    assert st.w.values[0] == 0.0
    assert st.w.values[-1] == 0.0


def test_neumann_input_attained():
    """Constant boundary slope input drives w_x(L) toward d2."""
    g = make_grid(L, 150)
    params = KdvParams(g, 1e-3)
    ser = simulate(Field.zeros(g), params, InputSignals(d2=lambda t: 0.1), 2.0)
    assert abs(ser.column("wxL")[-1] - 0.1) < 5e-3
