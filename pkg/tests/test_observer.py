import math

import numpy as np
import pytest

from kdvf.errors import ConfigurationError, InsufficientDataError
from kdvf.grid import Field, make_grid
from kdvf.kdv import InputSignals, KdvParams, build_linear_system, simulate, step, KdvState
from kdvf.kernels import gain_p, solve_kernel_P
from kdvf.observer import ObserverState, decay_fit, observer_step, simulate_error_system
from kdvf.series import TimeSeries

L = 1.5
LAM = 1.0
N = 60


@pytest.fixture(scope="module")
def grid():
    return make_grid(L, N)


@pytest.fixture(scope="module")
def gain(grid):
    P, _ = solve_kernel_P(LAM, grid)
    return gain_p(P)


def test_zero_error_is_invariant(grid, gain):
    """With w_hat = w the injection vanishes and both copies stay equal."""
    params = KdvParams(grid, 1e-3)
    op = build_linear_system(params)
    w0 = Field.from_function(grid, lambda x: 0.1 * math.sin(math.pi * x / L) ** 2)
    st = KdvState(0.0, w0)
    obs = ObserverState(0.0, w0)
    for _ in range(20):
        from kdvf.grid import boundary_slope
        y = boundary_slope(st.w, "left")
        st = step(st, params, InputSignals(), op)
        obs = observer_step(obs, y, params, gain, op=op)
        # the observer sees y from the pre-step plant, matching its own
        # explicit injection time level
    assert np.max(np.abs(st.w.values - obs.w_hat.values)) < 1e-9


def test_observer_rejects_nonfinite_output(grid, gain):
    params = KdvParams(grid, 1e-3)
    obs = ObserverState(0.0, Field.zeros(grid))
    with pytest.raises(ConfigurationError):
        observer_step(obs, float("nan"), params, gain)


def test_error_system_decays(grid, gain):
    params = KdvParams(grid, 1e-3)
    w0 = Field.from_function(grid, lambda x: 0.1 * math.sin(math.pi * x / L) ** 2)
    ser = simulate_error_system(w0, params, gain, InputSignals(), 0.5)
    E = ser.column("E")
    assert E[-1] < 1e-3 * E[0]


def test_error_system_iss_bounded(grid, gain):
    """Persistent disturbance keeps the error bounded, not growing."""
    params = KdvParams(grid, 1e-3)
    amp = Field.from_function(grid, lambda x: 0.05 * math.sin(math.pi * x / L))

    def d1(t):
        return amp.values * math.sin(2.0 * t)

    ser = simulate_error_system(Field.zeros(grid), params, gain,
                                InputSignals(d1=d1), 5.0)
    E = ser.column("E")
    assert np.max(E) < 1.0
    assert np.max(E[len(E) // 2:]) <= 2.0 * np.max(E[: len(E) // 2]) + 1e-12


def test_decay_fit_exact_exponential():
    t = np.linspace(0.0, 3.0, 200)
    ser = TimeSeries(columns={"t": t, "q": 2.7 * np.exp(-2.0 * t)})
    fit = decay_fit(ser, "q", (0.0, 3.0))
    assert abs(fit.rate - 2.0) < 1e-6
    assert fit.r_squared > 1.0 - 1e-12


def test_decay_fit_perturbed_exponential():
    rng = np.random.default_rng(3)
    t = np.linspace(0.0, 3.0, 400)
    q = np.exp(-2.0 * t) * np.exp(0.02 * rng.standard_normal(t.size))
    ser = TimeSeries(columns={"t": t, "q": q})
    fit = decay_fit(ser, "q", (0.0, 3.0))
    assert abs(fit.rate - 2.0) < 0.05
    assert fit.r_squared > 0.99


def test_decay_fit_insufficient_data():
    t = np.linspace(0.0, 1.0, 50)
    q = np.exp(-t)
    q[5:] = 0.0  # positive prefix too short
    ser = TimeSeries(columns={"t": t, "q": q})
    with pytest.raises(InsufficientDataError):
        decay_fit(ser, "q", (0.0, 1.0))


def test_decay_fit_empty_window():
    t = np.linspace(0.0, 1.0, 50)
    ser = TimeSeries(columns={"t": t, "q": np.exp(-t)})
    with pytest.raises(ConfigurationError):
        decay_fit(ser, "q", (1.0, 0.5))


def test_error_system_matches_plant_minus_observer(grid, gain):
    """Simulating the error PDE directly agrees with subtracting the observer
    from the plant, step for step."""
    params = KdvParams(grid, 1e-3)
    op = build_linear_system(params)
    w0 = Field.from_function(grid, lambda x: 0.1 * math.sin(math.pi * x / L) ** 2)
    nsteps = 50

    # plant + observer started from zero
    from kdvf.grid import boundary_slope
    st = KdvState(0.0, w0)
    obs = ObserverState(0.0, Field.zeros(grid))
    for _ in range(nsteps):
        y = boundary_slope(st.w, "left")
        st = step(st, params, InputSignals(), op)
        obs = observer_step(obs, y, params, gain, op=op)
    direct = st.w.values - obs.w_hat.values

    ser = simulate_error_system(w0, params, gain, InputSignals(),
                                nsteps * params.dt, record_every=nsteps,
                                snapshots=True)
    assert np.max(np.abs(ser.snapshots[-1] - direct)) < 1e-10
