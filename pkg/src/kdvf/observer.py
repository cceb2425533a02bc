"""Boundary-output observer and its error dynamics.

The observer copies the plant and injects the output mismatch through the
distributed gain p(x) = P_z(x,0):
    ŵ_t + ŵ_x + ŵ_xxx + p(x)[y - ŵ_x(t,0)] = 0,
with ŵ(0)=ŵ(L)=0 and ŵ_x(L)=0. The error w̃ = w - ŵ then obeys
    w̃_t + w̃_x + w̃_xxx - p(x) w̃_x(t,0) = d1,
which is simulated directly as the canonical ISS testbed. Exponential decay
rates are extracted by least-squares line fits on log-quantities.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, ConfigurationError, InsufficientDataError
from .grid import Field, boundary_slope, quad_weights
from .kdv import (
    BLOWUP_LIMIT,
    InputSignals,
    KdvParams,
    LinearStepOperator,
    build_linear_system,
)
from .kernels import Kernel2D, apply_Pi_bar_inv
from .series import TimeSeries

__all__ = [
    "ObserverState",
    "DecayFit",
    "observer_step",
    "simulate_error_system",
    "decay_fit",
]


@dataclass(frozen=True)
class ObserverState:
    t: float
    w_hat: Field


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r_squared: float
    window: tuple[float, float]


def observer_step(
    obs: ObserverState,
    y: float,
    params: KdvParams,
    p: Field,
    nonlinear: bool = False,
    op: LinearStepOperator | None = None,
) -> ObserverState:
    """One IMEX step of the observer driven by the measured output y.

    The injection term p(x)(y - ŵ_x(0)) is explicit, so the implicit matrix
    is the same as the plant's and can be shared through `op`.
    """
    if not math.isfinite(y):
        raise ConfigurationError(f"measured output must be finite, got {y}")
    grid = params.grid
    if p.grid != grid:
        raise ConfigurationError("gain and parameters use different grids")
    if op is None:
        op = build_linear_system(params)
    dt, theta = params.dt, params.theta
    w = obs.w_hat.values
    inj = -p.values * (y - boundary_slope(obs.w_hat, "left"))
    rhs = w + dt * ((1.0 - theta) * (op.A @ w) + inj)
    if nonlinear:
        guard = grid.h / (1.0 + 2.0 * float(np.max(np.abs(w))))
        if dt > guard:
            raise BlowUpError(obs.t, "convective step-size guard violated "
                              f"(dt={dt:g} > {guard:g})")
        rhs -= dt * (w * (op.D1 @ w))
    rhs[0] = 0.0
    rhs[-1] = 0.0
    w_new = op.solve(rhs)
    w_new[0] = 0.0
    w_new[-1] = 0.0
    if not np.all(np.isfinite(w_new)) or np.max(np.abs(w_new)) > BLOWUP_LIMIT:
        raise BlowUpError(obs.t + dt)
    return ObserverState(obs.t + dt, Field(grid, w_new))


def simulate_error_system(
    w0_err: Field,
    params: KdvParams,
    p: Field,
    inputs: InputSignals,
    T: float,
    Q: Kernel2D | None = None,
    record_every: int = 1,
    snapshots: bool = False,
    on_blowup: str = "flag",
) -> TimeSeries:
    """Integrate the observer-error PDE to time T.

    Records (t, norm, E, U, y=w̃_x(0), wall_clock); the strict functional
    U = ‖Π̄⁻¹w̃‖² needs the inverse kernel Q and is recorded as E when Q is
    omitted (identity transform).
    """
    if T < 0:
        raise ConfigurationError("T must be nonnegative")
    grid = params.grid
    if p.grid != grid or w0_err.grid != grid:
        raise ConfigurationError("gain, state and parameters use different grids")
    op = build_linear_system(params)
    qw = quad_weights(grid)
    dt, theta = params.dt, params.theta
    state = w0_err.values.copy()
    t = 0.0
    rec: dict[str, list[float]] = {k: [] for k in ("t", "norm", "E", "U", "y", "wall_clock")}
    snaps: list[np.ndarray] | None = [] if snapshots else None
    start = time.perf_counter()

    def u_of(w: np.ndarray) -> float:
        if Q is None:
            return float(qw @ w**2)
        g = apply_Pi_bar_inv(Q, Field(grid, w)).values
        return float(qw @ g**2)

    def record(t_now: float, w: np.ndarray):
        rec["t"].append(t_now)
        e = float(qw @ w**2)
        rec["norm"].append(math.sqrt(max(e, 0.0)))
        rec["E"].append(e)
        rec["U"].append(u_of(w))
        rec["y"].append(boundary_slope(Field(grid, w), "left"))
        rec["wall_clock"].append(time.perf_counter() - start)
        if snaps is not None:
            snaps.append(w.copy())

    record(0.0, state)
    nsteps = int(round(T / dt))
    truncated = False
    for k in range(nsteps):
        inj = p.values * boundary_slope(Field(grid, state), "left")
        f_old = inputs.d1_values(t, grid) + op.g * inputs.d2(t)
        f_new = inputs.d1_values(t + dt, grid) + op.g * inputs.d2(t + dt)
        rhs = state + dt * ((1.0 - theta) * (op.A @ state + f_old)
                            + theta * f_new + inj)
        if params.nonlinear:
            rhs -= dt * (state * (op.D1 @ state))
        rhs[0] = 0.0
        rhs[-1] = 0.0
        new = op.solve(rhs)
        new[0] = 0.0
        new[-1] = 0.0
        t += dt
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > BLOWUP_LIMIT:
            if on_blowup == "raise":
                raise BlowUpError(t)
            truncated = True
            break
        state = new
        if (k + 1) % record_every == 0 or k == nsteps - 1:
            record(t, state)
    cols = {k: np.asarray(v) for k, v in rec.items()}
    return TimeSeries(columns=cols, snapshots=snaps, grid=grid,
                      metadata={"L": repr(grid.L), "n": str(grid.n),
                                "dt": repr(dt), "theta": repr(theta),
                                "model": "error"},
                      truncated=truncated)


def decay_fit(series: TimeSeries, quantity: str, window: tuple[float, float]) -> DecayFit:
    """Fit q(t) ≈ C e^{-rate·t} on the window by least squares on log q.

    If the quantity hits zero or below inside the window, the window shrinks
    to the last strictly positive prefix.
    """
    t = series.t
    q = series.column(quantity)
    t0, t1 = window
    if t1 <= t0:
        raise ConfigurationError(f"empty fit window {window}")
    mask = (t >= t0) & (t <= t1)
    idx = np.nonzero(mask)[0]
    # shrink to the positive prefix
    keep = []
    for i in idx:
        if q[i] > 0.0:
            keep.append(i)
        else:
            break
    if len(keep) < 10:
        raise InsufficientDataError(
            f"decay fit needs at least 10 positive samples in the window, got {len(keep)}"
        )
    ts = t[keep]
    ys = np.log(q[keep])
    A = np.vstack([ts, np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((ys - fit) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(rate=float(-coef[0]), r_squared=min(max(r2, 0.0), 1.0),
                    window=(float(ts[0]), float(ts[-1])))
