"""Forwarding-based integral regulation of the boundary output.

The regulator integrates the tracking error, η̇ = y - r, and actuates the
right-end slope with u = kη. Its analysis rests on the profile M solving
M'''+M'=0, M(0)=M(L)=0, M'(0)=-1, available in closed form as
    M(x) = -2 sin(x/2) sin((L-x)/2) / sin(L/2),
the Sylvester-type identity ∫M(w'+w''') = -k_eta - w'(0) for admissible w,
and the gain bounds built from the Lyapunov constant pack. Equilibria of
the closed loop solve w'+w''' (+ww') = d with w(0)=w(L)=0, w'(0)=r; the
nonlinear one is found by Picard iteration on the linearized solve.

The discrete equilibrium solver reuses the time stepper's own spatial
operator, so the computed (w_inf, eta_inf) is an exact fixed point of the
discrete closed loop and trajectories converge to it rather than to an
O(h^2) neighbour.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    BlowUpError,
    ConfigurationError,
    CriticalLengthError,
    InsufficientDataError,
    NonContractionError,
    NumericalSetupError,
    PreconditionError,
)
from .grid import Field, Grid, boundary_slope, diff, is_critical_length, quad_weights
from .kdv import BLOWUP_LIMIT, KdvParams, build_linear_system
from .kernels import cached_solve, gain_p
from .lyapunov import LyapunovConstants, compute_constants, functional_U, functional_V, functional_V_full
from .observer import DecayFit, decay_fit
from .scenario import Scenario
from .series import TimeSeries, format_float

__all__ = [
    "ControllerState",
    "EquilibriumResult",
    "RegulationReport",
    "M_profile",
    "M_derivative",
    "sylvester_residual",
    "admissible_gain",
    "controller_step",
    "linear_equilibrium",
    "nonlinear_equilibrium",
    "closed_loop_simulate",
    "regulation_diagnostics",
    "basin_probe",
]


@dataclass(frozen=True)
class ControllerState:
    eta: float
    k: float
    r: float

    def __post_init__(self):
        if not (self.k > 0):
            raise ConfigurationError(f"integral gain must be positive, got {self.k}")


@dataclass(frozen=True)
class EquilibriumResult:
    w_inf: Field
    eta_inf: float
    residual: float
    iterations: int
    contraction_est: float | None = None


@dataclass(frozen=True)
class RegulationReport:
    tail_sup_e: float
    x_fit: DecayFit | None
    wt_fit: DecayFit | None
    identity_pass_fraction: float | None
    identity_worst: float | None


def _check_resonant(L: float):
    if abs(math.sin(L / 2.0)) < 1e-8:
        raise CriticalLengthError(L, (0, max(1, round(L / (2.0 * math.pi)))))


def M_profile(grid: Grid) -> Field:
    """Closed-form profile M(x) = -2 sin(x/2) sin((L-x)/2) / sin(L/2)."""
    L = grid.L
    _check_resonant(L)
    x = grid.x
    vals = -2.0 * np.sin(x / 2.0) * np.sin((L - x) / 2.0) / math.sin(L / 2.0)
    return Field(grid, vals)


def M_derivative(grid: Grid, order: int) -> Field:
    """Closed-form derivatives of M: M'(x) = -sin(L/2 - x)/sin(L/2) and its
    successors, exact at every node."""
    L = grid.L
    _check_resonant(L)
    s = math.sin(L / 2.0)
    x = grid.x
    if order == 1:
        vals = -np.sin(L / 2.0 - x) / s
    elif order == 2:
        vals = np.cos(L / 2.0 - x) / s
    elif order == 3:
        vals = np.sin(L / 2.0 - x) / s
    else:
        raise ConfigurationError(f"derivative order must be 1..3, got {order}")
    return Field(grid, vals)


def sylvester_residual(M: Field, w: Field, k_eta: float) -> float:
    """Residual of ∫M(w'+w''')dx + k_eta + w'(0) for a test profile w with
    w(0)=w(L)=0 and w'(L)=k_eta."""
    grid = M.grid
    if w.grid != grid:
        raise ConfigurationError("profile and test function use different grids")
    v = w.values
    if abs(v[0]) > 1e-6 or abs(v[-1]) > 1e-6:
        raise PreconditionError("test function must vanish at both ends")
    # fourth-order derivatives keep the discretization error subdominant to
    # the residual tolerance on smooth test profiles
    wp = diff(w, 1, acc=4)
    wppp = diff(w, 3, acc=4)
    if abs(wp.values[-1] - k_eta) > 1e-6 * (1.0 + abs(k_eta)):
        raise PreconditionError("test function slope at L must equal k_eta")
    qw = quad_weights(grid)
    integral = float(qw @ (M.values * (wp.values + wppp.values)))
    return integral + k_eta + wp.values[0]


def admissible_gain(consts: LyapunovConstants, M: Field, mode: str = "linear") -> float:
    """Gain bound: linear k0* = (σ₂/2 + ‖M‖/(4α))⁻¹; nonlinear adds the
    dissipation cap α/(ασ₁ + 4‖M‖²) under the min."""
    m_norm = M.norm_l2()
    k0 = 1.0 / (consts.sigma2 / 2.0 + m_norm / (4.0 * consts.alpha))
    if mode == "linear":
        return k0
    if mode == "nonlinear":
        cap = consts.alpha / (consts.alpha * consts.sigma1 + 4.0 * m_norm**2)
        return min(k0, cap)
    raise ConfigurationError(f"mode must be 'linear' or 'nonlinear', got {mode!r}")


def controller_step(ctrl: ControllerState, y: float, dt: float) -> tuple[ControllerState, float]:
    """Explicit Euler update of the integrator: η ← η + dt(y - r), u = kη."""
    if not math.isfinite(y):
        raise ConfigurationError(f"measured output must be finite, got {y}")
    eta = ctrl.eta + dt * (y - ctrl.r)
    new = ControllerState(eta=eta, k=ctrl.k, r=ctrl.r)
    return new, ctrl.k * eta


def _equilibrium_system(grid: Grid, k: float):
    """Square system for (w, eta): stepper rows A w + g·k·eta + d1 = 0 on the
    interior, Dirichlet ends, and the output row w'(0) = r."""
    params = KdvParams(grid, dt=1.0)  # dt unused for the operator itself
    op = build_linear_system(params)
    n = grid.n
    h = grid.h
    m = n + 2  # nodes plus eta
    S = np.zeros((m, m))
    A = op.A.toarray()
    S[1:n, :n + 1] = A[1:n, :]
    S[1:n, n + 1] = op.g[1:n] * k
    S[0, 0] = 1.0
    S[n, n] = 1.0
    # output row: (-3w0 + 4w1 - w2)/(2h) = r
    S[n + 1, 0] = -3.0 / (2.0 * h)
    S[n + 1, 1] = 4.0 / (2.0 * h)
    S[n + 1, 2] = -1.0 / (2.0 * h)
    return op, S


def _solve_equilibrium(grid: Grid, k: float, rhs_interior: np.ndarray, r: float):
    op, S = _equilibrium_system(grid, k)
    n = grid.n
    b = np.zeros(n + 2)
    b[1:n] = -rhs_interior[1:n]
    b[n + 1] = r
    try:
        sol = np.linalg.solve(S, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalSetupError(
            f"equilibrium system is singular (near-critical length?): {exc}"
        ) from exc
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalSetupError(
            f"equilibrium system ill conditioned (cond={cond:.3e}); "
            "L is likely near the critical set"
        )
    w = Field(grid, sol[:n + 1])
    eta = float(sol[n + 1])
    res = op.A @ w.values + op.g * (k * eta) + rhs_interior
    residual = float(np.linalg.norm(res[1:n]) / (1.0 + np.linalg.norm(rhs_interior)))
    return w, eta, residual, op


def linear_equilibrium(d: Field, r: float, k: float, grid: Grid) -> EquilibriumResult:
    """Equilibrium of the linear closed loop: w'+w'''=d, w(0)=w(L)=0,
    w'(0)=r, with eta_inf = w'(L)/k recovered jointly from the solve."""
    if not (k > 0):
        raise ConfigurationError(f"gain must be positive, got {k}")
    if d.grid != grid:
        raise ConfigurationError("disturbance and grid differ")
    w, eta, residual, _ = _solve_equilibrium(grid, k, d.values, r)
    return EquilibriumResult(w_inf=w, eta_inf=eta, residual=residual, iterations=0)


def nonlinear_equilibrium(
    d: Field,
    r: float,
    k: float,
    grid: Grid,
    max_iter: int = 30,
    tol: float = 1e-9,
) -> EquilibriumResult:
    """Picard iteration: solve the linear system with d replaced by
    d - w_j w_j' until the update contracts below tol."""
    if not (k > 0):
        raise ConfigurationError(f"gain must be positive, got {k}")
    if d.grid != grid:
        raise ConfigurationError("disturbance and grid differ")
    w = Field.zeros(grid)
    eta = 0.0
    contraction = None
    prev_delta = None
    op = build_linear_system(KdvParams(grid, 1.0))
    for it in range(1, max_iter + 1):
        conv = w.values * (op.D1 @ w.values)
        rhs = d.values - conv
        w_new, eta_new, _, _ = _solve_equilibrium(grid, k, rhs, r)
        delta = (w_new - w).norm_l2()
        if prev_delta is not None and prev_delta > 0:
            contraction = delta / prev_delta
            if contraction >= 1.0 and delta > tol:
                raise NonContractionError(
                    f"fixed-point iteration diverging (ratio {contraction:.3f}); "
                    "data outside the small-data regime"
                )
        w, eta = w_new, eta_new
        if delta < tol:
            conv = w.values * (op.D1 @ w.values)
            res = op.A @ w.values + op.g * (k * eta) + d.values - conv
            residual = float(np.linalg.norm(res[1:grid.n])
                             / (1.0 + np.linalg.norm(d.values)))
            return EquilibriumResult(w_inf=w, eta_inf=eta, residual=residual,
                                     iterations=it, contraction_est=contraction)
        prev_delta = delta
    raise NonContractionError(
        f"fixed-point iteration did not converge in {max_iter} iterations"
    )


def _resolve_gain(scenario: Scenario, consts: LyapunovConstants, M: Field) -> float:
    mode = "nonlinear" if scenario.nonlinear else "linear"
    bound = admissible_gain(consts, M, mode)
    if scenario.k == "auto":
        return 0.5 * bound
    k = float(scenario.k)
    if k > bound and not scenario.override_safety:
        raise ConfigurationError(
            f"gain k={k:g} exceeds the admissible bound {bound:g}; "
            "set override_safety to run anyway"
        )
    return k


def closed_loop_simulate(
    scenario: Scenario,
    snapshots: bool = False,
    on_blowup: str = "flag",
    w0: Field | None = None,
    eta0: float = 0.0,
) -> TimeSeries:
    """Couple the KdV step with the integral controller u = kη driven by
    y = w_x(t,0), recording the full diagnostic set per step."""
    if not scenario.closed_loop:
        raise ConfigurationError("scenario has no gain k; not a closed-loop run")
    grid = scenario.build_grid()
    crit, witness = is_critical_length(grid.L)
    if crit and not scenario.override_safety:
        raise CriticalLengthError(grid.L, witness)
    params = KdvParams(grid, scenario.dt, nonlinear=scenario.nonlinear)
    inputs = scenario.build_inputs(grid)
    if w0 is None:
        w0 = scenario.build_w0(grid)

    P, repP = cached_solve("P", scenario.lam, grid)
    Q, repQ = cached_solve("Q", scenario.lam, grid)
    p = gain_p(P)
    consts = compute_constants(scenario.lam, Q, p)
    M = M_profile(grid)
    k = _resolve_gain(scenario, consts, M)
    d1_field = Field(grid, inputs.d1_values(0.0, grid))
    if scenario.nonlinear:
        eq = nonlinear_equilibrium(d1_field, scenario.r, k, grid)
    else:
        eq = linear_equilibrium(d1_field, scenario.r, k, grid)

    op = build_linear_system(params)
    qw = quad_weights(grid)
    dt, theta = params.dt, params.theta
    w = w0.values.copy()
    ctrl = ControllerState(eta=eta0, k=k, r=scenario.r)
    t = 0.0
    cols = ("t", "eta", "y", "e", "E", "U", "V", "V_full", "x_distance", "wall_clock")
    rec: dict[str, list[float]] = {c: [] for c in cols}
    snaps: list[np.ndarray] | None = [] if snapshots else None
    start = time.perf_counter()

    def record(t_now: float, w_now: np.ndarray, eta: float, y: float):
        f = Field(grid, w_now)
        rec["t"].append(t_now)
        rec["eta"].append(eta)
        rec["y"].append(y)
        rec["e"].append(y - scenario.r)
        rec["E"].append(float(qw @ w_now**2))
        rec["U"].append(functional_U(Q, f))
        rec["V"].append(functional_V(Q, consts, f))
        # the closed-loop functional decays along the shifted trajectory
        # (eta - eta_inf, w - w_inf), the coordinates of the stability proof
        dx = w_now - eq.w_inf.values
        rec["V_full"].append(functional_V_full(
            Q, consts, M, eta - eq.eta_inf, Field(grid, dx)))
        rec["x_distance"].append(
            math.sqrt((eta - eq.eta_inf) ** 2 + float(qw @ dx**2)))
        rec["wall_clock"].append(time.perf_counter() - start)
        if snaps is not None:
            snaps.append(w_now.copy())

    y = boundary_slope(Field(grid, w), "left")
    record(0.0, w, ctrl.eta, y)
    nsteps = int(round(scenario.T / dt))
    truncated = False
    for j in range(nsteps):
        y = boundary_slope(Field(grid, w), "left")
        ctrl, u = controller_step(ctrl, y, dt)
        d2 = u + inputs.d2(t)
        d1 = inputs.d1_values(t, grid)
        # the boundary input u is held over the step, so f enters with full
        # weight regardless of theta
        f = d1 + op.g * d2
        rhs = w + dt * ((1.0 - theta) * (op.A @ w) + f)
        if params.nonlinear:
            guard = grid.h / (1.0 + 2.0 * float(np.max(np.abs(w))))
            if dt > guard:
                if on_blowup == "raise":
                    raise BlowUpError(t, "convective step-size guard violated")
                truncated = True
                break
            rhs -= dt * (w * (op.D1 @ w))
        rhs[0] = 0.0
        rhs[-1] = 0.0
        w_new = op.solve(rhs)
        w_new[0] = 0.0
        w_new[-1] = 0.0
        t += dt
        if not np.all(np.isfinite(w_new)) or np.max(np.abs(w_new)) > BLOWUP_LIMIT:
            if on_blowup == "raise":
                raise BlowUpError(t)
            truncated = True
            break
        w = w_new
        if (j + 1) % scenario.record_every == 0 or j == nsteps - 1:
            record(t, w, ctrl.eta, boundary_slope(Field(grid, w), "left"))

    metadata = {
        "scenario": scenario.name,
        "model": scenario.model,
        "L": repr(grid.L),
        "n": str(grid.n),
        "dt": repr(dt),
        "lambda": repr(scenario.lam),
        "k": format_float(k),
        "r": repr(scenario.r),
        "eta_inf": format_float(eq.eta_inf),
        "alpha": format_float(consts.alpha),
        "sigma1": format_float(consts.sigma1),
        "sigma2": format_float(consts.sigma2),
        "k0_star": format_float(consts.k0_star),
        "kernel_residual_P": format_float(repP.interior_residual),
        "kernel_residual_Q": format_float(repQ.interior_residual),
    }
    return TimeSeries(columns={c: np.asarray(v) for c, v in rec.items()},
                      snapshots=snaps, grid=grid, metadata=metadata,
                      truncated=truncated)


def regulation_diagnostics(
    series: TimeSeries,
    equilibrium: EquilibriumResult | None = None,
    k: float | None = None,
    fit_window: tuple[float, float] | None = None,
) -> RegulationReport:
    """Tail tracking error, fitted decay of the X-distance and of ‖w_t‖,
    and the energy-identity residual from the proof's integration by parts
    (the last two need dense snapshots and the equilibrium)."""
    t = series.t
    if len(t) < 10:
        raise InsufficientDataError("need at least 10 recorded steps")
    e = series.column("e")
    tail = max(1, len(t) // 10)
    tail_sup_e = float(np.max(np.abs(e[-tail:])))

    T = float(t[-1])
    if fit_window is None:
        fit_window = (0.05 * T, 0.6 * T)
    x_fit = None
    if "x_distance" in series.columns:
        try:
            x_fit = decay_fit(series, "x_distance", fit_window)
        except InsufficientDataError:
            x_fit = None

    wt_fit = None
    identity_pass = None
    identity_worst = None
    if series.snapshots is not None and len(series.snapshots) >= 3 and series.grid is not None:
        grid = series.grid
        qw = quad_weights(grid)
        snaps = series.snapshots
        wt_norms = []
        for i in range(len(snaps) - 1):
            dt_i = t[i + 1] - t[i]
            wt = (snaps[i + 1] - snaps[i]) / dt_i
            wt_norms.append(math.sqrt(max(float(qw @ wt**2), 0.0)))
        wt_series = TimeSeries(columns={"t": t[:-1], "wt_norm": np.asarray(wt_norms)})
        try:
            wt_fit = decay_fit(wt_series, "wt_norm", fit_window)
        except InsufficientDataError:
            wt_fit = None

        if equilibrium is not None and k is not None:
            eta = series.column("eta")
            winf = equilibrium.w_inf.values
            res, scales = [], []
            for i in range(len(snaps) - 1):
                dt_i = t[i + 1] - t[i]
                wt0 = snaps[i] - winf
                wt1 = snaps[i + 1] - winf
                dE = (float(qw @ wt1**2) - float(qw @ wt0**2)) / dt_i
                eta_t = eta[i] - equilibrium.eta_inf
                yx0 = boundary_slope(Field(grid, wt0), "left")
                lhs = k * k * eta_t * eta_t - yx0 * yx0
                res.append(abs(lhs - dE))
                scales.append(max(abs(lhs), abs(dE)))
            scale = max(max(scales), 1e-300)
            res = np.asarray(res)
            identity_pass = float(np.mean(res <= 0.05 * scale))
            identity_worst = float(np.max(res) / scale)
    return RegulationReport(tail_sup_e=tail_sup_e, x_fit=x_fit, wt_fit=wt_fit,
                            identity_pass_fraction=identity_pass,
                            identity_worst=identity_worst)


def basin_probe(
    scenario_template: Scenario,
    direction: Field,
    max_scale: float,
    tol: float = 5e-3,
    steps: int = 12,
) -> float:
    """Largest initial-condition scale along `direction` for which the
    closed loop still converges (|e(T)| < tol, no blow-up), found by
    bisection. Linear dynamics are globally stable, so the cap is returned
    immediately."""
    if direction.norm_l2() == 0.0:
        raise PreconditionError("probe direction must be non-zero")
    if max_scale <= 0:
        raise ConfigurationError("max_scale must be positive")
    if not scenario_template.nonlinear:
        return max_scale

    def converges(scale: float) -> bool:
        try:
            ser = closed_loop_simulate(scenario_template, w0=direction * scale,
                                       on_blowup="flag")
        except (NonContractionError, NumericalSetupError):
            return False
        if ser.truncated:
            return False
        return abs(ser.column("e")[-1]) < tol

    if converges(max_scale):
        return max_scale
    lo, hi = 0.0, max_scale
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if mid == 0.0:
            break
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return lo
