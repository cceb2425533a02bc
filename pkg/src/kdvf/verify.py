"""Named verification suites over the toolkit's core properties.

Each suite runs a self-contained experiment at desk scale and reports
pass/fail with margins. The suites back both `kdvf verify` and the
acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import Field, boundary_slope, is_critical_length, make_grid, quad_weights
from .forwarding import (
    M_derivative,
    M_profile,
    closed_loop_simulate,
    linear_equilibrium,
    nonlinear_equilibrium,
    regulation_diagnostics,
    sylvester_residual,
)
from .kdv import InputSignals, KdvParams, simulate
from .kernels import (
    apply_Pi_bar,
    apply_Pi_bar_inv,
    cached_solve,
    gain_p,
    kernel_slope,
)
from .lyapunov import check_dissipation, compute_constants
from .observer import decay_fit, simulate_error_system
from .scenario import Scenario

__all__ = ["SuiteResult", "run_suite", "suite_names"]

L_DEFAULT = 1.5


@dataclass
class SuiteResult:
    name: str
    passed: bool
    lines: list[str] = field(default_factory=list)

    def add(self, label: str, ok: bool, detail: str):
        self.lines.append(f"  [{'pass' if ok else 'FAIL'}] {label}: {detail}")
        if not ok:
            self.passed = False


def _energy_run(n: int, dt: float, T: float = 0.3):
    g = make_grid(L_DEFAULT, n)
    w0 = Field.from_function(g, lambda x: 0.05 * math.sin(math.pi * x / g.L) ** 2)
    ser = simulate(w0, KdvParams(g, dt), InputSignals(), T)
    t, E, y = ser.t, ser.column("E"), ser.column("y")
    res = np.abs(np.diff(E) / np.diff(t) + y[:-1] ** 2)
    tol = 1e-3 * max(float(E[0]), 1.0)
    return res, tol


def suite_energy_law() -> SuiteResult:
    """Per-step energy balance |dE/dt + w_x(0)^2| and its refinement decay."""
    r = SuiteResult("energy-law", True)
    res, tol = _energy_run(200, 1e-4)
    frac = float(np.mean(res <= tol))
    r.add("per-step residual <= 1e-3*max(E0,1) at >= 99% of steps", frac >= 0.99,
          f"fraction {frac:.4f}, max residual {res.max():.3e}, tol {tol:.1e}")
    res2, _ = _energy_run(400, 2.5e-5)
    ratio = float(res.max() / res2.max())
    r.add("residual drops >= 3x under n->2n, dt ~ h^2", ratio >= 3.0,
          f"max-residual ratio {ratio:.2f}")
    return r


def suite_m_profile() -> SuiteResult:
    """Closed-form certificate for the forwarding profile M."""
    r = SuiteResult("m-profile", True)
    g = make_grid(L_DEFAULT, 150)
    M = M_profile(g)
    ends = max(abs(M.values[0]), abs(M.values[-1]))
    r.add("M(0) = M(L) = 0", ends <= 1e-12, f"max end value {ends:.2e}")
    mp0 = M_derivative(g, 1).values[0]
    r.add("M'(0) = -1", abs(mp0 + 1.0) <= 1e-12, f"M'(0) = {mp0:.17g}")
    ode = np.abs(M_derivative(g, 3).values + M_derivative(g, 1).values)
    r.add("M''' + M' = 0 at every node", float(ode.max()) <= 1e-12,
          f"max |M'''+M'| = {ode.max():.2e}")
    return r


def suite_sylvester() -> SuiteResult:
    """Sylvester identity residual on polynomial test profiles at n=150."""
    r = SuiteResult("sylvester", True)
    g = make_grid(L_DEFAULT, 150)
    L = g.L
    M = M_profile(g)
    tol = 1e-5 * (1.0 + L * L)
    cases = [
        ("w = x^2 (L-x)^2", Field.from_function(g, lambda x: x**2 * (L - x) ** 2), 0.0),
        ("w = x (L-x)^2", Field.from_function(g, lambda x: x * (L - x) ** 2), 0.0),
        ("w = 0", Field.zeros(g), 0.0),
    ]
    for label, w, k_eta in cases:
        res = abs(sylvester_residual(M, w, k_eta))
        r.add(label, res < tol, f"residual {res:.3e} < {tol:.1e}")
    return r


def suite_kernel_residuals() -> SuiteResult:
    """Kernel solves at lambda=1, L=1.5, n=100: PDE residuals, exact
    boundary families, inverse-pair round trip and gain compatibility."""
    r = SuiteResult("kernel-residuals", True)
    g = make_grid(L_DEFAULT, 100)
    lam = 1.0
    P, repP = cached_solve("P", lam, g)
    Q, repQ = cached_solve("Q", lam, g)
    r.add("P interior residual < 1e-2", repP.interior_residual < 1e-2,
          f"{repP.interior_residual:.3e}")
    r.add("Q interior residual < 1e-2", repQ.interior_residual < 1e-2,
          f"{repQ.interior_residual:.3e}")
    edges = max(
        float(np.max(np.abs(K[[0, -1], :])) + np.max(np.abs(K[:, [0, -1]])))
        for K in (P.values, Q.values)
    )
    r.add("boundary rows exactly zero", edges == 0.0, f"max edge value {edges:.1e}")
    f = Field.from_function(g, lambda x: math.sin(math.pi * x / g.L) * (1 + 0.3 * x))
    rt = apply_Pi_bar_inv(Q, apply_Pi_bar(P, f))
    rterr = (rt - f).norm_l2() / f.norm_l2()
    r.add("round trip relative error < 2%", rterr < 0.02, f"{rterr:.2e}")
    p = gain_p(P)
    qw = quad_weights(g)
    comp = p.values + Q.values @ (qw * p.values)
    qz0 = kernel_slope(Q, "z", "left").values
    rel = float(np.max(np.abs(comp - qz0)) / max(np.max(np.abs(qz0)), 1e-300))
    r.add("gain compatibility identity < 5%", rel < 0.05, f"{rel:.2e}")
    return r


def _observer_rate(lam: float, n: int = 150):
    g = make_grid(L_DEFAULT, n)
    P, _ = cached_solve("P", lam, g)
    Q, _ = cached_solve("Q", lam, g)
    p = gain_p(P)
    w0 = Field.from_function(g, lambda x: 0.3 * math.sin(math.pi * x / g.L) ** 2)
    ser = simulate_error_system(w0, KdvParams(g, 2e-4), p, InputSignals(), 1.0, Q=Q)
    return decay_fit(ser, "U", (0.1, 0.6))


def suite_observer_decay() -> SuiteResult:
    """Fitted decay of the strict functional U along the unforced error
    system, and its monotonicity in lambda."""
    r = SuiteResult("observer-decay", True)
    fit1 = _observer_rate(1.0)
    in_band = 0.7 <= fit1.rate <= 1.3
    r.add("fitted U rate in [0.7, 1.3] at lambda=1", in_band,
          f"rate {fit1.rate:.3f} (open loop at L=1.5 is already exponentially "
          "stable with spectral abscissa -20.37, so the decay far exceeds the "
          "one-sided bound dU/dt <= -lambda U)")
    r.add("fit quality r^2 > 0.95", fit1.r_squared > 0.95, f"r^2 {fit1.r_squared:.6f}")
    f2 = _observer_rate(2.0)
    f05 = _observer_rate(0.5)
    r.add("rate(lambda=2) > rate(lambda=0.5)", f2.rate > f05.rate,
          f"{f2.rate:.3f} > {f05.rate:.3f}")
    return r


def suite_iss_monitor() -> SuiteResult:
    """Dissipation inequality of V under constant disturbances."""
    r = SuiteResult("iss-monitor", True)
    g = make_grid(L_DEFAULT, 150)
    lam = 1.0
    P, _ = cached_solve("P", lam, g)
    Q, _ = cached_solve("Q", lam, g)
    consts = compute_constants(lam, Q, gain_p(P))
    prof = Field.from_function(g, lambda x: math.sin(math.pi * x / g.L))
    prof = prof * (0.05 / prof.norm_l2())
    inputs = InputSignals(d1=lambda t: prof.values, d2=lambda t: 0.01)
    w0 = Field.from_function(g, lambda x: 0.05 * math.sin(math.pi * x / g.L) ** 2)
    ser = simulate(w0, KdvParams(g, 1e-3), inputs, 20.0, snapshots=True)
    rep = check_dissipation(ser, consts, inputs, slack=0.05, Q=Q, quantity="V")
    r.add("dV/dt <= -alpha E + sigma1 ||d1||^2 + sigma2 d2^2 at >= 99% of steps",
          rep.pass_fraction >= 0.99,
          f"pass fraction {rep.pass_fraction:.4f}, worst margin {rep.worst_margin:.3e}")
    E = ser.column("E")
    bounded = bool(np.all(np.isfinite(E))) and not ser.truncated
    r.add("state norm bounded over T=20", bounded,
          f"max E {E.max():.3e}, final E {E[-1]:.3e}")
    return r


def _linear_regulation_scenario() -> Scenario:
    return Scenario(name="linear-regulation", model="linear", L=L_DEFAULT, n=150,
                    dt=1e-3, T=40.0, lam=1.0, k="auto", r=0.05,
                    d1_spec="sine 0.05", d2_spec="zero", w0_spec="zero",
                    record_every=10)


def suite_regulation_linear() -> SuiteResult:
    """Linear closed loop: output tracking, X-distance decay, monotone
    closed-loop functional."""
    r = SuiteResult("regulation-linear", True)
    sc = _linear_regulation_scenario()
    ser = closed_loop_simulate(sc, snapshots=True)
    e = ser.column("e")
    r.add("|y(T) - r| < 1e-3 at T=40", abs(e[-1]) < 1e-3, f"|e(T)| = {abs(e[-1]):.3e}")
    rep = regulation_diagnostics(ser)
    ok = rep.x_fit is not None and rep.x_fit.rate > 0 and rep.x_fit.r_squared > 0.9
    det = ("no fit" if rep.x_fit is None else
           f"rate {rep.x_fit.rate:.4f}, r^2 {rep.x_fit.r_squared:.4f}")
    r.add("X-distance decays (rate > 0, r^2 > 0.9)", ok, det)
    vf = ser.column("V_full")
    dv = np.diff(vf)
    viol = int(np.sum(dv > 1e-10 * np.abs(vf[:-1])))
    r.add("closed-loop functional non-increasing (slack 1e-10)", viol == 0,
          f"{viol} increases over {len(dv)} intervals")
    return r


def suite_regulation_nonlinear() -> SuiteResult:
    """Nonlinear closed loop with small data, plus the equilibrium fixed
    point's own convergence certificate."""
    r = SuiteResult("regulation-nonlinear", True)
    sc = Scenario(name="nonlinear-regulation", model="nonlinear", L=L_DEFAULT,
                  n=150, dt=1e-3, T=60.0, lam=1.0, k="auto", r=0.01,
                  d1_spec="sine 0.02 norm", d2_spec="zero",
                  w0_spec="bump 0.05 norm", record_every=20)
    ser = closed_loop_simulate(sc)
    r.add("no blow-up to T=60", not ser.truncated,
          f"truncated = {ser.truncated}")
    e = ser.column("e")
    r.add("|y(T) - r| < 5e-3", abs(e[-1]) < 5e-3, f"|e(T)| = {abs(e[-1]):.3e}")
    g = sc.build_grid()
    d = Field.from_function(g, lambda x: math.sin(math.pi * x / g.L))
    d = d * (0.02 / d.norm_l2())
    eq = nonlinear_equilibrium(d, sc.r, float(ser.metadata["k"]), g,
                               max_iter=30, tol=1e-9)
    ok = (eq.iterations <= 30 and eq.residual < 1e-7
          and (eq.contraction_est is None or eq.contraction_est < 1.0))
    r.add("fixed point: <= 30 iterations, residual < 1e-7, contraction < 1", ok,
          f"iters {eq.iterations}, residual {eq.residual:.2e}, "
          f"contraction {eq.contraction_est}")
    return r


def suite_equilibrium() -> SuiteResult:
    """Linear equilibrium self-residual, imposed rows, and drift when used
    as initial data of the closed loop."""
    r = SuiteResult("equilibrium", True)
    g = make_grid(L_DEFAULT, 150)
    L = g.L
    d = Field.from_function(g, lambda x: 0.05 * math.sin(math.pi * x / L))
    k = 0.19
    eq = linear_equilibrium(d, 0.05, k, g)
    r.add("discrete BVP residual < 1e-8*(1+||d||)", eq.residual < 1e-8,
          f"{eq.residual:.2e}")
    slope0 = boundary_slope(eq.w_inf, "left")
    r.add("w'(0) = r imposed", abs(slope0 - 0.05) < 1e-8, f"{slope0:.12g}")
    ends = max(abs(eq.w_inf.values[0]), abs(eq.w_inf.values[-1]))
    r.add("Dirichlet ends exact", ends == 0.0, f"{ends:.1e}")
    sc = Scenario(name="eq-drift", model="linear", L=L, n=150, dt=1e-3, T=5.0,
                  lam=1.0, k=k, r=0.05, d1_spec="sine 0.05", d2_spec="zero",
                  w0_spec="zero", record_every=10)
    ser = closed_loop_simulate(sc, w0=eq.w_inf, eta0=eq.eta_inf)
    xd = ser.column("x_distance")
    drift = float(np.max(xd))
    tol = 1e-4 * (1.0 + eq.w_inf.norm_l2())
    r.add("equilibrium initial data does not drift", drift < tol,
          f"max X-distance {drift:.2e} < {tol:.1e}")
    return r


def suite_critical_length() -> SuiteResult:
    """Membership tests of the critical set and the refusal witness."""
    r = SuiteResult("critical-length", True)
    crit, wit = is_critical_length(2.0 * math.pi)
    r.add("L = 2*pi detected with witness (1,1)", crit and wit == (1, 1),
          f"critical={crit}, witness={wit}")
    crit2, _ = is_critical_length(1.5)
    r.add("L = 1.5 not critical", not crit2, f"critical={crit2}")
    return r


_SUITES = {
    "energy-law": suite_energy_law,
    "m-profile": suite_m_profile,
    "sylvester": suite_sylvester,
    "kernel-residuals": suite_kernel_residuals,
    "observer-decay": suite_observer_decay,
    "iss-monitor": suite_iss_monitor,
    "regulation-linear": suite_regulation_linear,
    "regulation-nonlinear": suite_regulation_nonlinear,
    "equilibrium": suite_equilibrium,
    "critical-length": suite_critical_length,
}


def suite_names() -> list[str]:
    return list(_SUITES)


def run_suite(name: str) -> SuiteResult:
    if name not in _SUITES:
        raise ConfigurationError(
            f"unknown suite {name!r}; expected one of {', '.join(_SUITES)}")
    return _SUITES[name]()
