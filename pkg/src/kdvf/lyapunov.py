"""Lyapunov functionals and the associated constant pack.

E is the plain energy, U = ‖Π̄⁻¹w‖² the strict functional of the observer
error system, W = U/(2 p̄ ϱ₁) its scaled copy, V = E + W the ISS functional
of the plant, and the closed-loop functional adds the forwarding cross term
(η - ∫M w)². The constants follow the explicit formulas
    ϱ₁ = 2c̄/λ,     ϱ₂ = 1 + (2/λ)‖Q_z(·,L)‖²,
    α = c̲/(4 p̄ ϱ₁),  σ₁ = 4 p̄ ϱ₁/c̲ + 1/p̄,  σ₂ = 1 + ϱ₂/(2 p̄ ϱ₁),
    k₀* = (σ₂/2 + ‖M‖/(4α))⁻¹,
on top of the numerically computed sandwich bounds c̲, c̄ and p̄ = ‖p‖².
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateGainError, InsufficientDataError
from .grid import Field, Grid, quad_weights
from .kdv import InputSignals
from .kernels import Kernel2D, apply_Pi_bar_inv, kernel_slope, operator_bounds
from .series import TimeSeries

__all__ = [
    "LyapunovConstants",
    "DissipationReport",
    "energy",
    "functional_U",
    "functional_V",
    "functional_V_full",
    "compute_constants",
    "check_dissipation",
]


@dataclass(frozen=True)
class LyapunovConstants:
    lam: float
    c_under: float
    c_bar: float
    rho1: float
    rho2: float
    p_bar: float
    alpha: float
    sigma1: float
    sigma2: float
    k0_star: float

    def __post_init__(self):
        vals = [self.lam, self.c_under, self.c_bar, self.rho1, self.rho2,
                self.p_bar, self.alpha, self.sigma1, self.sigma2, self.k0_star]
        if any(not (v > 0) for v in vals):
            raise ConfigurationError("all Lyapunov constants must be positive")
        if self.c_under > self.c_bar:
            raise ConfigurationError("c_under must not exceed c_bar")


@dataclass(frozen=True)
class DissipationReport:
    steps_checked: int
    violations: int
    worst_margin: float
    slack_used: float

    @property
    def pass_fraction(self) -> float:
        if self.steps_checked == 0:
            return 1.0
        return 1.0 - self.violations / self.steps_checked


def energy(w: Field) -> float:
    """E(w) = ∫ w² dx."""
    qw = quad_weights(w.grid)
    return float(qw @ w.values**2)


def functional_U(Q: Kernel2D, w: Field) -> float:
    """U(w) = ‖Π̄⁻¹w‖², the strict functional of the target system."""
    return energy(apply_Pi_bar_inv(Q, w))


def compute_constants(lam: float, Q: Kernel2D, p: Field) -> LyapunovConstants:
    """Assemble the constant pack from the kernel data.

    ‖M‖ needed by k₀* comes from the forwarding profile on the same grid.
    """
    if lam <= 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if p.grid != Q.grid:
        raise ConfigurationError("gain and kernel use different grids")
    p_bar = p.norm_l2() ** 2
    if p_bar == 0.0:
        raise DegenerateGainError("observer gain is identically zero")
    c_under, c_bar = operator_bounds(Q)
    rho1 = 2.0 * c_bar / lam
    qL = kernel_slope(Q, "z", "right")
    rho2 = 1.0 + (2.0 / lam) * qL.norm_l2() ** 2
    alpha = c_under / (4.0 * p_bar * rho1)
    sigma1 = 4.0 * p_bar * rho1 / c_under + 1.0 / p_bar
    sigma2 = 1.0 + rho2 / (2.0 * p_bar * rho1)
    from .forwarding import M_profile  # local import to avoid a module cycle
    m_norm = M_profile(Q.grid).norm_l2()
    k0_star = 1.0 / (sigma2 / 2.0 + m_norm / (4.0 * alpha))
    return LyapunovConstants(lam=lam, c_under=c_under, c_bar=c_bar, rho1=rho1,
                             rho2=rho2, p_bar=p_bar, alpha=alpha,
                             sigma1=sigma1, sigma2=sigma2, k0_star=k0_star)


def functional_V(Q: Kernel2D, consts: LyapunovConstants, w: Field) -> float:
    """V(w) = E(w) + U(w)/(2 p̄ ϱ₁), the strict ISS functional."""
    return energy(w) + functional_U(Q, w) / (2.0 * consts.p_bar * consts.rho1)


def functional_V_full(
    Q: Kernel2D, consts: LyapunovConstants, M: Field, eta: float, w: Field
) -> float:
    """Closed-loop functional V(w) + (η - ∫M w)²."""
    if M.grid != w.grid:
        raise ConfigurationError("profile and state use different grids")
    qw = quad_weights(w.grid)
    cross = eta - float(qw @ (M.values * w.values))
    return functional_V(Q, consts, w) + cross * cross


def check_dissipation(
    series: TimeSeries,
    consts: LyapunovConstants,
    inputs: InputSignals,
    slack: float,
    Q: Kernel2D | None = None,
    quantity: str = "V",
    rate: float | None = None,
) -> DissipationReport:
    """Check a discrete dissipation inequality along a recorded trajectory.

    quantity='V' checks ΔV/Δt ≤ -α E + σ₁‖d₁‖² + σ₂ d₂² + slack on each
    recorded interval (V rebuilt from the snapshots; Q required).
    quantity='U' checks ΔU/Δt ≤ -λ U + slack in the same way.
    quantity names a recorded column otherwise, checked against
    Δq/Δt ≤ -rate·q + slack allowance (rate defaults to 0: monotone
    non-increase). slack is relative: the per-step allowance is slack times
    the state term of the bound (α·E for V, λ·U for U, the quantity itself
    for plain columns), so a slack of 0.05 tolerates a 5% violation of the
    dissipation rate.
    """
    t = series.t
    if len(t) < 2:
        raise InsufficientDataError("need at least two recorded steps")
    if quantity in ("V", "U"):
        if series.snapshots is None or series.grid is None:
            raise InsufficientDataError("dissipation check needs snapshots")
        if Q is None:
            raise ConfigurationError("dissipation check needs the inverse kernel")
        grid = series.grid
        qw = quad_weights(grid)
        vals, evals = [], []
        for w in series.snapshots:
            f = Field(grid, w)
            evals.append(float(qw @ w**2))
            if quantity == "V":
                vals.append(functional_V(Q, consts, f))
            else:
                vals.append(functional_U(Q, f))
    else:
        vals = list(series.column(quantity))
        evals = [0.0] * len(vals)
        grid = series.grid

    violations = 0
    worst = -math.inf
    steps = len(t) - 1
    for i in range(steps):
        dt_i = t[i + 1] - t[i]
        if dt_i <= 0:
            raise ConfigurationError("recorded times must increase")
        dq = (vals[i + 1] - vals[i]) / dt_i
        if quantity == "V":
            d1 = inputs.d1_values(t[i], grid)
            d1n2 = float(qw @ d1**2)
            d2 = float(inputs.d2(t[i]))
            bound = (-consts.alpha * evals[i]
                     + consts.sigma1 * d1n2 + consts.sigma2 * d2 * d2)
            allowance = slack * consts.alpha * evals[i]
        elif quantity == "U":
            bound = -consts.lam * vals[i]
            allowance = slack * consts.lam * vals[i]
        else:
            bound = -(rate or 0.0) * vals[i]
            allowance = slack * abs(vals[i])
        margin = dq - bound - allowance
        if margin > 0:
            violations += 1
        worst = max(worst, margin)
    return DissipationReport(steps_checked=steps, violations=violations,
                             worst_margin=worst, slack_used=slack)
