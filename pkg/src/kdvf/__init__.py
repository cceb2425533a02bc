"""Simulation and verification toolkit for boundary output regulation of
the Korteweg-de Vries equation: KdV time stepping, backstepping observer
through a Fredholm transform, ISS Lyapunov functionals, and a forwarding
integral controller, with a scenario-driven CLI."""

from .errors import (
    BlowUpError,
    ConfigurationError,
    CriticalLengthError,
    DegenerateGainError,
    DegenerateTransformError,
    InsufficientDataError,
    KdvfError,
    KernelSolveError,
    NonContractionError,
    NumericalSetupError,
    PreconditionError,
)
from .grid import (
    Field,
    Grid,
    boundary_slope,
    diff,
    diff_matrix,
    integrate,
    is_critical_length,
    make_grid,
    quad_weights,
)
from .kdv import (
    InputSignals,
    KdvParams,
    KdvState,
    LinearStepOperator,
    VariableCoeffs,
    build_linear_system,
    simulate,
    step,
)
from .kernels import (
    Kernel2D,
    KernelSolveReport,
    apply_Pi_bar,
    apply_Pi_bar_inv,
    cached_solve,
    gain_p,
    kernel_from_csv,
    kernel_slope,
    kernel_to_csv,
    operator_bounds,
    reflection_mismatch,
    solve_kernel_P,
    solve_kernel_Q,
    solve_kernel_reflected,
)
from .lyapunov import (
    DissipationReport,
    LyapunovConstants,
    check_dissipation,
    compute_constants,
    energy,
    functional_U,
    functional_V,
    functional_V_full,
)
from .observer import (
    DecayFit,
    ObserverState,
    decay_fit,
    observer_step,
    simulate_error_system,
)
from .forwarding import (
    ControllerState,
    EquilibriumResult,
    M_profile,
    RegulationReport,
    admissible_gain,
    basin_probe,
    closed_loop_simulate,
    controller_step,
    linear_equilibrium,
    nonlinear_equilibrium,
    regulation_diagnostics,
    sylvester_residual,
)
from .scenario import Scenario, bundled_scenarios, load_scenario
from .series import TimeSeries

__version__ = "0.1.0"
