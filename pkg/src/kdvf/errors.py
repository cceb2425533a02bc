"""Exception hierarchy for the toolkit.

Every failure mode that maps to a CLI exit code has its own class so the
harness can translate without string matching.
"""


class KdvfError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(KdvfError):
    """Invalid user-facing configuration (bad grid, bad scenario file...)."""


class NumericalSetupError(KdvfError):
    """A factorization or assembly failed (dt/h incompatibility, singularity)."""


class BlowUpError(KdvfError):
    """The simulated state left the trusted range (non-finite or huge)."""

    def __init__(self, t: float, message: str | None = None):
        self.t = t
        super().__init__(message or f"solution blew up at t={t:.6g}")


class CriticalLengthError(KdvfError):
    """Domain length sits (within tolerance) on the critical set."""

    def __init__(self, L: float, witness: tuple[int, int]):
        self.L = L
        self.witness = witness
        super().__init__(
            f"L={L:.12g} is a critical length, witness (k,l)={witness}"
        )


class KernelSolveError(KdvfError):
    """Kernel boundary-value problem could not be solved reliably."""


class DegenerateTransformError(KdvfError):
    """The inverse transform matrix is numerically non-invertible."""


class DegenerateGainError(KdvfError):
    """Observer gain is identically zero; constants are undefined."""


class InsufficientDataError(KdvfError):
    """A diagnostic needs more samples/snapshots than the record holds."""


class NonContractionError(KdvfError):
    """Fixed-point iteration failed to contract (data too large)."""


class PreconditionError(KdvfError):
    """An operation's stated precondition is violated."""
