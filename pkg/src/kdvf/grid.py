"""Uniform 1-D grid on [0, L], sampled fields, quadrature and derivatives.

All spatial functions in the toolkit (PDE states, gains, kernels sliced
along one variable) live on the same uniform node set x_i = i*h, i=0..n.
Derivative matrices are built from Fornberg finite-difference weights:
centered stencils in the interior, shifted one-sided stencils of the same
formal order near the boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

__all__ = [
    "Grid",
    "Field",
    "make_grid",
    "quad_weights",
    "integrate",
    "diff_matrix",
    "diff",
    "boundary_slope",
    "is_critical_length",
    "fd_weights",
]


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of n cells on [0, L]; n+1 nodes."""

    L: float
    n: int

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)


@dataclass(frozen=True)
class Field:
    """Real function sampled at the nodes of a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise ConfigurationError(
                f"field needs {self.grid.n + 1} nodal values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, np.asarray([fn(xi) for xi in grid.x], dtype=float))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.n + 1))

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def norm_l2(self) -> float:
        """Quadrature-weighted L2 norm."""
        return math.sqrt(max(integrate(Field(self.grid, self.values**2)), 0.0))


def make_grid(L: float, n: int) -> Grid:
    """Validated grid constructor; n >= 8 keeps every stencil inside."""
    if not (L > 0) or not math.isfinite(L):
        raise ConfigurationError(f"domain length must be positive, got {L}")
    if n < 8:
        raise ConfigurationError(f"need at least 8 cells, got {n}")
    return Grid(float(L), int(n))


def quad_weights(grid: Grid) -> np.ndarray:
    """Composite Simpson weights (even n); trapezoid fallback for odd n."""
    n, h = grid.n, grid.h
    w = np.empty(n + 1)
    if n % 2 == 0:
        w[:] = 2.0
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3.0
    else:
        w[:] = h
        w[0] = w[-1] = h / 2.0
    return w


def integrate(f: Field) -> float:
    """Approximate ∫ f dx over [0, L]."""
    return float(quad_weights(f.grid) @ f.values)


def fd_weights(xs: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 on nodes xs.

    Fornberg's recursive algorithm; exact for polynomials up to degree
    len(xs)-1.
    """
    xs = np.asarray(xs, dtype=float)
    npts = len(xs)
    c = np.zeros((npts, m + 1))
    c1 = 1.0
    c4 = xs[0] - x0
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=64)
def _diff_matrix_cached(L: float, n: int, order: int, acc: int):
    grid = Grid(L, n)
    h = grid.h
    # stencil width giving at least the requested accuracy, forced odd so
    # the interior stencil is centered
    width = order + acc
    if width % 2 == 0:
        width += 1
    hw = width // 2
    rows, cols, vals = [], [], []
    x = grid.x
    for i in range(n + 1):
        if i < hw:
            idx = np.arange(0, width)
        elif i > n - hw:
            idx = np.arange(n + 1 - width, n + 1)
        else:
            idx = np.arange(i - hw, i + hw + 1)
        w = fd_weights(x[idx], x[i], order)
        rows.extend([i] * len(idx))
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    M.sum_duplicates()
    return M


def diff_matrix(grid: Grid, order: int, acc: int = 2) -> sp.csr_matrix:
    """Sparse nodal differentiation matrix of the given order/accuracy."""
    if order not in (1, 2, 3):
        raise ConfigurationError(f"derivative order must be 1, 2 or 3, got {order}")
    return _diff_matrix_cached(grid.L, grid.n, order, acc)


def diff(f: Field, order: int, acc: int = 2) -> Field:
    """Nodal samples of the order-th derivative of f."""
    return Field(f.grid, diff_matrix(f.grid, order, acc) @ f.values)


def boundary_slope(f: Field, side: str) -> float:
    """One-sided second-order slope at x=0 ('left') or x=L ('right')."""
    h = f.grid.h
    v = f.values
    if side == "left":
        return float((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h))
    if side == "right":
        return float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h))
    raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")


def is_critical_length(
    L: float, tol: float | None = None, k_max: int = 64
) -> tuple[bool, tuple[int, int] | None]:
    """Test membership of L in the critical set {2π√((k²+kl+l²)/3)}.

    Scans 0 <= k <= l <= k_max (ℕ taken to include 0, the conservative
    choice) and returns the first witness pair within tol. Complete for
    all candidates below 2π·k_max/√3.
    """
    if tol is None:
        tol = 1e-9 * (1.0 + L)
    if tol <= 0:
        raise ConfigurationError("tolerance must be positive")
    if k_max < 1:
        raise ConfigurationError("k_max must be >= 1")
    two_pi = 2.0 * math.pi
    for k in range(0, k_max + 1):
        # candidates grow with both indices: once the smallest value for
        # this k overshoots, larger k cannot match either
        smallest = two_pi * math.sqrt((3 * k * k) / 3.0)
        if smallest > L + tol:
            break
        for l in range(k, k_max + 1):
            cand = two_pi * math.sqrt((k * k + k * l + l * l) / 3.0)
            if abs(L - cand) < tol:
                return True, (k, l)
            if cand > L + tol:
                break
    return False, None
