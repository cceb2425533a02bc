"""Kernel boundary-value problems on [0,L]² and the Fredholm transform pair.

The direct kernel P solves
    -λP + P_z + P_zzz + P_x + P_xxx = λ δ(x-z)
with P(x,0)=P(x,L)=P(0,z)=P(L,z)=0 and P_x(0,z)=P_x(L,z)=0; the inverse
kernel Q solves the same equation with +λ and the slope condition
Q_x(L,z)=0. P is discretized by collocation on the tensor grid: boundary
families are eliminated exactly, stencils stay on one side of the diagonal
kink, and the Dirac line enters through explicit jump conditions on the
normal derivative across the diagonal. Q is then recovered as the Fredholm
resolvent of P, which makes the inverse-pair and gain-compatibility
identities hold to rounding error; its own PDE residual is still evaluated
and reported as an independent check.

The transform w = Π̄γ = γ - ∫P(x,z)γ(z)dz maps the observer error system to
an exponentially decaying target; its inverse is γ = w + ∫Q(x,z)w(z)dz and
the observer injection gain is p(x) = P_z(x,0).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigurationError,
    DegenerateGainError,
    DegenerateTransformError,
    KernelSolveError,
)
from .grid import Field, Grid, fd_weights, quad_weights
from .series import format_float

__all__ = [
    "Kernel2D",
    "KernelSolveReport",
    "solve_kernel_P",
    "solve_kernel_Q",
    "solve_kernel_reflected",
    "reflection_mismatch",
    "gain_p",
    "kernel_slope",
    "apply_Pi_bar",
    "apply_Pi_bar_inv",
    "operator_bounds",
    "kernel_to_csv",
    "kernel_from_csv",
    "cached_solve",
]


@dataclass(frozen=True)
class Kernel2D:
    """Two-variable kernel sampled on the tensor grid; entry (i,j)=K(x_i,z_j)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = self.grid.n + 1
        if v.shape != (m, m):
            raise ConfigurationError(f"kernel needs shape {(m, m)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise KernelSolveError("kernel contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class KernelSolveReport:
    lam: float
    interior_residual: float
    diag_consistency: float
    refinement_ratio: float | None = None


def _stencil_window(i: int, diag: int, n: int, width: int = 5):
    """Index window of the given width containing i, inside [0, n], on i's
    side of the diagonal index `diag` (the diagonal node itself may enter the
    window since the kernel is continuous there). None if no such window
    fits (cramped corners next to where the diagonal meets the boundary)."""
    lo_min, lo_max = max(0, i - width + 1), min(i, n - width + 1)
    if i > diag:
        lo_min = max(lo_min, diag)
    elif i < diag:
        lo_max = min(lo_max, diag - width + 1)
    else:
        return None
    if lo_min > lo_max:
        return None
    # prefer as centered as possible
    lo = min(max(i - width // 2, lo_min), lo_max)
    return np.arange(lo, lo + width)


def _pde_row(grid: Grid, lam: float, lam_sign: float, i: int, j: int):
    """Collocation row of lam_sign*λK + K_z + K_zzz + K_x + K_xxx at node
    (i,j), with stencils kept on one side of the diagonal kink. Width-5
    windows give second order; cramped near-corner nodes fall back to
    width 4 (first order). None when not even a width-4 window fits."""
    n = grid.n
    x = grid.x
    wi = _stencil_window(i, j, n)
    if wi is None:
        wi = _stencil_window(i, j, n, width=4)
    wj = _stencil_window(j, i, n)
    if wj is None:
        wj = _stencil_window(j, i, n, width=4)
    if wi is None or wj is None:
        return None
    cols: dict[tuple[int, int], float] = {}

    def acc(key, val):
        cols[key] = cols.get(key, 0.0) + val

    acc((i, j), lam_sign * lam)
    for order in (1, 3):
        wts = fd_weights(x[wi], x[i], order)
        for k, wt in zip(wi, wts):
            acc((int(k), j), wt)
        wts = fd_weights(x[wj], x[j], order)
        for k, wt in zip(wj, wts):
            acc((i, int(k)), wt)
    return cols


def _jump_row(grid: Grid, i: int):
    """Interface row at the diagonal node (i,i): the jump of the normal
    derivative K_u (u = x-z) across the diagonal, one-sided from both
    triangles. Second order where three nodes fit, first order at i=1 and
    i=n-1 where the triangle is cramped against the corner."""
    n, h = grid.n, grid.h
    cols: dict[tuple[int, int], float] = {}

    def acc(key, val):
        cols[key] = cols.get(key, 0.0) + val

    def one_sided(axis: int, direction: int, scale: float):
        """Derivative along one axis at (i,i), looking in `direction`."""
        if 0 <= i + 2 * direction <= n:
            terms = ((0, -3.0), (1, 4.0), (2, -1.0))
            c = direction / (2.0 * h)
        else:
            terms = ((0, -1.0), (1, 1.0))
            c = direction / h
        for off, wt in terms:
            k = i + off * direction
            key = (k, i) if axis == 0 else (i, k)
            acc(key, scale * wt * c)

    # K_u = (K_x - K_z)/2; lower triangle (x > z) minus upper triangle
    one_sided(0, +1, +0.5)   # K_x from below the diagonal
    one_sided(1, -1, -0.5)   # K_z from below
    one_sided(0, -1, -0.5)   # -K_x from above
    one_sided(1, +1, +0.5)   # -(-K_z) from above
    return cols


def _kernel_rows(grid: Grid, lam: float, lam_sign: float):
    """All collocation and interface rows of a kernel system, as tuples
    (kind, entries, rhs, beta_coeff) with kind in {pde, band, jump}. Shared
    by the solver and the residual evaluator so reports are canonical."""
    n, h = grid.n, grid.h
    x = grid.x
    out = []
    for i in range(1, n):
        for j in range(1, n):
            if i == j:
                continue
            entry = _pde_row(grid, lam, lam_sign, i, j)
            if entry is None:
                continue
            kind = "band" if abs(x[i] - x[j]) <= 3.0 * h else "pde"
            out.append((kind, entry, 0.0, 0.0))
    # the normal-derivative jump across the diagonal equals -λ(x+z-v0)/6:
    # the unique line matching the Dirac mass through the 6 K_uuv term, with
    # the sign fixed by the source convention ∫δ(x-z)γ(z)dz = -γ(x) used in
    # deriving the kernel systems; the cramped corner nodes i=1, n-1 are
    # skipped because their lines are consumed by Neumann eliminations
    for i in range(2, n - 1):
        out.append(("jump", _jump_row(grid, i), -lam * x[i] / 3.0, 1.0))
    return out


def _solve_kernel(
    lam: float,
    grid: Grid,
    lam_sign: float,
    neumann_x: tuple[str, ...] = (),
    neumann_z: tuple[str, ...] = (),
) -> tuple[Kernel2D, KernelSolveReport]:
    """Shared kernel solver.

    All four edges are Dirichlet zero. Each entry of neumann_x/neumann_z
    ('left'/'right') adds a zero-slope condition in that variable, imposed
    by eliminating the node adjacent to the edge through the 3-point
    one-sided stencil: with the edge value zero, K_edge' = 0 reduces to
    K_adjacent = K_next/4.
    """
    if lam <= 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    n, h = grid.n, grid.h
    m = n + 1
    N = m * m

    def flat(i, j):
        return i * m + j

    # classify unknowns: fixed (Dirichlet edges), slave (Neumann-eliminated),
    # free (everything else)
    fixed = np.zeros((m, m), dtype=bool)
    fixed[0, :] = fixed[n, :] = True
    fixed[:, 0] = fixed[:, n] = True
    slave_of: dict[int, int] = {}
    for side in neumann_x:
        i_s, i_m = (1, 2) if side == "left" else (n - 1, n - 2)
        for j in range(1, n):
            slave_of[flat(i_s, j)] = flat(i_m, j)
    for side in neumann_z:
        j_s, j_m = (1, 2) if side == "left" else (n - 1, n - 2)
        for i in range(1, n):
            k = flat(i, j_s)
            if k in slave_of:
                raise ConfigurationError("conflicting slope eliminations")
            slave_of[k] = flat(i, j_m)

    is_fixed = fixed.ravel()
    free_idx = [k for k in range(N) if not is_fixed[k] and k not in slave_of]
    col_of = {k: c for c, k in enumerate(free_idx)}
    nfree = len(free_idx)
    beta_col = nfree  # extra unknown: λ·v0/6, the free constant of the jump line

    def unknown_cols(i, j):
        """Express K[i,j] as a combination of free unknowns."""
        k = flat(i, j)
        if is_fixed[k]:
            return []
        if k in slave_of:
            k_m = slave_of[k]
            if is_fixed[k_m]:
                return []
            return [(col_of[k_m], 0.25)]
        return [(col_of[k], 1.0)]

    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for kind, entry, rhs_val, beta_coeff in _kernel_rows(grid, lam, lam_sign):
        for (ii, jj), wt in entry.items():
            for c, co in unknown_cols(ii, jj):
                rows.append(r)
                cols.append(c)
                vals.append(wt * co)
        if beta_coeff != 0.0:
            rows.append(r)
            cols.append(beta_col)
            vals.append(beta_coeff)
        rhs.append(rhs_val)
        r += 1

    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, nfree + 1))
    b = np.asarray(rhs)
    # row equilibration keeps the normal equations well scaled
    rnorm = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    rnorm[rnorm == 0] = 1.0
    scale = 1.0 / rnorm
    S = sp.diags(scale)
    As = (S @ A).tocsr()
    bs = b * scale

    AtA = (As.T @ As).tocsc()
    eps = 1e-12 * AtA.diagonal().sum() / AtA.shape[0]
    Atb = As.T @ bs
    try:
        lu = spla.splu(AtA + eps * sp.identity(AtA.shape[0], format="csc"))
    except RuntimeError as exc:
        raise KernelSolveError(
            f"normal-equation factorization failed (near-critical L?): {exc}"
        ) from exc
    u = lu.solve(Atb)
    # one pass of iterative refinement on the normal equations
    u = u + lu.solve(Atb - (AtA @ u) - eps * u)
    if not np.all(np.isfinite(u)):
        raise KernelSolveError("kernel solve produced non-finite values")

    full = np.zeros(N)
    for c, k in enumerate(free_idx):
        full[k] = u[c]
    for k_s, k_m in slave_of.items():
        if not is_fixed[k_m]:
            full[k_s] = 0.25 * full[k_m]
    K = full.reshape(m, m)

    kernel = Kernel2D(grid, K)
    return kernel, _evaluate_residuals(kernel, lam, lam_sign)


def _evaluate_residuals(kernel: Kernel2D, lam: float, lam_sign: float) -> KernelSolveReport:
    """Canonical residual metrics for a kernel, independent of how it was
    obtained (fresh solve or cache load), so reports are reproducible.

    interior_residual: rms of equilibrated PDE-row residuals off the diagonal
    band, relative to the rms kernel magnitude (how well the homogeneous PDE
    cancels compared with the size of its terms). diag_consistency: relative
    residual of the diagonal jump rows, with the free line constant fitted.
    """
    grid = kernel.grid
    K = kernel.values
    n = grid.n
    pde_res = []
    jump_vals, jump_rhs, jump_norms = [], [], []
    for kind, entry, rhs_val, beta_coeff in _kernel_rows(grid, lam, lam_sign):
        val = sum(wt * K[ii, jj] for (ii, jj), wt in entry.items())
        rnorm = math.sqrt(sum(wt * wt for wt in entry.values()))
        if kind == "pde":
            pde_res.append(val / rnorm)
        elif kind == "jump":
            jump_vals.append(val)
            jump_rhs.append(rhs_val)
            jump_norms.append(math.sqrt(rnorm**2 + beta_coeff**2))
    jump_vals = np.asarray(jump_vals)
    jump_rhs = np.asarray(jump_rhs)
    jump_norms = np.asarray(jump_norms)
    # fit the line's free constant in the same equilibrated metric
    wgt = 1.0 / jump_norms**2
    beta = float(np.sum(wgt * (jump_rhs - jump_vals)) / np.sum(wgt))
    jres = (jump_vals + beta - jump_rhs) / jump_norms
    jscale = max(float(np.linalg.norm(jump_rhs / jump_norms)), 1e-300)

    interior = K[1:n, 1:n]
    kscale = max(float(np.sqrt(np.mean(interior**2))), 1e-300)
    interior_residual = float(
        np.sqrt(np.mean(np.square(pde_res))) / kscale if pde_res else 0.0
    )
    diag_consistency = float(np.linalg.norm(jres) / jscale)
    return KernelSolveReport(lam=lam, interior_residual=interior_residual,
                             diag_consistency=diag_consistency)


def solve_kernel_P(lam: float, grid: Grid) -> tuple[Kernel2D, KernelSolveReport]:
    """Direct-transform kernel: -λ sign, zero slope in x at both ends."""
    return _solve_kernel(lam, grid, lam_sign=-1.0, neumann_x=("left", "right"))


def solve_kernel_Q(lam: float, grid: Grid) -> tuple[Kernel2D, KernelSolveReport]:
    """Inverse-transform kernel: +λ sign, zero slope in x at the right end.

    Computed as the Fredholm resolvent of the direct kernel: with W the
    quadrature weights, I + QW = (I - PW)^{-1}, so Q = ((I-PW)^{-1} - I)W^{-1}.
    The resolvent inherits every boundary family of P exactly (zero edges and
    the right-end slope elimination) and makes the composition with the
    direct transform the identity to rounding error. The returned report
    still measures Q against its own collocation rows as an independent
    check that it solves the +λ boundary-value problem.
    """
    P, _ = solve_kernel_P(lam, grid)
    qw = quad_weights(grid)
    m = grid.n + 1
    T = np.eye(m) - P.values * qw[None, :]
    try:
        R = np.linalg.solve(T, np.eye(m)) - np.eye(m)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTransformError(
            f"direct transform is not invertible: {exc}"
        ) from exc
    Q = Kernel2D(grid, R / qw[None, :])
    return Q, _evaluate_residuals(Q, lam, +1.0)


def solve_kernel_reflected(lam: float, grid: Grid) -> tuple[Kernel2D, KernelSolveReport]:
    """Reflected form of the direct kernel: +λ sign, zero slope in z at both
    ends. Its solution G satisfies G(L-z, L-x) = -P(x, z)."""
    return _solve_kernel(lam, grid, lam_sign=+1.0, neumann_z=("left", "right"))


def reflection_mismatch(P: Kernel2D, G: Kernel2D) -> float:
    """Relative mismatch between -P(x,z) and G(L-z,L-x) on the tensor grid."""
    n = P.grid.n
    mapped = -P.values
    # G at (x̄, z̄) = (L - z, L - x): index (n-j, n-i)
    g_mapped = G.values[::-1, ::-1].T
    denom = max(float(np.max(np.abs(P.values))), 1e-300)
    return float(np.max(np.abs(mapped - g_mapped)) / denom)


def kernel_slope(K: Kernel2D, variable: str, side: str) -> Field:
    """One-sided second-order edge slope of a kernel: K_z(x,0), K_z(x,L),
    K_x(0,z) or K_x(L,z), as a field over the free variable."""
    h = K.grid.h
    V = K.values if variable == "z" else K.values.T
    if variable not in ("z", "x"):
        raise ConfigurationError(f"variable must be 'x' or 'z', got {variable!r}")
    if side == "left":
        s = (-3.0 * V[:, 0] + 4.0 * V[:, 1] - V[:, 2]) / (2.0 * h)
    elif side == "right":
        s = (3.0 * V[:, -1] - 4.0 * V[:, -2] + V[:, -3]) / (2.0 * h)
    else:
        raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")
    return Field(K.grid, s)


def gain_p(P: Kernel2D) -> Field:
    """Observer injection gain p(x) = P_z(x, 0)."""
    p = kernel_slope(P, "z", "left")
    if p.norm_l2() == 0.0:
        raise DegenerateGainError("observer gain is identically zero")
    return p


def apply_Pi_bar(P: Kernel2D, g: Field) -> Field:
    """Direct transform: (Π̄ g)(x) = g(x) - ∫ P(x,z) g(z) dz."""
    if g.grid != P.grid:
        raise ConfigurationError("field and kernel grids differ")
    qw = quad_weights(P.grid)
    return Field(g.grid, g.values - P.values @ (qw * g.values))


def apply_Pi_bar_inv(Q: Kernel2D, w: Field) -> Field:
    """Inverse transform: (Π̄⁻¹ w)(x) = w(x) + ∫ Q(x,z) w(z) dz."""
    if w.grid != Q.grid:
        raise ConfigurationError("field and kernel grids differ")
    qw = quad_weights(Q.grid)
    return Field(w.grid, w.values + Q.values @ (qw * w.values))


def _transform_matrix(Q: Kernel2D) -> np.ndarray:
    """Symmetrized matrix of Π̄⁻¹ in the quadrature-weighted inner product."""
    qw = quad_weights(Q.grid)
    s = np.sqrt(qw)
    return np.eye(Q.grid.n + 1) + (s[:, None] * Q.values) * s[None, :]


def operator_bounds(Q: Kernel2D, dense_limit: int = 300) -> tuple[float, float]:
    """Extremal squared singular values (c_under, c_bar) of Π̄⁻¹ so that
    c_under‖w‖² ≤ ‖Π̄⁻¹w‖² ≤ c_bar‖w‖² in the discrete L² norm."""
    B = _transform_matrix(Q)
    if Q.grid.n <= dense_limit:
        svals = np.linalg.svd(B, compute_uv=False)
        smax, smin = float(svals[0]), float(svals[-1])
    else:
        # power iteration on BᵀB and inverse iteration for the smallest value
        rng = np.random.default_rng(0)
        v = rng.standard_normal(B.shape[0])
        BtB = B.T @ B
        for _ in range(200):
            v = BtB @ v
            v /= np.linalg.norm(v)
        smax = math.sqrt(float(v @ (BtB @ v)))
        try:
            lu = spla.splu(sp.csc_matrix(BtB))
        except RuntimeError as exc:
            raise DegenerateTransformError(str(exc)) from exc
        v = rng.standard_normal(B.shape[0])
        for _ in range(200):
            v = lu.solve(v)
            v /= np.linalg.norm(v)
        smin = math.sqrt(float(v @ (BtB @ v)))
    if smin < 1e-10:
        raise DegenerateTransformError(
            f"inverse transform nearly singular (sigma_min={smin:.3e})"
        )
    return smin**2, smax**2


def kernel_to_csv(K: Kernel2D, name: str, lam: float, path) -> None:
    """Write a kernel matrix with its one-line identification header."""
    with open(path, "w") as fh:
        fh.write(f"# kernel {name} lambda={format_float(lam)} "
                 f"L={format_float(K.grid.L)} n={K.grid.n}\n")
        for row in K.values:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def kernel_from_csv(path) -> tuple[Kernel2D, str, float]:
    with open(path) as fh:
        header = fh.readline().strip()
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    parts = header.lstrip("# ").split()
    if len(parts) < 5 or parts[0] != "kernel":
        raise ConfigurationError(f"{path}: not a kernel CSV")
    name = parts[1]
    meta = dict(p.split("=", 1) for p in parts[2:])
    lam = float(meta["lambda"])
    grid = Grid(float(meta["L"]), int(meta["n"]))
    return Kernel2D(grid, np.asarray(rows)), name, lam


_SOLVERS = {
    "P": solve_kernel_P,
    "Q": solve_kernel_Q,
    "G": solve_kernel_reflected,
}


def _residual_report(K: Kernel2D, lam: float, name: str) -> KernelSolveReport:
    """Residual report for an already-known kernel (cache loads), identical
    by construction to the report of a fresh solve."""
    return _evaluate_residuals(K, lam, -1.0 if name == "P" else 1.0)


def cached_solve(name: str, lam: float, grid: Grid) -> tuple[Kernel2D, KernelSolveReport]:
    """Solve a kernel, reusing the CSV cache under $KDVF_CACHE_DIR if set."""
    if name not in _SOLVERS:
        raise ConfigurationError(f"unknown kernel {name!r}; expected one of P, Q, G")
    cache_dir = os.environ.get("KDVF_CACHE_DIR")
    path = None
    if cache_dir:
        tag = f"kernel_{name}_lam{format_float(lam)}_L{format_float(grid.L)}_n{grid.n}.csv"
        path = Path(cache_dir) / tag
        if path.is_file():
            K, stored_name, stored_lam = kernel_from_csv(path)
            if stored_name == name and stored_lam == lam and K.grid == grid:
                return K, _residual_report(K, lam, name)
    K, report = _SOLVERS[name](lam, grid)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        kernel_to_csv(K, name, lam, path)
    return K, report
