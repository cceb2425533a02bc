"""Command-line entry points.

    kdvf run <scenario.scn> [--out-dir DIR]
    kdvf verify <suite|all>
    kdvf kernel --lambda V --length V --n N --out DIR
    kdvf equilibrium --model M --length V --n N --k V --r V [--d-amp V]

Exit codes: 0 all requested checks pass, 2 checks failed, 3 blow-up,
4 configuration error, 5 critical length refused.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BlowUpError,
    ConfigurationError,
    CriticalLengthError,
    InsufficientDataError,
    KdvfError,
    NonContractionError,
    PreconditionError,
)
from .grid import Field, boundary_slope, make_grid
from .forwarding import (
    closed_loop_simulate,
    linear_equilibrium,
    nonlinear_equilibrium,
    regulation_diagnostics,
)
from .kdv import KdvParams, simulate
from .kernels import cached_solve, gain_p, kernel_to_csv
from .lyapunov import check_dissipation, compute_constants
from .scenario import Scenario, load_scenario
from .series import TimeSeries, format_float
from .verify import run_suite, suite_names

EXIT_OK = 0
EXIT_CHECKS = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4
EXIT_CRITICAL = 5


def _check_energy_law(ser: TimeSeries, lines: list[str]) -> bool:
    t, E, y = ser.t, ser.column("E"), ser.column("y")
    if len(t) < 2:
        lines.append("[FAIL] energy-law: not enough recorded steps")
        return False
    res = np.abs(np.diff(E) / np.diff(t) + y[:-1] ** 2)
    tol = 1e-3 * max(float(E[0]), 1.0)
    frac = float(np.mean(res <= tol))
    ok = frac >= 0.99
    lines.append(f"[{'pass' if ok else 'FAIL'}] energy-law: "
                 f"fraction {frac:.4f} within tol {tol:.1e}, max {res.max():.3e}")
    return ok


def _check_boundedness(ser: TimeSeries, lines: list[str]) -> bool:
    E = ser.column("E")
    ok = bool(np.all(np.isfinite(E))) and not ser.truncated
    lines.append(f"[{'pass' if ok else 'FAIL'}] boundedness: "
                 f"max E {E.max():.3e}, truncated {ser.truncated}")
    return ok


def _check_dissipation(scenario: Scenario, ser: TimeSeries, lines: list[str]) -> bool:
    if scenario.closed_loop:
        vf = ser.column("V_full")
        dv = np.diff(vf)
        viol = int(np.sum(dv > 1e-10 * np.abs(vf[:-1])))
        ok = viol == 0
        lines.append(f"[{'pass' if ok else 'FAIL'}] dissipation: closed-loop "
                     f"functional increases at {viol} of {len(dv)} intervals")
        return ok
    grid = ser.grid if ser.grid is not None else scenario.build_grid()
    P, _ = cached_solve("P", scenario.lam, grid)
    Q, _ = cached_solve("Q", scenario.lam, grid)
    consts = compute_constants(scenario.lam, Q, gain_p(P))
    inputs = scenario.build_inputs(grid)
    rep = check_dissipation(ser, consts, inputs, slack=0.05, Q=Q, quantity="V")
    ok = rep.pass_fraction >= 0.99
    lines.append(f"[{'pass' if ok else 'FAIL'}] dissipation: pass fraction "
                 f"{rep.pass_fraction:.4f}, worst margin {rep.worst_margin:.3e}")
    return ok


def _check_regulation(scenario: Scenario, ser: TimeSeries, lines: list[str]) -> bool:
    e = ser.column("e")
    tol = 5e-3 if scenario.nonlinear else 1e-3
    ok1 = abs(float(e[-1])) < tol
    lines.append(f"[{'pass' if ok1 else 'FAIL'}] regulation tracking: "
                 f"|e(T)| = {abs(float(e[-1])):.3e} (tol {tol:.0e})")
    rep = regulation_diagnostics(ser)
    ok2 = (rep.x_fit is not None and rep.x_fit.rate > 0
           and rep.x_fit.r_squared > 0.9)
    det = ("no fit" if rep.x_fit is None
           else f"rate {rep.x_fit.rate:.4f}, r^2 {rep.x_fit.r_squared:.4f}")
    lines.append(f"[{'pass' if ok2 else 'FAIL'}] regulation X-distance decay: {det}")
    return ok1 and ok2


def _run_scenario(scenario: Scenario, out_dir: Path) -> int:
    lines = [f"scenario: {scenario.name}", f"model: {scenario.model}"]
    need_snaps = "dissipation" in scenario.checks and not scenario.closed_loop
    if scenario.closed_loop:
        ser = closed_loop_simulate(scenario, snapshots=False)
    else:
        grid = scenario.build_grid()
        params = KdvParams(grid, scenario.dt, nonlinear=scenario.nonlinear)
        inputs = scenario.build_inputs(grid)
        w0 = scenario.build_w0(grid)
        ser = simulate(w0, params, inputs, scenario.T,
                       record_every=scenario.record_every, snapshots=need_snaps)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{scenario.name}.csv"
    ser.to_csv(csv_path)
    if ser.truncated:
        lines.append("[FAIL] run truncated by blow-up")
        _write_report(out_dir, scenario.name, lines)
        print("\n".join(lines))
        return EXIT_BLOWUP
    all_ok = True
    for check in scenario.checks:
        if check == "energy-law":
            all_ok &= _check_energy_law(ser, lines)
        elif check == "boundedness":
            all_ok &= _check_boundedness(ser, lines)
        elif check == "dissipation":
            all_ok &= _check_dissipation(scenario, ser, lines)
        elif check == "regulation":
            all_ok &= _check_regulation(scenario, ser, lines)
    lines.append(f"result: {'ok' if all_ok else 'checks failed'}")
    _write_report(out_dir, scenario.name, lines)
    print("\n".join(lines))
    return EXIT_OK if all_ok else EXIT_CHECKS


def _write_report(out_dir: Path, name: str, lines: list[str]):
    with open(out_dir / f"{name}.report.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    return _run_scenario(scenario, Path(args.out_dir))


def _cmd_verify(args) -> int:
    names = suite_names() if args.suite == "all" else [args.suite]
    all_ok = True
    for name in names:
        result = run_suite(name)
        print(f"suite {result.name}: {'pass' if result.passed else 'FAIL'}")
        for line in result.lines:
            print(line)
        all_ok &= result.passed
    return EXIT_OK if all_ok else EXIT_CHECKS


def _cmd_kernel(args) -> int:
    grid = make_grid(args.length, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("P", "Q", "G"):
        K, rep = cached_solve(name, args.lam, grid)
        path = out / f"kernel_{name}.csv"
        kernel_to_csv(K, name, args.lam, path)
        print(f"{name}: interior residual {format_float(rep.interior_residual)}, "
              f"diagonal consistency {format_float(rep.diag_consistency)} -> {path}")
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    grid = make_grid(args.length, args.n)
    d = Field(grid, args.d_amp * np.sin(np.pi * grid.x / grid.L))
    if args.model == "linear":
        eq = linear_equilibrium(d, args.r, args.k, grid)
    else:
        eq = nonlinear_equilibrium(d, args.r, args.k, grid)
    print(f"eta_inf = {format_float(eq.eta_inf)}")
    print(f"residual = {format_float(eq.residual)}")
    print(f"iterations = {eq.iterations}")
    print(f"w_inf_slope_L = {format_float(boundary_slope(eq.w_inf, 'right'))}")
    if args.out:
        np.savetxt(args.out, eq.w_inf.values, fmt="%.17g")
        print(f"profile -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kdvf", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out-dir", default=".")
    p_run.set_defaults(fn=_cmd_run)

    p_ver = sub.add_parser("verify", help="run a verification suite")
    p_ver.add_argument("suite", help="suite name or 'all'")
    p_ver.set_defaults(fn=_cmd_verify)

    p_ker = sub.add_parser("kernel", help="solve and export the kernels")
    p_ker.add_argument("--lambda", dest="lam", type=float, required=True)
    p_ker.add_argument("--length", "--L", dest="length", type=float, required=True)
    p_ker.add_argument("--n", type=int, required=True)
    p_ker.add_argument("--out", required=True)
    p_ker.set_defaults(fn=_cmd_kernel)

    p_eq = sub.add_parser("equilibrium", help="solve a closed-loop equilibrium")
    p_eq.add_argument("--model", choices=("linear", "nonlinear"), required=True)
    p_eq.add_argument("--length", "--L", dest="length", type=float, required=True)
    p_eq.add_argument("--n", type=int, required=True)
    p_eq.add_argument("--k", type=float, required=True)
    p_eq.add_argument("--r", type=float, default=0.0)
    p_eq.add_argument("--d-amp", type=float, default=0.0)
    p_eq.add_argument("--out", default=None)
    p_eq.set_defaults(fn=_cmd_equilibrium)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        code = args.fn(args)
    except CriticalLengthError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        code = EXIT_CRITICAL
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        code = EXIT_BLOWUP
    except (ConfigurationError, PreconditionError, InsufficientDataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except NonContractionError as exc:
        print(f"non-contraction: {exc}", file=sys.stderr)
        code = EXIT_CHECKS
    except KdvfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CHECKS
    return code


if __name__ == "__main__":
    sys.exit(main())
