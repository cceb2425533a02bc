"""Scenario files: flat INI-style run descriptions.

A scenario file has a [scenario] section with the numeric setup and an
[inputs] section with input/initial-condition descriptors:

    [scenario]
    name = linear_regulation
    model = linear
    L = 1.5
    n = 150
    dt = 2e-4
    T = 40
    lambda = 1.0
    k = auto
    r = 0.05
    record_every = 10
    checks = regulation dissipation
    seed = 0
    override_safety = false

    [inputs]
    d1 = sine 0.05
    d2 = zero
    w0 = zero

Descriptors: d1 (distributed, constant in time) is `zero`,
`constant <amp>`, `sine <amp> [<freq>]` for amp·sin(freq·πx/L), or
`file <path>` with one nodal value per line; an optional trailing `norm`
token rescales so the L² norm equals <amp>. d2 (boundary, scalar in time)
is `zero`, `constant <amp>` or `sine <amp> <freq>` for amp·sin(freq·t).
w0 is `zero`, `gaussian <center> <width> <amp>`, `bump <amp>` for
amp·sin²(πx/L), or `file <path>`, again with an optional `norm` token.
A `k` key (number or `auto` = half the admissible gain bound) makes the
run closed loop; without it the run is open loop with d2 as the boundary
input.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import Field, Grid, make_grid
from .kdv import InputSignals

__all__ = ["Scenario", "load_scenario", "bundled_scenarios"]

_MODELS = ("linear", "nonlinear")
_CHECKS = ("dissipation", "regulation", "energy-law", "boundedness")


@dataclass(frozen=True)
class Scenario:
    name: str
    model: str
    L: float
    n: int
    dt: float
    T: float
    lam: float
    k: float | str | None
    r: float
    d1_spec: str
    d2_spec: str
    w0_spec: str
    record_every: int = 1
    checks: tuple[str, ...] = ()
    seed: int = 0
    override_safety: bool = False
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ConfigurationError(
                f"model must be one of {_MODELS}, got {self.model!r}")
        for v, nm in ((self.L, "L"), (self.dt, "dt"), (self.lam, "lambda")):
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{nm} must be positive and finite, got {v}")
        if self.T < 0 or not math.isfinite(self.T):
            raise ConfigurationError(f"T must be nonnegative, got {self.T}")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if isinstance(self.k, str) and self.k != "auto":
            raise ConfigurationError(f"k must be a number or 'auto', got {self.k!r}")
        if isinstance(self.k, float) and not (self.k > 0):
            raise ConfigurationError(f"k must be positive, got {self.k}")
        for c in self.checks:
            if c not in _CHECKS:
                raise ConfigurationError(
                    f"unknown check {c!r}; expected one of {_CHECKS}")

    @property
    def closed_loop(self) -> bool:
        return self.k is not None

    @property
    def nonlinear(self) -> bool:
        return self.model == "nonlinear"

    def build_grid(self) -> Grid:
        return make_grid(self.L, self.n)

    def build_w0(self, grid: Grid) -> Field:
        return _profile_from_spec(self.w0_spec, grid, self.base_dir, kind="w0")

    def build_inputs(self, grid: Grid) -> InputSignals:
        d1_field = _profile_from_spec(self.d1_spec, grid, self.base_dir, kind="d1")
        d1_vals = d1_field.values

        def d1(t: float):
            return d1_vals

        d2 = _scalar_from_spec(self.d2_spec)
        return InputSignals(d1=d1, d2=d2)


def _tokens(spec: str) -> list[str]:
    toks = spec.split()
    if not toks:
        raise ConfigurationError("empty input descriptor")
    return toks


def _maybe_normalize(f: Field, amp: float, toks: list[str]) -> Field:
    if toks and toks[-1] == "norm":
        nrm = f.norm_l2()
        if nrm == 0.0:
            raise ConfigurationError("cannot normalize a zero profile")
        return f * (abs(amp) / nrm * (1.0 if amp >= 0 else -1.0))
    return f


def _profile_from_spec(spec: str, grid: Grid, base: Path, kind: str) -> Field:
    toks = _tokens(spec)
    head = toks[0]
    x = grid.x
    if head == "zero":
        return Field.zeros(grid)
    if head == "constant":
        amp = float(toks[1])
        f = Field(grid, np.full(grid.n + 1, amp))
        return _maybe_normalize(f, amp, toks)
    if head == "sine":
        amp = float(toks[1])
        freq = float(toks[2]) if len(toks) > 2 and toks[2] != "norm" else 1.0
        f = Field(grid, amp * np.sin(freq * np.pi * x / grid.L))
        return _maybe_normalize(f, amp, toks)
    if head == "gaussian":
        center, width, amp = (float(v) for v in toks[1:4])
        prof = amp * np.exp(-((x - center) / width) ** 2)
        # taper to honor the Dirichlet ends exactly
        prof[0] = prof[-1] = 0.0
        f = Field(grid, prof)
        return _maybe_normalize(f, amp, toks)
    if head == "bump":
        amp = float(toks[1])
        f = Field(grid, amp * np.sin(np.pi * x / grid.L) ** 2)
        return _maybe_normalize(f, amp, toks)
    if head == "file":
        path = base / toks[1]
        if not path.is_file():
            raise ConfigurationError(f"{kind} file not found: {path}")
        vals = np.loadtxt(path, ndmin=1)
        return Field(grid, vals)
    raise ConfigurationError(f"unknown {kind} descriptor {head!r}")


def _scalar_from_spec(spec: str):
    toks = _tokens(spec)
    head = toks[0]
    if head == "zero":
        return lambda t: 0.0
    if head == "constant":
        amp = float(toks[1])
        return lambda t: amp
    if head == "sine":
        amp = float(toks[1])
        freq = float(toks[2]) if len(toks) > 2 else 1.0
        return lambda t: amp * math.sin(freq * t)
    raise ConfigurationError(f"unknown d2 descriptor {head!r}")


def load_scenario(path) -> Scenario:
    """Parse and validate a .scn file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"scenario file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    if "scenario" not in cp:
        raise ConfigurationError(f"{path}: missing [scenario] section")
    sc = cp["scenario"]
    inp = cp["inputs"] if "inputs" in cp else {}

    def need(key):
        if key not in sc:
            raise ConfigurationError(f"{path}: missing required key {key!r}")
        return sc[key]

    try:
        k_raw = sc.get("k", None)
        k: float | str | None
        if k_raw is None:
            k = None
        elif k_raw.strip() == "auto":
            k = "auto"
        else:
            k = float(k_raw)
        return Scenario(
            name=sc.get("name", path.stem),
            model=need("model").strip(),
            L=float(need("l")),
            n=int(need("n")),
            dt=float(need("dt")),
            T=float(need("t")),
            lam=float(sc.get("lambda", "1.0")),
            k=k,
            r=float(sc.get("r", "0.0")),
            d1_spec=inp.get("d1", "zero"),
            d2_spec=inp.get("d2", "zero"),
            w0_spec=inp.get("w0", "zero"),
            record_every=int(sc.get("record_every", "1")),
            checks=tuple(sc.get("checks", "").split()),
            seed=int(sc.get("seed", "0")),
            override_safety=sc.get("override_safety", "false").strip().lower()
            in ("true", "1", "yes"),
            base_dir=path.parent,
        )
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def bundled_scenarios() -> dict[str, Path]:
    """Name -> path of the scenarios shipped with the package."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.scn"))}
