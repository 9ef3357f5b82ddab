"""Command-line front end: ``igatwo <solve|rate|lfa|reproduce> [options]``.

Every command writes CSV (header row first) to ``--out`` or stdout. Options
can also come from a ``key = value`` file given by ``--config``; command-line
flags take precedence. Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 a reproduced value is outside its tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from . import reference as ref
from .assembly import assemble_load, l2_error
from .exceptions import NumericalError, ParameterError
from .lfa import VARIANTS, LfaReport, build_torus_problem, spectral_factor
from .smoothers import COLOURINGS
from .solver import STRATEGIES, TwoLevelConfig, build_hierarchy, default_block_size, estimate_asymptotic_rate, solve
from .spline_core import SplineSpace2D, identity_square, preset_quarter_annulus

__all__ = ["RunConfig", "ResultTable", "main", "run_solve", "run_rate", "run_lfa", "run_reproduce"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DELTA = 0, 1, 2, 3

ANNULUS_RADII = (0.3, 0.5)
STRATEGY_ALIASES = {"aggressive": "aggressive+vcycle"}
LFA_ALIASES = {"two-grid": "two-grid", "three-grid": "three-grid", "aggressive": "two-grid-aggressive"}
LFA_TABLE_VARIANT = {1: "two-grid", 2: "three-grid", 3: "two-grid-aggressive"}

SOLVE_HEADER = ["preset", "p", "m", "block", "strategy", "iterations", "rel_residual", "wall_time", "l2_error"]
RATE_HEADER = ["preset", "p", "m", "block", "strategy", "rho_h", "rho_2g", "delta"]
LFA_HEADER = ["variant", "p", "p_low", "block", "n", "rho", "residual", "converged"]
REPRODUCE_HEADER = ["table", "quantity", "p", "block", "m", "value", "reference", "delta", "ok"]

DEFAULTS = {
    "preset": "square",
    "p": 2,
    "m": 64,
    "block": None,
    "coarse": None,
    "colouring": None,
    "seed": 0,
    "n_torus": 48,
    "tol": 1e-4,
    "variant": "two-grid",
    "table": 1,
    "scale": "desk",
    "sweeps": 40,
    "max_iterations": 100,
    "timings": True,
    "out": None,
}
_INT_KEYS = {"p", "m", "block", "seed", "n_torus", "table", "sweeps", "max_iterations"}
_FLOAT_KEYS = {"tol"}
_BOOL_KEYS = {"timings"}


class ConfigError(ParameterError):
    """A command-line or config-file value is invalid."""


@dataclass
class RunConfig:
    command: str
    preset: str = "square"
    p: int = 2
    m: int = 64
    block: int | None = None
    coarse: str | None = None
    colouring: str | None = None
    seed: int = 0
    n_torus: int = 48
    tol: float = 1e-4
    variant: str = "two-grid"
    table: int = 1
    scale: str = "desk"
    sweeps: int = 40
    max_iterations: int = 100
    timings: bool = True
    out: str | None = None
    degrees: list[int] | None = None

    @property
    def p_low(self) -> int:
        return 1 if self.preset == "square" else 2

    @property
    def block_size(self) -> int:
        return self.block or default_block_size(self.p)

    def validate(self) -> RunConfig:
        if self.preset not in ("square", "annulus"):
            raise ConfigError(f"preset: expected square or annulus, got {self.preset!r}")
        if not 1 <= self.p <= 8:
            raise ConfigError(f"p: expected 1..8, got {self.p}")
        if self.preset == "annulus" and self.p < 3:
            raise ConfigError("p: the annulus preset needs p >= 3 (coarse degree 2)")
        if self.preset == "square" and self.command in ("solve", "rate") and self.p < 2:
            raise ConfigError("p: the square preset needs p >= 2 (coarse degree 1)")
        if self.block is not None and self.block not in (9, 25, 49):
            raise ConfigError(f"block: expected 9, 25 or 49, got {self.block}")
        if self.m < 2:
            raise ConfigError(f"m: expected at least 2, got {self.m}")
        if self.coarse is not None:
            self.coarse = STRATEGY_ALIASES.get(self.coarse, self.coarse)
            if self.coarse not in STRATEGIES:
                raise ConfigError(f"coarse: expected one of {STRATEGIES + tuple(STRATEGY_ALIASES)}")
        if self.colouring is not None and self.colouring not in COLOURINGS:
            raise ConfigError(f"colouring: expected one of {COLOURINGS}, got {self.colouring!r}")
        if self.variant not in LFA_ALIASES:
            raise ConfigError(f"variant: expected one of {tuple(LFA_ALIASES)}")
        if self.table not in range(1, 6):
            raise ConfigError(f"table: expected 1..5, got {self.table}")
        if self.scale not in ("desk", "full"):
            raise ConfigError(f"scale: expected desk or full, got {self.scale!r}")
        if self.n_torus % 6 or self.n_torus < 6:
            raise ConfigError(f"n-torus: expected a positive multiple of 6, got {self.n_torus}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tol: expected a value in (0, 1), got {self.tol}")
        if self.sweeps < 30:
            raise ConfigError(f"sweeps: expected at least 30, got {self.sweeps}")
        return self


@dataclass
class ResultTable:
    header: list[str]
    rows: list[list] = field(default_factory=list)
    caption: str = ""
    failed: bool = False

    def add(self, row):
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} fields, header has {len(self.header)}")
        self.rows.append(list(row))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            return "nan"
        return f"{float(v):.4g}"
    return str(v)


# problem data ---------------------------------------------------------------


def square_exact(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def square_rhs(x, y):
    return 2.0 * np.pi**2 * square_exact(x, y)


def annulus_exact(x, y, r=ANNULUS_RADII[0], R=ANNULUS_RADII[1]):
    q = x * x + y * y
    return square_exact(x, y) * (q - r * r) * (q - R * R)


def annulus_rhs(x, y, r=ANNULUS_RADII[0], R=ANNULUS_RADII[1]):
    """``-Laplace`` of :func:`annulus_exact`, written out with the product rule."""
    s = square_exact(x, y)
    q = x * x + y * y
    g = (q - r * r) * (q - R * R)
    gq = 2.0 * q - r * r - R * R
    grad_dot = 2.0 * np.pi * gq * (
        x * np.cos(np.pi * x) * np.sin(np.pi * y) + y * np.sin(np.pi * x) * np.cos(np.pi * y)
    )
    return 2.0 * np.pi**2 * s * g - 2.0 * grad_dot - s * (8.0 * q + 4.0 * gq)


def problem(preset: str):
    """Geometry, right-hand side and exact solution of a preset."""
    if preset == "square":
        return identity_square(), square_rhs, square_exact
    return preset_quarter_annulus(*ANNULUS_RADII), annulus_rhs, annulus_exact


def _solver_config(cfg: RunConfig, default_strategy: str, default_colouring: str) -> TwoLevelConfig:
    return TwoLevelConfig(
        p=cfg.p,
        p_low=cfg.p_low,
        block_size=cfg.block_size,
        coarse_strategy=cfg.coarse or default_strategy,
        colouring=cfg.colouring or default_colouring,
        seed=cfg.seed,
        max_iterations=cfg.max_iterations,
    )


# commands -------------------------------------------------------------------


def solve_case(preset, p, m, strategy, block=None, seed=0, colouring="three-colour", max_iterations=100):
    """Solve one preset problem; returns ``(SolveReport, l2_error)``."""
    geom, f, u = problem(preset)
    tcfg = TwoLevelConfig(
        p=p, p_low=1 if preset == "square" else 2, block_size=block, coarse_strategy=strategy,
        colouring=colouring, seed=seed, max_iterations=max_iterations,
    )
    space = SplineSpace2D.uniform(p, m)
    hier = build_hierarchy(tcfg, space, geom)
    report = solve(hier, assemble_load(space, geom, f))
    return report, l2_error(space, geom, report.x, u)


def run_solve(cfg: RunConfig) -> ResultTable:
    tcfg = _solver_config(cfg, "aggressive+vcycle", "three-colour")
    report, err = solve_case(
        cfg.preset, cfg.p, cfg.m, tcfg.coarse_strategy, tcfg.block_size, cfg.seed, tcfg.colouring, cfg.max_iterations
    )
    table = ResultTable(SOLVE_HEADER, caption="solve")
    table.add([
        cfg.preset, cfg.p, cfg.m, tcfg.block_size, tcfg.coarse_strategy, report.iterations,
        f"{report.relative_residual:.3e}", f"{report.wall_time:.2f}" if cfg.timings else None, f"{err:.3e}",
    ])
    table.failed = not report.converged
    return table


def measure_rate(preset, p, m, block=None, strategy="direct", colouring="lex", seed=0, sweeps=40) -> float:
    geom = problem(preset)[0]
    tcfg = TwoLevelConfig(
        p=p, p_low=1 if preset == "square" else 2, block_size=block, coarse_strategy=strategy,
        colouring=colouring, seed=seed,
    )
    return estimate_asymptotic_rate(build_hierarchy(tcfg, SplineSpace2D.uniform(p, m), geom), sweeps)


def lfa_case(variant, p, block, p_low=1, n=48, tol=1e-4, colouring="lex") -> LfaReport:
    n = max(n, 6 * (2 * p + 1))
    return spectral_factor(build_torus_problem(p, p_low, block, variant, n=n, colouring=colouring), tol)


def run_rate(cfg: RunConfig) -> ResultTable:
    tcfg = _solver_config(cfg, "direct", "lex")
    rho = measure_rate(cfg.preset, cfg.p, cfg.m, tcfg.block_size, tcfg.coarse_strategy, tcfg.colouring, cfg.seed, cfg.sweeps)
    rho_2g = delta = None
    if cfg.preset == "square" and tcfg.coarse_strategy == "direct":
        rho_2g = lfa_case("two-grid", cfg.p, tcfg.block_size, 1, cfg.n_torus, cfg.tol, tcfg.colouring).radius
        delta = rho - rho_2g
    table = ResultTable(RATE_HEADER, caption="rate")
    table.add([cfg.preset, cfg.p, cfg.m, tcfg.block_size, tcfg.coarse_strategy, rho, rho_2g, delta])
    return table


def run_lfa(cfg: RunConfig) -> ResultTable:
    variant = LFA_ALIASES[cfg.variant]
    table = ResultTable(LFA_HEADER, caption=f"lfa {variant}")
    if cfg.degrees:
        cells = [(p, b) for p in cfg.degrees for b in ((cfg.block,) if cfg.block else ref.BLOCKS)]
    else:
        cells = [(cfg.p, cfg.block_size)]
    for p, b in cells:
        r = lfa_case(variant, p, b, cfg.p_low, cfg.n_torus, cfg.tol, cfg.colouring or "lex")
        table.add([variant, p, r.p_low, b, r.n, r.radius, f"{r.residual:.1e}", r.converged])
    return table


def _check(table: ResultTable, tid, quantity, p, block, m, value, reference, tol):
    delta = None if value is None or reference is None else value - reference
    ok = delta is not None and np.isfinite(delta) and abs(delta) <= tol + 1e-12
    if reference is not None and not ok:
        table.failed = True
    table.add([tid, quantity, p, block, m, value, reference, delta, ok])


def run_reproduce(cfg: RunConfig, progress=None) -> ResultTable:
    """Regenerate one reference table next to its reference values."""
    tid = cfg.table
    table = ResultTable(REPRODUCE_HEADER, caption=f"table {tid}")
    seen = set(cfg.degrees or range(2, 9))
    if tid in ref.FACTOR_TABLES:
        variant = LFA_TABLE_VARIANT[tid]
        for p in range(2, 9):
            if p not in seen:
                continue
            for b in ref.BLOCKS:
                try:
                    rho = lfa_case(variant, p, b, 1, cfg.n_torus, cfg.tol).radius
                except (ParameterError, ArithmeticError):
                    rho = None
                _check(table, tid, variant, p, b, None, rho, ref.FACTOR_TABLES[tid][p, b], ref.FACTOR_TOLERANCE)
                if tid == 1:
                    try:
                        rho_h = measure_rate("square", p, 64, b, "direct", "lex", cfg.seed, cfg.sweeps)
                    except (ParameterError, ArithmeticError):
                        rho_h = None
                    _check(table, tid, "rho_h", p, b, 64, rho_h, ref.RHO_H[p, b], ref.FACTOR_TOLERANCE)
                    _check(table, tid, "rho_h-rho_2g", p, b, 64, rho_h, rho, ref.FACTOR_TOLERANCE)
                if progress:
                    progress(table.rows[-1])
        return table
    meshes = (ref.DESK_MESHES if cfg.scale == "desk" else ref.FULL_MESHES)[tid]
    if tid == 4:
        for m in meshes:
            for p in range(2, 9):
                if p not in seen:
                    continue
                try:
                    it = solve_case("square", p, m, "aggressive+vcycle", seed=cfg.seed)[0].iterations
                except (ParameterError, ArithmeticError):
                    it = None
                _check(table, tid, "iterations", p, default_block_size(p), m, it, ref.SQUARE_ITERATIONS[p, m], ref.ITERATION_TOLERANCE)
                if progress:
                    progress(table.rows[-1])
        return table
    for m in meshes:
        for p in range(3, 9):
            if p not in seen:
                continue
            for col, strategy in (("DS", "direct"), ("MG", "aggressive+vcycle")):
                try:
                    it = solve_case("annulus", p, m, strategy, seed=cfg.seed)[0].iterations
                except (ParameterError, ArithmeticError):
                    it = None
                _check(table, tid, f"iterations-{col}", p, default_block_size(p), m, it, ref.ANNULUS_ITERATIONS[p, m, col], ref.ITERATION_TOLERANCE)
                if progress:
                    progress(table.rows[-1])
    return table


# argument handling ------------------------------------------------------------


def read_config_file(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config: line {n} is not key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"config: unknown key {key!r} on line {n}")
        out[key] = _convert(key, value)
    return out


def _convert(key, value):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r}") from exc
    if key in _BOOL_KEYS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot parse {value!r} as a boolean")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="igatwo", description="Two-level Schwarz solver for spline discretizations of the Poisson problem.")
    ap.add_argument("command", choices=["solve", "rate", "lfa", "reproduce"])
    ap.add_argument("--config", help="key = value file; flags override it")
    ap.add_argument("--preset", choices=["square", "annulus"])
    ap.add_argument("--p", type=int, help="fine spline degree")
    ap.add_argument("--degrees", help="comma-separated degrees (lfa sweeps, reproduce subsets)")
    ap.add_argument("--m", type=int, help="subintervals per direction")
    ap.add_argument("--block", type=int, choices=[9, 25, 49], help="Schwarz block size")
    ap.add_argument("--coarse", help="direct | vcycle | aggressive | aggressive+vcycle | aggressive+direct")
    ap.add_argument("--colouring", choices=list(COLOURINGS))
    ap.add_argument("--variant", choices=list(LFA_ALIASES), help="lfa variant")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--n-torus", dest="n_torus", type=int, help="torus extent for lfa")
    ap.add_argument("--tol", type=float, help="power-iteration tolerance for lfa")
    ap.add_argument("--sweeps", type=int, help="cycles for the rate estimate")
    ap.add_argument("--max-iterations", dest="max_iterations", type=int)
    ap.add_argument("--table", type=int, choices=range(1, 6))
    ap.add_argument("--scale", choices=["desk", "full"])
    ap.add_argument("--no-timings", dest="timings", action="store_const", const=False, default=None,
                    help="leave wall-time fields empty (byte-identical reruns)")
    ap.add_argument("--out", help="CSV output path (default stdout)")
    return ap


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = dict(DEFAULTS)
    if args.config:
        values.update(read_config_file(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    degrees = None
    if args.degrees:
        try:
            degrees = sorted({int(s) for s in args.degrees.split(",") if s.strip()})
        except ValueError as exc:
            raise ConfigError(f"degrees: cannot parse {args.degrees!r}") from exc
    return RunConfig(command=args.command, degrees=degrees, **values).validate()


COMMANDS = {"solve": run_solve, "rate": run_rate, "lfa": run_lfa, "reproduce": run_reproduce}


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        table = COMMANDS[cfg.command](cfg)
    except ParameterError as exc:
        print(f"igatwo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"igatwo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    text = table.to_csv()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.command == "reproduce" and table.failed:
        return EXIT_DELTA
    if cfg.command == "solve" and table.failed:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
