"""Benchmark runner: iteration counts and convergence rates over
parameter grids, emitted as CSV or markdown tables.

The test problem is a rotational velocity field with a radial cutoff bump
around the square's center (the bump is 1 inside radius 1/4 and 0 outside
radius 1/2, so the velocity vanishes on the boundary) and the bump itself
as pressure.  Right-hand sides are manufactured so the discrete solution
on each level is the L2 projection of those fields; iteration counts then
measure pure solver behavior, free of discretization error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from dataclasses import dataclass

import numpy as np

from .assembly import (
    ProblemParams,
    TaylorHoodSpace,
    build_system,
    l2_project,
    manufactured_rhs,
)
from .mesh import build_hierarchy
from .multigrid import CycleConfig, Multigrid
from .smoother import SmootherConfig, build_scaling, check_damping_conditions
from .transfer import build_prolongation

BETA_TABLE = [0.0, 1e2, 1e4, 1e6, 1e8, 1e10]
NU_SWEEP = [1, 2, 3, 4, 8, 16]
DEFAULT_MAX_LEVEL = 6


def bump(x, y):
    """Radial cutoff: 1 within r <= 1/4 of the center, 0 for r >= 1/2."""
    r = np.hypot(x - 0.5, y - 0.5)
    return np.clip(2.0 - 4.0 * r, 0.0, 1.0)


def exact_velocity(x, y):
    """Rotational field scaled by the cutoff bump; zero on the boundary."""
    phi = bump(x, y)
    return phi * (y - 0.5), phi * (0.5 - x)


def exact_pressure(x, y):
    return bump(x, y)


@dataclass(frozen=True)
class ExactSolution:
    phi: callable = bump
    velocity: callable = exact_velocity
    pressure: callable = exact_pressure


@dataclass
class ExperimentGrid:
    """Cartesian experiment plan: every (level, beta, config) cell runs one
    measured solve."""

    levels: list[int]
    betas: list[float]
    configs: list[CycleConfig]
    tol: float = 1e-9
    max_iter: int = 200

    def __post_init__(self):
        if not self.levels:
            raise ValueError("experiment grid needs at least one level")
        if not self.betas:
            raise ValueError("experiment grid needs at least one beta")
        if not self.configs:
            raise ValueError("experiment grid needs at least one cycle config")
        if min(self.levels) < 1:
            raise ValueError("solver levels start at 1")


@dataclass
class TableRow:
    level: int
    beta: float
    smoother: str
    nu_pre: int
    nu_post: int
    n: int
    q: float
    converged: bool
    wall_time_ms: float


class _HierarchyCache:
    """Shared meshes, spaces, transfers and per-beta systems for one grid.

    Spaces and transfers are beta-independent; the projected target
    solution per level is too.  Only the velocity block changes with beta.
    """

    def __init__(self, max_level, solution=ExactSolution()):
        self.hierarchy = build_hierarchy(max_level)
        self.spaces = [TaylorHoodSpace(lv) for lv in self.hierarchy.levels]
        self.transfers = [None] + [
            build_prolongation(self.spaces[k - 1], self.spaces[k])
            for k in range(1, len(self.spaces))
        ]
        self.solution = solution
        self._systems = {}
        self._targets = {}

    def systems(self, beta, up_to_level):
        key = beta
        levels = self._systems.setdefault(key, [])
        params = ProblemParams(beta=beta)
        while len(levels) <= up_to_level:
            levels.append(build_system(self.spaces[len(levels)], params))
        return levels[: up_to_level + 1]

    def target(self, level):
        if level not in self._targets:
            self._targets[level] = l2_project(
                self.spaces[level],
                self.solution.velocity,
                self.solution.pressure,
            )
        return self._targets[level]


def run_table(grid: ExperimentGrid, cache=None, progress=None):
    """Run every cell of the grid and collect result rows.

    Deterministic: there is no randomness anywhere in a solve, so repeated
    runs return identical iteration counts and rates.
    """
    cache = cache or _HierarchyCache(max(grid.levels))
    rows = []
    for config in grid.configs:
        for beta in grid.betas:
            for level in grid.levels:
                systems = cache.systems(beta, level)
                u_star, p_star = cache.target(level)
                x_star = systems[level].join(u_star, p_star)
                rhs = manufactured_rhs(systems[level], (u_star, p_star))
                mg = Multigrid(systems, cache.transfers[: level + 1], config)
                start = time.perf_counter()
                report = mg.solve(
                    level, rhs, x_star, tol=grid.tol, max_iter=grid.max_iter
                )
                elapsed_ms = 1e3 * (time.perf_counter() - start)
                row = TableRow(
                    level=level,
                    beta=beta,
                    smoother=config.smoother.kind,
                    nu_pre=config.nu_pre,
                    nu_post=config.nu_post,
                    n=report.n,
                    q=report.q,
                    converged=report.converged,
                    wall_time_ms=elapsed_ms,
                )
                rows.append(row)
                if progress is not None:
                    progress(row)
    return rows


CSV_HEADER = "level,beta,smoother,nu_pre,nu_post,n,q,converged,wall_time_ms"


def _emit_csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for r in rows:
        writer.writerow(
            [
                r.level,
                f"{r.beta:g}",
                r.smoother,
                r.nu_pre,
                r.nu_post,
                r.n,
                f"{r.q:.3f}",
                "true" if r.converged else "false",
                f"{r.wall_time_ms:.1f}",
            ]
        )
    return out.getvalue()


def _cells(row):
    if row.converged:
        return str(row.n), f"{row.q:.3f}"
    return "divergent", ""


def _emit_markdown_levels_by_beta(rows):
    betas = sorted({r.beta for r in rows})
    levels = sorted({r.level for r in rows})
    by_key = {(r.level, r.beta): r for r in rows}
    header = ["k"]
    for b in betas:
        header += [f"beta={b:g} n", "q"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for k in levels:
        cells = [str(k)]
        for b in betas:
            row = by_key.get((k, b))
            cells += list(_cells(row)) if row else ["", ""]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _emit_markdown_nu_sweep(rows):
    nus = sorted({(r.nu_pre, r.nu_post) for r in rows})
    smoothers = []
    for r in rows:
        if r.smoother not in smoothers:
            smoothers.append(r.smoother)
    by_key = {(r.smoother, r.nu_pre, r.nu_post): r for r in rows}
    header = ["smoother"]
    for pre, post in nus:
        header += [f"nu={pre}+{post} n", "q"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]
    for s in smoothers:
        cells = [s]
        for pre, post in nus:
            row = by_key.get((s, pre, post))
            cells += list(_cells(row)) if row else ["", ""]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit(rows, fmt):
    """Render result rows as "csv" or "markdown" text."""
    if fmt == "csv":
        return _emit_csv(rows)
    if fmt != "markdown":
        raise ValueError(f"unknown output format {fmt!r}")
    if not rows:
        return ""
    if len({(r.nu_pre, r.nu_post) for r in rows}) > 1:
        return _emit_markdown_nu_sweep(rows)
    return _emit_markdown_levels_by_beta(rows)


def _smoother_config(name, tau, sigma, scaling):
    kind = {"normal": "normal_equation", "uzawa": "uzawa"}[name]
    return SmootherConfig(
        kind=kind, tau=tau, sigma=sigma, scaling=scaling.replace("-", "_")
    )


def _preset_grid(table, args):
    cycle = {"v": "V", "w": "W", "two-grid": "two_grid"}[args.cycle]
    if table == "nu-sweep":
        level = min(4, args.max_level)
        configs = []
        for name in ("normal", "uzawa"):
            for nu in NU_SWEEP:
                smoother = _smoother_config(name, args.tau, args.sigma,
                                            args.scaling)
                configs.append(
                    CycleConfig(smoother=smoother, cycle=cycle,
                                nu_pre=nu, nu_post=nu)
                )
        return ExperimentGrid(
            levels=[level], betas=[1.0], configs=configs,
            tol=args.tol, max_iter=args.max_iter,
        )
    # beta tables for one smoother over levels 4..max_level
    levels = list(range(min(4, args.max_level), args.max_level + 1))
    smoother = _smoother_config(table, args.tau, args.sigma, args.scaling)
    config = CycleConfig(smoother=smoother, cycle=cycle,
                         nu_pre=args.nu_pre, nu_post=args.nu_post)
    return ExperimentGrid(
        levels=levels, betas=list(BETA_TABLE), configs=[config],
        tol=args.tol, max_iter=args.max_iter,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stokesmg-bench",
        description="Run multigrid iteration-count experiments on the "
        "generalized Stokes problem.",
    )
    parser.add_argument("--table", choices=["nu-sweep", "normal", "uzawa"],
                        help="preset experiment; omit for a single custom run")
    parser.add_argument("--max-level", type=int, default=DEFAULT_MAX_LEVEL,
                        help="finest level (default 6; levels 7-8 are "
                        "expensive and opt-in)")
    parser.add_argument("--beta", default="0",
                        help="comma-separated reaction coefficients")
    parser.add_argument("--smoother", choices=["normal", "uzawa"],
                        default="normal")
    parser.add_argument("--nu-pre", type=int, default=3)
    parser.add_argument("--nu-post", type=int, default=3)
    parser.add_argument("--cycle", choices=["v", "w", "two-grid"], default="w")
    parser.add_argument("--tau", type=float, default=None,
                        help="smoother damping (defaults: 0.35 normal, 0.8 uzawa)")
    parser.add_argument("--sigma", type=float, default=None,
                        help="uzawa pressure damping (default 0.8)")
    parser.add_argument("--scaling", choices=["mass-diag", "natural-diag"],
                        default="natural-diag")
    parser.add_argument("--tol", type=float, default=1e-9)
    parser.add_argument("--max-iter", type=int, default=200)
    parser.add_argument("--format", choices=["csv", "markdown"],
                        default="markdown")
    parser.add_argument("--check-damping", action="store_true",
                        help="report the Uzawa damping-condition margins on "
                        "levels 1-3 before running")
    return parser


def _damping_report(args, out):
    cache = _HierarchyCache(min(3, args.max_level))
    smoother = _smoother_config(args.smoother, args.tau, args.sigma,
                                args.scaling)
    sigma = smoother.sigma if smoother.sigma is not None else smoother.tau
    for beta in (0.0, 1.0, 1e4, 1e10):
        systems = cache.systems(beta, min(3, args.max_level))
        for level, system in enumerate(systems):
            if level == 0:
                continue
            scaling = build_scaling(system, smoother.scaling)
            res = check_damping_conditions(system, scaling, smoother.tau, sigma)
            out.write(
                f"damping level={level} beta={beta:g}: "
                f"tau*lambda_velocity={smoother.tau * res['lambda_velocity']:.3f} "
                f"(ok={res['velocity_ok']}), "
                f"tau*sigma*lambda_schur="
                f"{smoother.tau * sigma * res['lambda_schur']:.3f} "
                f"(ok={res['schur_ok']})\n"
            )


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.check_damping:
        _damping_report(args, sys.stdout)

    if args.table:
        grid = _preset_grid(args.table, args)
    else:
        betas = [float(b) for b in args.beta.split(",") if b.strip()]
        smoother = _smoother_config(args.smoother, args.tau, args.sigma,
                                    args.scaling)
        cycle = {"v": "V", "w": "W", "two-grid": "two_grid"}[args.cycle]
        config = CycleConfig(smoother=smoother, cycle=cycle,
                             nu_pre=args.nu_pre, nu_post=args.nu_post)
        grid = ExperimentGrid(
            levels=[args.max_level], betas=betas, configs=[config],
            tol=args.tol, max_iter=args.max_iter,
        )

    rows = run_table(grid)
    sys.stdout.write(emit(rows, args.format))
    return 2 if any(not r.converged for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())
