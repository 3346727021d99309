"""Command-line front end: parameter sweeps, convergence tables, reports.

A run covers one benchmark over a grid of penalty parameters and refinement
levels, records errors, energies, duality gaps (where a dual certificate is
available), iteration counts and wall times, and writes a delimited table.
When a report path is given, rate and gap figures are rendered next to it.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import checks, fem, functionals, problems, solvers
from .functionals import PenaltyParams, dual_energy, primal_energy, problem_data
from .mesh import side_topology, structured_mesh

NAN = float("nan")

CSV_HEADER = "experiment,level,N,h,gamma,c_alpha,r,error,eoc,energy,gap,iters,seconds"

OBSTACLE_FEAS_TOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One sweep: benchmark name, level range, and parameter overrides.

    Unset overrides fall back to the benchmark's catalog grid or the
    mesh-size rules (``eps = h``, ``eps_stop = h/100`` for the denoising
    flow, increment tolerance ``h`` for the active-set solver).  ``seed``
    only affects the randomized self-test subcommand.
    """

    experiment: str
    levels: Optional[Sequence[int]] = None
    gammas: Optional[Sequence[float]] = None
    c_alphas: Optional[Sequence[float]] = None
    rs: Optional[Sequence[float]] = None
    jump: Optional[str] = None
    c_beta: float = 0.0
    sigma: float = 0.0
    s: float = 2.0
    eps: Optional[float] = None
    tau: float = 1.0
    eps_stop: Optional[float] = None
    max_iters: Optional[int] = None
    out: Optional[str] = None
    timing: bool = True
    verbose: bool = False
    seed: int = 0x5EED

    def resolve(self):
        """Fill defaults from the catalog and type-check the overrides."""
        try:
            case = problems.case_by_name(self.experiment)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        levels = self.levels if self.levels is not None else list(case.levels)
        levels = [int(v) for v in levels]
        if len(levels) == 0:
            raise ConfigError("level range is empty")
        if any(v < 1 for v in levels):
            raise ConfigError("levels must be >= 1")
        gammas = _float_list("gamma", self.gammas, case.gammas)
        c_alphas = _float_list("c_alpha", self.c_alphas, case.c_alphas)
        if any(c <= 0.0 for c in c_alphas):
            raise ConfigError("c_alpha values must be positive")
        if any(g < 0.0 for g in gammas):
            raise ConfigError("gamma values must be nonnegative")
        rs = _float_list("r", self.rs, case.rs)
        allowed = set(case.rs)
        bad = [r for r in rs if r not in allowed]
        if bad:
            raise ConfigError(
                f"exponent r={bad[0]:g} is not supported by experiment "
                f"{case.name!r} (allowed: {sorted(allowed)})"
            )
        jump = self.jump if self.jump is not None else case.jump
        if jump not in ("mean", "full"):
            raise ConfigError(f"unknown jump variant {jump!r}")
        if self.c_beta < 0.0:
            raise ConfigError("c_beta must be nonnegative")
        if self.c_beta > 0.0 and self.s != 2.0:
            raise ConfigError("average penalties are assembled for s = 2 only")
        if self.s < 1.0:
            raise ConfigError("s must be at least 1")
        if self.tau <= 0.0:
            raise ConfigError("tau must be positive")
        if self.eps is not None and self.eps <= 0.0:
            raise ConfigError("eps must be positive")
        if self.eps_stop is not None and self.eps_stop <= 0.0:
            raise ConfigError("eps_stop must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        return case, levels, gammas, c_alphas, rs, jump


def _float_list(name, override, default):
    if override is None:
        return [float(v) for v in default]
    try:
        vals = [float(v) for v in override]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} overrides must be numbers") from None
    if not vals:
        raise ConfigError(f"{name} override list is empty")
    return vals


@dataclass
class ResultRow:
    experiment: str
    level: int
    n_elements: int
    h: float
    gamma: float
    c_alpha: float
    r: float
    error: float = NAN
    eoc: float = NAN
    energy: float = NAN
    gap: float = NAN
    iters: int = 0
    seconds: float = NAN
    ok: bool = True
    reason: str = ""


class _LevelContext:
    """Mesh, side topology, and discretized data shared by one level's cells."""

    def __init__(self, case, level):
        self.level = level
        self.mesh = structured_mesh(case.domain, level)
        self.sides = side_topology(self.mesh, case.spec.dirichlet)
        self.data = problem_data(case.spec, self.mesh, self.sides)
        self.h = self.sides.h_max
        self._raw_dual = None
        self._case = case

    def raw_dual(self):
        if self._raw_dual is None and self._case.exact_dual is not None:
            self._raw_dual = fem.rt_interpolate(
                self._case.exact_dual, self.mesh, self.sides, degree=7, subdiv=2
            )
        return self._raw_dual


def _run_cell(case, ctx, gamma, c_alpha, r, jump, config):
    spec = case.spec
    params = PenaltyParams(
        r=r,
        s=config.s,
        c_alpha=c_alpha,
        gamma=gamma,
        c_beta=config.c_beta,
        sigma=config.sigma,
    )
    t0 = time.perf_counter()
    if case.name == "poisson":
        u, rep = solvers.solve_poisson(
            ctx.mesh, ctx.sides, params, ctx.data.f_bar, jump=jump
        )
        error = problems.error_norms(
            case.exact,
            u,
            ctx.mesh,
            case.selector,
            exact_gradient=case.exact_gradient,
            sides=ctx.sides,
        )
        gap = NAN
        if jump == "mean" and params.c_beta == 0.0:
            z, _ = functionals.reconstruct_dual(spec, u, ctx.sides, params)
            gap = functionals.duality_gap(spec, u, z, ctx.sides, params, variant=jump)
    elif case.name == "tv":
        eps = config.eps if config.eps is not None else ctx.h
        u, rep = solvers.solve_tv(
            ctx.mesh,
            ctx.sides,
            params,
            ctx.data.g_bar,
            fidelity=spec.fidelity,
            eps=eps,
            tau=config.tau,
            eps_stop=config.eps_stop if config.eps_stop is not None else ctx.h / 100.0,
            max_iters=config.max_iters if config.max_iters is not None else 500,
            jump=jump,
        )
        error = problems.error_norms(
            case.exact,
            u,
            ctx.mesh,
            case.selector,
            cut_radius=spec.cut_radius,
            sides=ctx.sides,
        )
        zc = checks.tv_scaled(ctx.raw_dual(), ctx.sides, params)
        I = primal_energy(spec, u, ctx.sides, params, variant=jump, eps=eps)
        D = dual_energy(spec, zc, ctx.sides, params)
        gap = I - D
    else:
        u_hom, rep = solvers.solve_obstacle(
            ctx.mesh,
            ctx.sides,
            params,
            ctx.data.f_bar,
            ctx.data.chi_bar,
            u_dirichlet=ctx.data.ud,
            tol=config.eps_stop if config.eps_stop is not None else ctx.h,
            max_iters=config.max_iters if config.max_iters is not None else 100,
            jump=jump,
        )
        u_full = u_hom + ctx.data.ud
        error = problems.error_norms(
            case.exact,
            u_full,
            ctx.mesh,
            case.selector,
            cut_radius=spec.cut_radius,
            sides=ctx.sides,
        )
        I = primal_energy(spec, u_hom, ctx.sides, params, variant=jump)
        D = dual_energy(spec, ctx.raw_dual(), ctx.sides, params, feas_tol=OBSTACLE_FEAS_TOL)
        gap = I - D
    seconds = time.perf_counter() - t0
    return {
        "error": float(error),
        "energy": float(rep.energy),
        "gap": float(gap),
        "iters": int(rep.iterations),
        "seconds": seconds,
        "reason": "" if rep.converged else rep.reason,
    }


def thread_cap():
    env = os.environ.get("DGDUAL_THREADS")
    if env is None:
        return 1
    try:
        v = int(env)
    except ValueError:
        raise ConfigError("DGDUAL_THREADS must be an integer") from None
    return max(1, v)


def run_convergence(config):
    """Run the sweep and return rows in level-major, grid order."""
    case, levels, gammas, c_alphas, rs, jump = config.resolve()
    combos = [(g, c, r) for g in gammas for c in c_alphas for r in rs]
    threads = thread_cap()
    cells = {}
    for level in sorted(levels):
        ctx = _LevelContext(case, level)

        def cell(combo):
            gamma, c_alpha, r = combo
            base = ResultRow(
                experiment=case.name,
                level=ctx.level,
                n_elements=ctx.mesh.n_triangles,
                h=ctx.h,
                gamma=gamma,
                c_alpha=c_alpha,
                r=r,
            )
            try:
                out = _run_cell(case, ctx, gamma, c_alpha, r, jump, config)
            except Exception as exc:
                base.ok = False
                base.reason = f"{type(exc).__name__}: {exc}"
                return base
            base.error = out["error"]
            base.energy = out["energy"]
            base.gap = out["gap"]
            base.iters = out["iters"]
            base.seconds = out["seconds"]
            base.reason = out["reason"]
            return base

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(cell, combos))
        else:
            rows = [cell(combo) for combo in combos]
        for combo, row in zip(combos, rows):
            cells[(level, combo)] = row

    for combo in combos:
        prev = None
        for level in sorted(levels):
            row = cells[(level, combo)]
            if prev is not None and math.isfinite(prev) and math.isfinite(row.error):
                if prev > 0.0 and row.error > 0.0:
                    row.eoc = math.log2(prev / row.error)
            prev = row.error
    return [cells[(level, combo)] for level in sorted(levels) for combo in combos]


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def emit_csv(rows, target, timing=True, verbose=False):
    """Write the table; 12 significant digits, fixed column order."""
    header = CSV_HEADER + (",reason" if verbose else "")
    lines = [header]
    for row in rows:
        cells = [
            row.experiment,
            str(row.level),
            str(row.n_elements),
            _fmt(row.h),
            _fmt(row.gamma),
            _fmt(row.c_alpha),
            _fmt(row.r),
            _fmt(row.error),
            _fmt(row.eoc),
            _fmt(row.energy),
            _fmt(row.gap),
            str(row.iters),
            _fmt(row.seconds) if timing else "",
        ]
        if verbose:
            cells.append(row.reason)
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def _render_figures(rows, out_path, case_name):
    from . import plots

    stem, _ = os.path.splitext(out_path)
    made = [
        plots.convergence_figure(
            rows, stem + "_rates.png", title=f"{case_name}: error vs N"
        )
    ]
    if any(math.isfinite(r.gap) and r.gap > 0 for r in rows):
        made.append(
            plots.gap_figure(rows, stem + "_gaps.png", title=f"{case_name}: duality gap")
        )
    return made


def run_selftest(seed=0x5EED, stream=None, quick=True):
    """Randomized identity and weak-duality suites; returns a process code."""
    out = stream if stream is not None else sys.stdout
    rng = np.random.default_rng(seed)
    failures = 0

    def report(name, worst, tol):
        nonlocal failures
        good = worst <= tol
        if not good:
            failures += 1
        out.write(f"{name:<52s} {'ok' if good else 'FAIL'}  worst={worst:.3e}\n")

    for level in (2, 3):
        mesh = structured_mesh((0.0, 1.0, 0.0, 1.0), level)
        sides = side_topology(mesh)
        n = 30 if quick else 100
        worst = checks.ibp_trials(rng, mesh, sides, n)
        report(f"integration by parts, level {level} ({n} pairs)", worst, 1e-12)
        worst = checks.jump_product_trials(rng, mesh, sides, 10)
        report(f"side trace-product identity, level {level}", worst, 1e-12)

    ineq, tight = checks.fenchel_trials(rng, 300 if quick else 1000)
    report("conjugate inequality (random points)", ineq, 1e-12)
    report("conjugate tightness (derivative pairs)", tight, 1e-12)

    for case in problems.catalog():
        mesh = structured_mesh(case.domain, 2)
        sides = side_topology(mesh, case.spec.dirichlet)
        r = case.rs[0]
        params = PenaltyParams(r=r, s=2.0, c_alpha=case.c_alphas[0], gamma=1.0)
        stats = checks.weak_duality_trials(
            case.spec, mesh, sides, params, rng, 60 if quick else 250
        )
        report(
            f"weak duality, {case.name} ({stats.trials} pairs)",
            max(0.0, -stats.min_scaled_gap),
            1e-12,
        )
    return 0 if failures == 0 else 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_levels(text):
    parts = text.split("..")
    if len(parts) != 2:
        raise ConfigError("levels must be given as A..B")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise ConfigError("levels must be given as A..B with integers") from None
    if hi < lo:
        raise ConfigError("empty level range")
    return list(range(lo, hi + 1))


def cli(argv=None):
    parser = _Parser(
        prog="dgdual",
        description="Convergence studies for penalized broken-polynomial "
        "approximations of three nonsmooth variational problems.",
    )
    parser.add_argument(
        "command", choices=["poisson", "tv", "obstacle", "selftest"]
    )
    parser.add_argument("--levels", default=None, help="refinement range A..B")
    parser.add_argument("--gamma", nargs="+", type=float, default=None)
    parser.add_argument("--c-alpha", nargs="+", type=float, default=None)
    parser.add_argument("--r", nargs="+", type=float, default=None)
    parser.add_argument("--jump", choices=["mean", "full"], default=None)
    parser.add_argument("--out", default=None, help="CSV path; figures go next to it")
    parser.add_argument("--no-timing", action="store_true")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--seed", type=lambda s: int(s, 0), default=0x5EED)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.command == "selftest":
        return run_selftest(seed=args.seed)

    try:
        levels = _parse_levels(args.levels) if args.levels is not None else None
        config = RunConfig(
            experiment=args.command,
            levels=levels,
            gammas=args.gamma,
            c_alphas=args.c_alpha,
            rs=args.r,
            jump=args.jump,
            out=args.out,
            timing=not args.no_timing,
            verbose=args.verbose,
            seed=args.seed,
        )
        config.resolve()
    except ConfigError as exc:
        sys.stderr.write(f"dgdual: error: {exc}\n")
        return 1

    try:
        rows = run_convergence(config)
    except ConfigError as exc:
        sys.stderr.write(f"dgdual: error: {exc}\n")
        return 1
    if config.out is None:
        emit_csv(rows, sys.stdout, timing=config.timing, verbose=config.verbose)
    else:
        emit_csv(rows, config.out, timing=config.timing, verbose=config.verbose)
        _render_figures(rows, config.out, config.experiment)
    return 0 if all(r.ok for r in rows) else 2
