#!/usr/bin/env python3
"""
srdist: sub-Riemannian distortion toolkit.

Usage:
  python main.py geodesic      --model heisenberg --from 0,0,0 --to 1,0,0 [--cache]
  python main.py distortion    --model grushin --from 0,0 --covector 1,2 [--times 0.1,0.5,0.9]
  python main.py conjugate     --model heisenberg --from 0,0,0 --covector 1,0,3 [--horizon 4]
  python main.py verify-bound  --model heisenberg --exponent 5 --grid 200x200
  python main.py sharpness     --model grushin --exponent 4.9
  python main.py wbar          [--samples 1000000]
  python main.py exponent-fit  --model htype --from 0,0,0,0,0 --covector 1,0,0,0,1
  python main.py bm            --model grushin --a "box:-2,-1;0,1" --b "box:1,2;0,1"
  python main.py mcp           --model heisenberg --from 0,0,0 --b "box:0.5,1.5;0.5,1.5;0.5,1.5"
  python main.py bbl           --model heisenberg --f "box:0,1;0,1;0,1" --g "box:0,1;0,1;0,1" --p inf
  python main.py ot            --model heisenberg --mu0 a.csv --mu1 b.csv [--t 0.5]
  python main.py interp-check  --model heisenberg --f "box:0,1;0,1;0,1" --g "box:2,3;0,1;0,1"
  python main.py ball-exponent --model grushin --from 0,0
  python main.py probe-cut     --model heisenberg --from 0,0,0 --at 0,0,1
  python main.py selftest      [--json]

Every command accepts --config FILE.toml, --seed, --threads, --output, --format,
--log-level. Settings resolve as defaults < config file < flags.

Exit codes: 0 pass, 1 inequality violated or witness found, 2 usage / config
error, 3 numerical failure.
"""

import argparse
import logging
import sys
from typing import Any, Callable, Sequence

import numpy as np
from pydantic import ValidationError
from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

import config
from errors import InputError, NotFoundError, SRDistError
from formats import (
    dumps,
    envelope,
    load_run_config,
    read_measure_csv,
    resolve_model,
    write_distortion_csv,
    write_jacobi_csv,
    write_measure_csv,
    write_text,
    write_trajectory_csv,
    write_wbar_csv,
)
from models import Covector, DistortionCurve, GridFunction, JacobiMatrixState, ModelSpec, PointState

console = Console(stderr=True)
logger = logging.getLogger("srdist")

_COMMON = ("config", "model", "seed", "threads", "output", "format", "log_level", "func", "command")


# ── helpers ──────────────────────────────────────────────────────────────────


def _floats(value: Any, what: str) -> list[float]:
    """Comma-separated numbers from a flag, or a list from a config file."""
    if isinstance(value, (int, float)):
        return [float(value)]
    try:
        if isinstance(value, str):
            return [float(v) for v in value.split(",") if v.strip()]
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: expected a comma-separated list of numbers, got {value!r}") from exc


def _ints(value: Any, what: str, sep: str = "x") -> list[int]:
    if isinstance(value, str):
        parts = value.lower().split(sep)
    else:
        parts = list(value)
    try:
        return [int(p) for p in parts]
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: expected integers like 200x200, got {value!r}") from exc


def _point(model: ModelSpec, value: Any, what: str) -> PointState:
    if value is None:
        raise InputError(f"{what} is required")
    return PointState(tuple(_floats(value, what)), model)


def _covector(model: ModelSpec, base: PointState, value: Any) -> Covector:
    if value is None:
        raise InputError("--covector is required")
    return Covector(tuple(_floats(value, "--covector")), base)


def _set_spec(value: Any, what: str) -> dict[str, Any]:
    """`box:lo,hi;lo,hi`, `ball:c1,c2,...;r`, `points:a,b;c,d`, or a config-file table."""
    if isinstance(value, dict):
        return value
    if not isinstance(value, str) or ":" not in value:
        raise InputError(f"{what}: expected box:…, ball:… or points:…, got {value!r}")
    kind, _, body = value.partition(":")
    rows = [_floats(row, what) for row in body.split(";") if row.strip()]
    kind = kind.strip().lower()
    if kind == "box":
        return {"box": rows}
    if kind == "ball":
        if len(rows) != 2 or len(rows[1]) != 1:
            raise InputError(f"{what}: ball needs `centre;radius`")
        return {"ball": {"center": rows[0], "radius": rows[1][0]}}
    if kind == "points":
        return {"points": rows}
    raise InputError(f"{what}: unknown set kind {kind!r}")


def _indicator(model: ModelSpec, value: Any, cells: int, what: str) -> GridFunction:
    spec = _set_spec(value, what)
    if "box" not in spec:
        raise InputError(f"{what}: gridded functions are box indicators")
    box_ = np.asarray(spec["box"], dtype=float)
    if box_.shape != (model.dim, 2):
        raise InputError(f"{what}: box needs {model.dim} lo,hi pairs")
    return GridFunction(box_[:, 0], box_[:, 1], np.ones((cells,) * model.dim))


def _exponent_value(value: Any) -> float:
    text = str(value).strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return np.inf
    if text in ("-inf", "-infinity"):
        return -np.inf
    try:
        return float(text)
    except ValueError as exc:
        raise InputError(f"--p: expected a number or inf, got {value!r}") from exc


def _param(args: argparse.Namespace, cfg: config.RunConfig, name: str, default: Any = None) -> Any:
    """Flag value, else [params] entry from the config file, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.params.get(name, default)


def _fmt(v: float | None, digits: int = 6) -> str:
    if v is None:
        return "—"
    return f"{v:.{digits}g}"


def _verdict_text(ok: bool, good: str = "pass", bad: str = "fail") -> Text:
    return Text(good if ok else bad, style="green" if ok else "red")


def _emit(
    cfg: config.RunConfig,
    command: str,
    model: ModelSpec | None,
    grid: Any,
    result: Any,
    csv_writer: Callable[[], str] | None = None,
) -> None:
    fmt = cfg.format or "json"
    if fmt == "csv":
        if csv_writer is None:
            raise InputError(f"`{command}` has no CSV output; use --format json")
        write_text(csv_writer(), cfg.output)
        return
    write_text(dumps(envelope(command, model, cfg.seed, grid, result)), cfg.output)


# ── geodesic ─────────────────────────────────────────────────────────────────


def cmd_geodesic(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from cache import load_solutions, save_solutions
    from flow import integrate_extremal
    from geodesy import inverse_exp

    x = _point(model, _param(args, cfg, "x"), "--from")
    y = _point(model, _param(args, cfg, "y"), "--to")
    starts = int(_param(args, cfg, "starts", config.DEFAULT_STARTS))
    tol = float(_param(args, cfg, "tol", config.NEWTON_TOL))
    use_cache = bool(_param(args, cfg, "cache", False))

    solutions = load_solutions(model, x.coords, y.coords, tol, starts=starts, seed=cfg.seed) if use_cache else None
    if solutions is not None:
        logger.info("geodesic: %d solutions from cache", len(solutions))
    else:
        solutions = inverse_exp(model, x, y, starts=starts, seed=cfg.seed, tol=tol)
        if use_cache:
            save_solutions(model, x.coords, y.coords, tol, solutions, starts=starts, seed=cfg.seed)

    best = next((s for s in solutions if s.minimizing), None)
    if best is None:
        raise NotFoundError("no minimizing solution among the boundary-value solutions", {"solutions": len(solutions)})
    _render_solutions_table(solutions)

    def trajectory() -> str:
        return write_trajectory_csv(integrate_extremal(model, x, Covector(best.covector, x)))

    result = {**_solution_record(best), "from": x.coords, "to": y.coords,
              "solutions": [_solution_record(s) for s in solutions]}
    _emit(cfg, "geodesic", model, {"starts": starts, "tol": tol}, result, trajectory)
    return 0


def _solution_record(s) -> dict[str, Any]:
    return {
        "lambda": s.covector,
        "length": s.length,
        "residual": s.residual,
        "t_cut": s.t_cut,
        "minimizing": s.minimizing,
        "multiple_minimizers": s.multiple_minimizers,
    }


def _render_solutions_table(solutions: list) -> None:
    table = Table(
        title="[bold]Boundary-value solutions[/bold]",
        box=box.ROUNDED,
        header_style="bold magenta",
        title_style="bold white",
    )
    table.add_column("Covector", min_width=30)
    table.add_column("Length", justify="right")
    table.add_column("Residual", justify="right")
    table.add_column("Cut time", justify="right")
    table.add_column("Minimizing", justify="center")
    for s in solutions:
        table.add_row(
            ", ".join(_fmt(c) for c in s.covector),
            _fmt(s.length, 10),
            f"{s.residual:.1e}",
            _fmt(s.t_cut),
            _verdict_text(s.minimizing, "yes" + (" (tie)" if s.multiple_minimizers else ""), "no"),
        )
    console.print(table)


# ── distortion / conjugate / exponent-fit ───────────────────────────────────


def cmd_distortion(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from distortion import beta_reverse, distortion_curve

    x = _point(model, _param(args, cfg, "x"), "--from")
    lam = _covector(model, x, _param(args, cfg, "covector"))
    times = _param(args, cfg, "times")
    times = np.linspace(0.0, 1.0, 11) if times is None else np.asarray(_floats(times, "--times"))
    method = str(_param(args, cfg, "method", "auto"))

    if _param(args, cfg, "reverse", False):
        values = np.array([beta_reverse(model, x, lam, float(t)) for t in times])
        curve = DistortionCurve(model, x.array, lam.array, times, values, "reverse")
    else:
        curve = distortion_curve(model, x, lam, times, method=method)

    _emit(cfg, "distortion", model, {"times": times, "method": curve.method}, curve, lambda: write_distortion_csv(curve))
    return 0


def cmd_conjugate(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from flow import vertical_jacobi
    from geodesy import conjugate_time, cut_time
    from structures import closed_form_for

    x = _point(model, _param(args, cfg, "x"), "--from")
    lam = _covector(model, x, _param(args, cfg, "covector"))
    horizon = float(_param(args, cfg, "horizon", 10.0))

    t_conj = conjugate_time(model, x, lam, horizon)
    t_cut = cut_time(model, lam) if closed_form_for(model) is not None else None

    console.print(Panel(
        f"[bold]Conjugate time:[/bold] [cyan]{_fmt(t_conj, 12)}[/cyan]\n"
        f"[bold]Cut time:[/bold]       [cyan]{_fmt(t_cut, 12)}[/cyan]\n"
        f"[bold]Horizon:[/bold]        {horizon:g}",
        title=f"[bold cyan]{model.label}[/bold cyan]",
        border_style="cyan",
    ))

    def jacobi() -> str:
        times = np.linspace(0.0, horizon, 101)
        M, N = vertical_jacobi(model, x, lam, 0.0, times)
        return write_jacobi_csv([JacobiMatrixState(float(t), m, n) for t, m, n in zip(times, M, N)])

    result = {"conjugate_time": t_conj, "cut_time": t_cut, "horizon": horizon}
    _emit(cfg, "conjugate", model, {"horizon": horizon}, result, jacobi)
    return 0


def cmd_exponent_fit(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from distortion import fit_geodesic_exponent

    x = _point(model, _param(args, cfg, "x"), "--from")
    lam = _covector(model, x, _param(args, cfg, "covector"))
    t_min = float(_param(args, cfg, "t_min", 1e-3))
    t_max = float(_param(args, cfg, "t_max", 1e-1))
    exponent, constant = fit_geodesic_exponent(model, x, lam, t_min, t_max)
    console.print(f"[bold]Fitted geodesic exponent:[/bold] [cyan]{exponent:.6f}[/cyan]  (C = {constant:.6g})")
    _emit(cfg, "exponent-fit", model, {"t_min": t_min, "t_max": t_max, "points": 50},
          {"exponent": exponent, "constant": constant})
    return 0


# ── power bounds ─────────────────────────────────────────────────────────────

_DEFAULT_GRIDS = {"heisenberg": "200x200", "grushin": "20x20x20x50"}


def cmd_verify_bound(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from distortion import verify_power_bound

    N = float(_param(args, cfg, "exponent", 5.0))
    grid = _ints(_param(args, cfg, "grid", _DEFAULT_GRIDS.get(model.kind, "1000x10")), "--grid")
    delta = float(_param(args, cfg, "delta", 1e-3))
    report = verify_power_bound(model, N, grid, seed=cfg.seed, delta=delta, threads=cfg.threads)

    console.print(Panel(
        f"[bold]Samples:[/bold]    {report.samples}\n"
        f"[bold]min β − tᴺ:[/bold] {report.min_gap:.3e}\n"
        f"[bold]min β / tᴺ:[/bold] {report.min_ratio:.6g}\n"
        f"[bold]Violations:[/bold] {report.violation_count}",
        title=f"[bold]β_t ≥ t^{N:g} on {model.label}[/bold]",
        subtitle=report.verdict,
        border_style="green" if report.verdict == "pass" else "red",
    ))
    _emit(cfg, "verify-bound", model, report.grid, report)
    return 0 if report.verdict == "pass" else 1


def cmd_sharpness(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from distortion import sharpness_search

    N_prime = _param(args, cfg, "exponent")
    if N_prime is None:
        raise InputError("--exponent is required")
    delta = float(_param(args, cfg, "delta", 1e-3))
    witness = sharpness_search(model, float(N_prime), delta=delta, seed=cfg.seed)
    if witness is None:
        console.print(f"[green]No witness: β_t ≥ t^{float(N_prime):g} held at every probe.[/green]")
    else:
        console.print(
            f"[red]Witness:[/red] t={witness.t:.6g}  β={witness.beta:.6g} < t^N={witness.power:.6g}  "
            f"[dim]covector {', '.join(_fmt(c) for c in witness.covector)}[/dim]"
        )
    _emit(cfg, "sharpness", model, {"exponent": float(N_prime), "delta": delta}, {"witness": witness})
    return 0 if witness is None else 1


def cmd_wbar(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec | None) -> int:
    from distortion import grushin_proof_chain, taylor_bound, wbar

    samples = int(_param(args, cfg, "samples", 1_000_000))
    if samples < 1:
        raise InputError("--samples must be positive")
    z = np.linspace(0.0, np.pi, samples + 2)[1:-1]
    report = grushin_proof_chain(z)

    table = Table(title="[bold]Grushin inequality chain[/bold]", box=box.ROUNDED, header_style="bold magenta")
    table.add_column("Check", min_width=24)
    table.add_column("Result", justify="center")
    for name, ok in report.checks.items():
        table.add_row(name, _verdict_text(ok))
    console.print(table)
    console.print(f"[dim]min W̄ = {report.min_wbar:.3e}, Taylor root = {report.taylor_root:.6f}[/dim]")

    _emit(cfg, "wbar", None, {"samples": samples, "interval": [0.0, float(np.pi)]}, report,
          lambda: write_wbar_csv(z, wbar(z), taylor_bound(z)))
    return 0 if report.passed else 1


# ── measure checks ───────────────────────────────────────────────────────────


def _render_inequality_table(report) -> None:
    table = Table(
        title=f"[bold]{report.check.upper()} check, N = {report.exponent:g}[/bold]",
        box=box.ROUNDED,
        header_style="bold magenta",
        title_style="bold white",
    )
    table.add_column("t", justify="right")
    table.add_column("LHS", justify="right")
    table.add_column("RHS", justify="right")
    table.add_column("Slack", justify="right")
    table.add_column("Verdict", justify="center")
    for r in report.rows:
        table.add_row(
            _fmt(r.t), _fmt(r.lhs), _fmt(r.rhs), f"{r.slack:+.3f}",
            _verdict_text(r.verdict == "consistent", "consistent", "violated"),
        )
    console.print(table)
    console.print(f"[dim]samples {report.samples} | failure fraction {report.failure_fraction:.2%} | seed {report.seed}[/dim]")


def _t_grid(args: argparse.Namespace, cfg: config.RunConfig) -> list[float]:
    return _floats(_param(args, cfg, "t", [0.25, 0.5, 0.75]), "--t")


def _pitch(args: argparse.Namespace, cfg: config.RunConfig) -> list[float] | None:
    value = _param(args, cfg, "pitch")
    return None if value is None else _floats(value, "--pitch")


def cmd_bm(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from measure import bm_check, sample_set

    count = int(_param(args, cfg, "count", 300))
    A = sample_set(model, _set_spec(_param(args, cfg, "a"), "--a"), count, cfg.seed, cfg.threads)
    B = sample_set(model, _set_spec(_param(args, cfg, "b"), "--b"), count, cfg.seed + 1, cfg.threads)
    N = float(_param(args, cfg, "exponent", 5.0))
    eps = float(_param(args, cfg, "eps", config.EPS_STAT))
    report = bm_check(model, A, B, N, _t_grid(args, cfg), _pitch(args, cfg), cfg.seed, eps, cfg.threads)
    _render_inequality_table(report)
    _emit(cfg, "bm", model, {"A": A.description, "B": B.description, "count": count}, report)
    return 0 if report.verdict == "consistent" else 1


def cmd_mcp(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from measure import mcp_check, sample_set

    x = _point(model, _param(args, cfg, "x"), "--from")
    count = int(_param(args, cfg, "count", 20_000))
    B = sample_set(model, _set_spec(_param(args, cfg, "b"), "--b"), count, cfg.seed, cfg.threads)
    N = float(_param(args, cfg, "exponent", 5.0))
    eps = float(_param(args, cfg, "eps", config.EPS_STAT))
    report = mcp_check(model, x, B, N, _t_grid(args, cfg), _pitch(args, cfg), cfg.seed, eps, cfg.threads)
    _render_inequality_table(report)
    _emit(cfg, "mcp", model, {"x": x.coords, "B": B.description, "count": count}, report)
    return 0 if report.verdict == "consistent" else 1


def cmd_bbl(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from measure import bbl_check

    cells = int(_param(args, cfg, "cells", 12))
    f = _indicator(model, _param(args, cfg, "f"), cells, "--f")
    g = _indicator(model, _param(args, cfg, "g"), cells, "--g")
    t = float(_param(args, cfg, "t", 0.5))
    p = _exponent_value(_param(args, cfg, "p", "inf"))
    N = float(_param(args, cfg, "exponent", 5.0))
    eps = float(_param(args, cfg, "eps", config.EPS_STAT))
    report = bbl_check(model, f, g, t, p, N, _pitch(args, cfg), cfg.seed, eps, cfg.threads)
    _render_inequality_table(report)
    grid = {"f": [f.lo, f.hi], "g": [g.lo, g.hi], "cells": cells, "p": str(p) if np.isinf(p) else p}
    _emit(cfg, "bbl", model, grid, report)
    return 0 if report.verdict == "consistent" else 1


def cmd_ball_exponent(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from measure import fit_ball_exponent
    from structures import nonholonomic_weights

    x = _point(model, _param(args, cfg, "x"), "--from")
    radii = _floats(_param(args, cfg, "radii", [0.4, 0.2, 0.1, 0.05]), "--radii")
    count = int(_param(args, cfg, "count", 20_000))
    slope, vols = fit_ball_exponent(model, x, radii, count, cfg.seed, cfg.threads)
    try:
        weights = list(nonholonomic_weights(model, x))
    except SRDistError:
        weights = None
    console.print(
        f"[bold]Ball exponent:[/bold] [cyan]{slope:.4f}[/cyan]"
        + (f"  [dim](Σ weights = {sum(weights)})[/dim]" if weights else "")
    )
    result = {"exponent": slope, "radii": radii, "volumes": vols, "weights": weights}
    _emit(cfg, "ball-exponent", model, {"radii": radii, "count": count}, result)
    return 0


def cmd_probe_cut(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from geodesy import semiconvexity_probe

    y = _point(model, _param(args, cfg, "x", [0.0] * model.dim), "--from")
    x = _point(model, _param(args, cfg, "at"), "--at")
    radii = _floats(_param(args, cfg, "radii", [1e-1, 1e-2, 1e-3]), "--radii")
    directions = int(_param(args, cfg, "directions", 64))
    rows = semiconvexity_probe(model, y, x, radii, directions)

    table = Table(title="[bold]Second-difference quotient of d²(·, y)[/bold]", box=box.ROUNDED, header_style="bold magenta")
    table.add_column("r", justify="right")
    table.add_column("min quotient", justify="right")
    for r, q in rows:
        table.add_row(f"{r:.1e}", Text(f"{q:.6g}", style="red" if q < -50 else "white"))
    console.print(table)

    result = {"from": y.coords, "at": x.coords, "quotients": [{"r": r, "quotient": q} for r, q in rows]}
    _emit(cfg, "probe-cut", model, {"radii": radii, "directions": directions}, result)
    return 0


# ── transport ────────────────────────────────────────────────────────────────


def cmd_ot(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from transport import cost_matrix, displacement_interpolation, solve_ot

    paths = [_param(args, cfg, "mu0"), _param(args, cfg, "mu1")]
    if None in paths:
        raise InputError("--mu0 and --mu1 are required")
    mu0, mu1 = (read_measure_csv(p, model) for p in paths)
    cost = cost_matrix(model, mu0, mu1, threads=cfg.threads)
    plan = solve_ot(cost, mu0, mu1)
    w2 = float(np.sqrt(max(2.0 * plan.cost, 0.0)))
    console.print(
        f"[bold]Optimal cost:[/bold] [cyan]{plan.cost:.10g}[/cyan]  "
        f"[bold]W₂:[/bold] [cyan]{w2:.10g}[/cyan]  "
        f"[dim]marginal residual {plan.marginal_residual(mu0, mu1):.1e}[/dim]"
    )

    t = _param(args, cfg, "t")
    if t is not None:
        mut = displacement_interpolation(model, plan, mu0, mu1, float(t), threads=cfg.threads)
        result = {"t": float(t), "cost": plan.cost, "w2": w2, "measure": mut}
        _emit(cfg, "ot", model, {"mu0": len(mu0), "mu1": len(mu1), "t": float(t)}, result,
              lambda: write_measure_csv(mut))
        return 0

    result = {"cost": plan.cost, "w2": w2, "coupling": plan.coupling,
              "marginal_residual": plan.marginal_residual(mu0, mu1)}
    _emit(cfg, "ot", model, {"mu0": len(mu0), "mu1": len(mu1)}, result)
    return 0


def cmd_interp_check(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec) -> int:
    from transport import interpolation_density_check

    cells = int(_param(args, cfg, "cells", 6))
    f0 = _indicator(model, _param(args, cfg, "f"), cells, "--f")
    f1 = _indicator(model, _param(args, cfg, "g"), cells, "--g")
    t = float(_param(args, cfg, "t", 0.5))
    N = float(_param(args, cfg, "exponent", 5.0))
    bandwidth = _param(args, cfg, "bandwidth")
    report = interpolation_density_check(
        model, f0, f1, t, N, None if bandwidth is None else float(bandwidth), threads=cfg.threads
    )
    console.print(
        f"[bold]Density check at t={t:g}:[/bold] {report.checked_points} points, "
        f"{report.excluded} excluded, min slack {report.min_slack:.4f} → ",
        _verdict_text(report.verdict == "consistent", "consistent", "violated"),
    )
    _emit(cfg, "interp-check", model, {"f": [f0.lo, f0.hi], "g": [f1.lo, f1.hi], "cells": cells}, report)
    return 0 if report.verdict == "consistent" else 1


# ── selftest / cache ─────────────────────────────────────────────────────────


def cmd_selftest(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec | None) -> int:
    from selftest import run_selftest

    rtol = args.inject_rtol if args.inject_rtol is not None else config.RTOL
    report = run_selftest(seed=cfg.seed, rtol=rtol, atol=min(config.ATOL, rtol))

    table = Table(title="[bold]Self-test[/bold]", box=box.ROUNDED, header_style="bold magenta")
    table.add_column("Check", min_width=20)
    table.add_column("Result", justify="center")
    for name, ok in report.checks.items():
        table.add_row(name, _verdict_text(ok))
    console.print(table)

    if args.json or cfg.format == "json":
        write_text(dumps(envelope("selftest", None, cfg.seed, None, report)), cfg.output)
    return 0 if report.passed else 3


def cmd_cache(args: argparse.Namespace, cfg: config.RunConfig, model: ModelSpec | None) -> int:
    from cache import cache_stats, clear_cache

    if args.clear:
        clear_cache()
        console.print("[green]Cache cleared.[/green]")
        return 0
    stats = cache_stats()
    console.print(Panel(
        f"[bold]Solutions cached:[/bold] [cyan]{stats['solutions']}[/cyan]\n"
        f"[bold]Endpoint pairs:[/bold]   [cyan]{stats['pairs']}[/cyan]\n"
        f"[bold]Oldest entry:[/bold]     {(stats['oldest_entry'] or '—')[:19]}\n"
        f"[bold]Newest entry:[/bold]     {(stats['newest_entry'] or '—')[:19]}\n"
        f"[bold]DB location:[/bold]      [dim]{stats['db_path']}[/dim]",
        title="[bold cyan]Geodesic Cache[/bold cyan]",
        border_style="cyan",
    ))
    return 0


# ── entry point ───────────────────────────────────────────────────────────────


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, metavar="FILE", help="TOML run config (overridden by flags)")
    common.add_argument("--model", default=None, help="Built-in model name or .toml model file (default: heisenberg)")
    common.add_argument("--seed", type=int, default=None, help=f"Random seed (default: {config.DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None, metavar="K",
                        help="Worker cap (default: $SRDIST_THREADS, else 1)")
    common.add_argument("--output", default=None, metavar="PATH", help="Write the artifact here instead of stdout")
    common.add_argument("--format", choices=["csv", "json"], default=None, help="Artifact format (default: json)")
    common.add_argument("--log-level", default=None, help="Logging level (default: $SRDIST_LOG_LEVEL or WARNING)")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Numerics for sub-Riemannian geodesics, distortion coefficients and curvature-dimension checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    def add(name: str, func, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    def add_base(p: argparse.ArgumentParser, covector: bool = True) -> None:
        p.add_argument("--from", dest="x", default=None, metavar="X", help="Base point, e.g. 0,0,0")
        if covector:
            p.add_argument("--covector", default=None, metavar="L", help="Initial covector, e.g. 1,0,3")

    # geodesic
    p = add("geodesic", cmd_geodesic, "Solve exp_x(λ) = y; report distance and all solutions")
    add_base(p, covector=False)
    p.add_argument("--to", dest="y", default=None, metavar="Y", help="End point")
    p.add_argument("--starts", type=int, default=None, help=f"Halton starts (default: {config.DEFAULT_STARTS})")
    p.add_argument("--tol", type=float, default=None, help=f"Newton residual tolerance (default: {config.NEWTON_TOL})")
    p.add_argument("--cache", action="store_true", default=None, help="Reuse / store solutions in the SQLite cache")

    # distortion
    p = add("distortion", cmd_distortion, "Distortion coefficient β_t along a geodesic")
    add_base(p)
    p.add_argument("--times", default=None, help="Comma-separated t values in [0, 1] (default: 0, 0.1, …, 1)")
    p.add_argument("--method", choices=["auto", "closed", "numeric"], default=None)
    p.add_argument("--reverse", action="store_true", default=None, help="β_{1−t}(y, x) instead of β_t(x, y)")

    # conjugate
    p = add("conjugate", cmd_conjugate, "First conjugate time (and cut time when known)")
    add_base(p)
    p.add_argument("--horizon", type=float, default=None, help="Search window (0, T] (default: 10)")

    # verify-bound
    p = add("verify-bound", cmd_verify_bound, "Check β_t ≥ t^N over a parameter grid")
    p.add_argument("--exponent", type=float, default=None, help="N (default: 5)")
    p.add_argument("--grid", default=None, help="Counts per axis, e.g. 200x200 or 20x20x20x50")
    p.add_argument("--delta", type=float, default=None, help="Margin from the cut band (default: 1e-3)")

    # sharpness
    p = add("sharpness", cmd_sharpness, "Search for β_t < t^N′; exit 1 when a witness is found")
    p.add_argument("--exponent", type=float, default=None, help="N′ (required)")
    p.add_argument("--delta", type=float, default=None)

    # wbar
    p = add("wbar", cmd_wbar, "Sample the Grushin inequality chain on (0, π)")
    p.add_argument("--samples", type=int, default=None, help="Uniform sample count (default: 10⁶)")

    # exponent-fit
    p = add("exponent-fit", cmd_exponent_fit, "Fit β_t ≈ C t^N for small t")
    add_base(p)
    p.add_argument("--t-min", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)

    # bm / mcp / bbl
    p = add("bm", cmd_bm, "Monte-Carlo Brunn–Minkowski check")
    p.add_argument("--a", default=None, help="Set A, e.g. box:0,1;0,1;0,1")
    p.add_argument("--b", default=None, help="Set B")
    p.add_argument("--count", type=int, default=None, help="Samples per set (default: 300)")
    p.add_argument("--exponent", type=float, default=None, help="N (default: 5)")
    p.add_argument("--t", default=None, help="Comma-separated t grid (default: 0.25,0.5,0.75)")
    p.add_argument("--pitch", default=None, help="Grid pitch, scalar or per axis")
    p.add_argument("--eps", type=float, default=None, help=f"Statistical slack (default: {config.EPS_STAT})")

    p = add("mcp", cmd_mcp, "Monte-Carlo measure contraction check")
    add_base(p, covector=False)
    p.add_argument("--b", default=None, help="Set B, e.g. box:1,2;0,1")
    p.add_argument("--count", type=int, default=None, help="Samples in B (default: 20000)")
    p.add_argument("--exponent", type=float, default=None)
    p.add_argument("--t", default=None)
    p.add_argument("--pitch", default=None)
    p.add_argument("--eps", type=float, default=None)

    p = add("bbl", cmd_bbl, "p-mean (Borell–Brascamp–Lieb) check for box indicators")
    p.add_argument("--f", default=None, help="Box carrying f")
    p.add_argument("--g", default=None, help="Box carrying g")
    p.add_argument("--cells", type=int, default=None, help="Grid cells per axis (default: 12)")
    p.add_argument("--p", default=None, help="Mean exponent, number or inf (default: inf)")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--exponent", type=float, default=None)
    p.add_argument("--pitch", default=None)
    p.add_argument("--eps", type=float, default=None)

    # ot / interp-check
    p = add("ot", cmd_ot, "Exact discrete optimal transport for the cost ½d²")
    p.add_argument("--mu0", default=None, metavar="CSV", help="Source measure (q1..qn,weight)")
    p.add_argument("--mu1", default=None, metavar="CSV", help="Target measure")
    p.add_argument("--t", type=float, default=None, help="Also emit the displacement interpolation at t")

    p = add("interp-check", cmd_interp_check, "Density interpolation inequality along optimal transport")
    p.add_argument("--f", default=None, help="Box carrying the source density")
    p.add_argument("--g", default=None, help="Box carrying the target density")
    p.add_argument("--cells", type=int, default=None, help="Grid cells per axis (default: 6)")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--exponent", type=float, default=None)
    p.add_argument("--bandwidth", type=float, default=None, help="Kernel bandwidth (default: 2× pitch)")

    # ball-exponent / probe-cut
    p = add("ball-exponent", cmd_ball_exponent, "Fit log μ(B_r(x)) against log r")
    add_base(p, covector=False)
    p.add_argument("--radii", default=None, help="Comma-separated radii (default: 0.4,0.2,0.1,0.05)")
    p.add_argument("--count", type=int, default=None)

    p = add("probe-cut", cmd_probe_cut, "Semiconvexity quotient of d²(·, y) near a point")
    add_base(p, covector=False)
    p.add_argument("--at", default=None, help="Probe point x")
    p.add_argument("--radii", default=None, help="Strictly decreasing radii (default: 1e-1,1e-2,1e-3)")
    p.add_argument("--directions", type=int, default=None)

    # selftest / cache
    p = add("selftest", cmd_selftest, "Run the fast acceptance subset")
    p.add_argument("--json", action="store_true", help="Machine-readable summary on stdout")
    p.add_argument("--inject-rtol", type=float, default=None, help=argparse.SUPPRESS)

    p = add("cache", cmd_cache, "Inspect or clear the geodesic cache")
    p.add_argument("--clear", action="store_true", help="Delete all cached solutions")

    return parser


def _settings(args: argparse.Namespace) -> config.RunConfig:
    data: dict[str, Any] = load_run_config(args.config) if args.config else {}
    for key in ("model", "seed", "output", "format", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if "threads" not in data:
        data["threads"] = config.resolve_threads()
    cfg = config.RunConfig(**data)

    known = set(vars(args)) - set(_COMMON)
    unknown = set(cfg.params) - known
    if unknown:
        raise InputError(f"unknown [params] keys for `{args.command}`: {sorted(unknown)}")
    return cfg


def _setup_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or config.SRDIST_LOG_LEVEL).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _report_failure(args: argparse.Namespace, cfg: config.RunConfig | None, name: str, message: str,
                    exit_code: int, diagnostics: dict[str, Any]) -> int:
    console.print(f"[red]Error ({name}):[/red] {message}")
    if diagnostics:
        logger.info("diagnostics: %s", diagnostics)
    if cfg is not None and (cfg.format or "json") == "json":
        record = {"error": name, "message": message, "exit_code": exit_code, "diagnostics": diagnostics}
        write_text(dumps(envelope(args.command, None, cfg.seed, None, record)), cfg.output)
    return exit_code


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        _setup_logging(args.log_level)
    except ValueError:
        console.print(f"[red]Error:[/red] unknown log level {args.log_level!r}")
        return 2

    cfg = None
    try:
        cfg = _settings(args)
        needs_model = args.command not in ("wbar", "selftest", "cache")
        model = resolve_model(cfg.model) if needs_model else None
        return args.func(args, cfg, model)
    except ValidationError as exc:
        console.print(f"[red]Invalid configuration:[/red]\n{exc}")
        return 2
    except SRDistError as exc:
        return _report_failure(args, cfg, type(exc).__name__, str(exc), exc.exit_code, exc.diagnostics)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.debug("unhandled numerical error", exc_info=exc)
        return _report_failure(args, cfg, type(exc).__name__, str(exc), 3, {})


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
