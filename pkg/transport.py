"""Discrete optimal transport for the cost ½ d², displacement interpolation and density checks.

Plans are solved exactly with POT's network simplex (ot.emd); supports are
desk-scale (≤ 512 atoms per side).
"""

import logging

import numpy as np
import ot

import config
from errors import InputError, NotFoundError, NumericalFailure
from flow import exp_batch
from geodesy import PairSolutions, minimizing_covectors
from models import DensityCheckReport, DiscreteMeasure, GridFunction, ModelSpec, TransportPlan
from structures import frame_for

logger = logging.getLogger(__name__)

MAX_SUPPORT = 512
_MERGE_TOL = 1e-12
_PLAN_FLOOR = 1e-15


def _pair_solutions(model: ModelSpec, X: np.ndarray, Y: np.ndarray, threads: int) -> PairSolutions:
    sol = minimizing_covectors(model, X, Y, threads=threads)
    if not sol.ok.all():
        bad = np.nonzero(~sol.ok)[0]
        raise NotFoundError(
            f"{bad.size} boundary-value problems without a minimizing solution",
            diagnostics={"first_pairs": [(X[i].tolist(), Y[i].tolist()) for i in bad[:5]]},
        )
    return sol


def cost_matrix(model: ModelSpec, mu0: DiscreteMeasure, mu1: DiscreteMeasure, threads: int = 1) -> np.ndarray:
    """C[i, j] = ½ d²(x_i, y_j)."""
    K0, K1 = len(mu0), len(mu1)
    ia, ib = np.meshgrid(np.arange(K0), np.arange(K1), indexing="ij")
    X, Y = mu0.support[ia.ravel()], mu1.support[ib.ravel()]
    sol = _pair_solutions(model, X, Y, threads)
    return frame_for(model).hamiltonian(X, sol.covectors).reshape(K0, K1)


def solve_ot(cost: np.ndarray, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> TransportPlan:
    cost = np.asarray(cost, dtype=float)
    if len(mu0) > MAX_SUPPORT or len(mu1) > MAX_SUPPORT:
        raise InputError(f"supports are limited to {MAX_SUPPORT} atoms")
    if cost.shape != (len(mu0), len(mu1)):
        raise InputError(f"cost matrix shape {cost.shape} does not match supports ({len(mu0)}, {len(mu1)})")
    coupling, log = ot.emd(
        np.ascontiguousarray(mu0.weights), np.ascontiguousarray(mu1.weights), np.ascontiguousarray(cost),
        numItermax=1_000_000, log=True,
    )
    if log.get("warning"):
        raise NumericalFailure(f"network simplex did not terminate cleanly: {log['warning']}")
    return TransportPlan(coupling=coupling, cost=float(np.sum(coupling * cost)))


def _merge(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum the mass of points that agree within _MERGE_TOL (max-norm)."""
    order = np.lexsort(points.T[::-1])
    points, weights = points[order], weights[order]
    keep_pts, keep_w = [points[0]], [weights[0]]
    for p, w in zip(points[1:], weights[1:]):
        if np.max(np.abs(p - keep_pts[-1])) <= _MERGE_TOL:
            keep_w[-1] += w
        else:
            keep_pts.append(p)
            keep_w.append(w)
    return np.array(keep_pts), np.array(keep_w)


def displacement_interpolation(
    model: ModelSpec,
    plan: TransportPlan,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    t: float,
    threads: int = 1,
) -> DiscreteMeasure:
    """Push every coupled atom to the t-point of its minimizing geodesic."""
    if not 0 <= t <= 1:
        raise InputError("t must lie in [0, 1]")
    ia, ib = np.nonzero(plan.coupling > _PLAN_FLOOR)
    mass = plan.coupling[ia, ib]
    mass = mass / mass.sum()
    X, Y = mu0.support[ia], mu1.support[ib]
    multiple = 0
    if t == 0:
        pts = X
    elif t == 1:
        pts = Y
    else:
        sol = _pair_solutions(model, X, Y, threads)
        multiple = int(sol.multiple.sum())
        if multiple:
            logger.warning("%d coupled pairs have competing minimizers; routed by the lexicographic tie-break", multiple)
        pts = exp_batch(model, X, sol.covectors, float(t))
    support, weights = _merge(pts, mass)
    return DiscreteMeasure(support, weights, diagnostics={"multiple_minimizers": multiple, "pairs": int(ia.size)})


def wasserstein2(model: ModelSpec, mu0: DiscreteMeasure, mu1: DiscreteMeasure, threads: int = 1) -> float:
    plan = solve_ot(cost_matrix(model, mu0, mu1, threads), mu0, mu1)
    return float(np.sqrt(max(2.0 * plan.cost, 0.0)))


# ── density check ─────────────────────────────────────────────────────────────


def _atoms(f: GridFunction, density: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(atoms, weights, ρ) of the normalised density carried by f."""
    centres = f.centres()
    vals = f.values.ravel()
    keep = vals > 0
    mass = f.integral(density)
    weights = vals[keep] * density[keep] * np.prod(f.pitch)
    return centres[keep], weights / weights.sum(), vals[keep] / mass


def _lookup(f: GridFunction, mass: float, pts: np.ndarray) -> np.ndarray:
    idx = np.floor((pts - f.lo) / f.pitch).astype(int)
    idx = np.clip(idx, 0, np.asarray(f.values.shape) - 1)
    return f.values[tuple(idx.T)] / mass


def epanechnikov_density(query: np.ndarray, atoms: np.ndarray, weights: np.ndarray, bandwidth: np.ndarray) -> np.ndarray:
    """Product Epanechnikov kernel estimate Σ w_k Π_a K((z_a − y_a)/b_a)/b_a."""
    u = (query[:, None, :] - atoms[None, :, :]) / bandwidth
    k = np.where(np.abs(u) < 1, 0.75 * (1 - u * u), 0.0) / bandwidth
    return np.einsum("qk,k->q", np.prod(k, axis=2), weights)


def interpolation_density_check(
    model: ModelSpec,
    f0: GridFunction,
    f1: GridFunction,
    t: float,
    N_bound: float,
    bandwidth: float | None = None,
    slack: float = config.DENSITY_SLACK,
    threads: int = 1,
) -> DensityCheckReport:
    """Check 1/ρ_t^{1/n} ≥ ((1−t)^N/ρ_0)^{1/n} + (t^N/ρ_1)^{1/n} at transported atoms, with a kernel ρ_t."""
    n = model.dim
    if f0.lo.size != n or f1.lo.size != n:
        raise InputError(f"densities must live on {n}-dimensional grids")
    if not 0 < t < 1:
        raise InputError("t must lie in (0, 1)")
    frame = frame_for(model)
    d0, d1 = frame.density(f0.centres()), frame.density(f1.centres())
    mass0, mass1 = f0.integral(d0), f1.integral(d1)
    if mass0 <= 0 or mass1 <= 0:
        raise InputError("densities need positive mass")
    pts0, w0, rho0 = _atoms(f0, d0)
    pts1, w1, _ = _atoms(f1, d1)
    mu0, mu1 = DiscreteMeasure(pts0, w0), DiscreteMeasure(pts1, w1)

    pitch = np.minimum(f0.pitch, f1.pitch)
    b = np.full(n, 2.0) * pitch if bandwidth is None else np.full(n, float(bandwidth))
    if np.any(b <= pitch):
        raise InputError("bandwidth must exceed the grid pitch")

    cost = cost_matrix(model, mu0, mu1, threads)
    plan = solve_ot(cost, mu0, mu1)
    target = np.argmax(plan.coupling, axis=1)
    X, Y = pts0, pts1[target]
    sol = _pair_solutions(model, X, Y, threads)
    excluded = sol.multiple
    Z = exp_batch(model, X, sol.covectors, float(t))

    mut = displacement_interpolation(model, plan, mu0, mu1, t, threads)
    rho_t = epanechnikov_density(Z, mut.support, mut.weights, b) / frame.density(Z)
    rho1 = _lookup(f1, mass1, Y)

    use = ~excluded & (rho_t > 0) & (rho1 > 0)
    lhs = rho_t[use] ** (-1.0 / n)
    rhs = ((1 - t) ** N_bound / rho0[use]) ** (1.0 / n) + (t**N_bound / rho1[use]) ** (1.0 / n)
    ratio = lhs / rhs
    min_slack = float(ratio.min()) if ratio.size else float("nan")
    if excluded.mean() > 0.01:
        logger.warning("%.1f%% of atoms excluded as cut pairs", 100 * excluded.mean())
    verdict = "consistent" if ratio.size and min_slack >= slack else "violated"
    return DensityCheckReport(float(t), int(use.sum()), int(excluded.sum()), min_slack, verdict)
