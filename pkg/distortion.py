"""Distortion coefficients β_t(x, y) and the power-law bounds β_t ≥ t^N.

Along the geodesic t ↦ exp_x(tλ),

    β_t(x, y) = det N^V_0(t) / det N^V_0(1) · ρ(γ(t)) / ρ(γ(1)),

and the reverse coefficient uses J^V_1 normalised at time 0. Determinants go
through slogdet so tiny-t ratios do not underflow. Closed forms exist for the
Heisenberg group and the Grushin plane; every other model is numeric.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

import config
from errors import CapabilityError, DomainError, InputError
from flow import propagate, vertical_jacobi
from geodesy import map_chunks
from models import (
    BoundReport,
    BoundViolation,
    Covector,
    DiagonalReport,
    DiagonalRow,
    DistortionCurve,
    ModelSpec,
    PointState,
    ProofChainReport,
    coords_of,
)
from structures import closed_form_for, frame_for, nonholonomic_weights
from structures import htype as htype_structure
from structures.special import generalized_sine

logger = logging.getLogger(__name__)

CLOSED_TOL = 1e-12      # admissible β_t − t^N undershoot for closed forms
NUMERIC_TOL = 1e-8      # same, when β comes from the variational flow
_MAX_VIOLATIONS = 100


def _check_t(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise InputError("t must lie in [0, 1]")
    return t


def _require_in_cut(model: ModelSpec, X: np.ndarray, L: np.ndarray) -> None:
    closed = closed_form_for(model)
    if closed is not None and not np.all(closed.in_domain(X, L)):
        raise DomainError("covector is not strictly inside the cut-time domain at horizon 1")


# ── coefficients ──────────────────────────────────────────────────────────────


def beta_closed(model: ModelSpec, x: PointState, lam: Covector, t: float) -> float:
    closed = closed_form_for(model)
    if closed is None:
        raise CapabilityError(f"no closed-form distortion coefficient for {model.label}")
    X, L = coords_of(model, x)[None], coords_of(model, lam)[None]
    _require_in_cut(model, X, L)
    return float(closed.beta(X, L, _check_t(t))[0])


def beta_numeric_batch(model: ModelSpec, X: np.ndarray, L: np.ndarray, times, **tols) -> np.ndarray:
    """β at each time for many lanes: shape (K, B)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    X, L = np.broadcast_arrays(X, L)
    times = np.atleast_1d(_check_t(times))
    nb, n = X.shape
    M0 = np.broadcast_to(np.eye(n), (nb, n, n)).copy()
    grid = np.append(times, 1.0)
    Q, _, _, N = propagate(model, X, L, grid, M0, np.zeros((nb, n, n)), **tols)
    sign, logdet = np.linalg.slogdet(N)
    if np.any(sign[-1] == 0):
        raise DomainError("N^V_0(1) is singular: the endpoint is conjugate")
    frame = frame_for(model)
    rho = np.stack([frame.density(q) for q in Q])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = sign[:-1] * sign[-1] * np.exp(logdet[:-1] - logdet[-1]) * rho[:-1] / rho[-1]
    return np.where(sign[:-1] == 0, 0.0, ratio)


def beta_numeric(model: ModelSpec, x: PointState, lam: Covector, t: float) -> float:
    X, L = coords_of(model, x)[None], coords_of(model, lam)[None]
    _require_in_cut(model, X, L)
    t = float(_check_t(t))
    if t == 1.0:
        return 1.0
    return float(beta_numeric_batch(model, X, L, [t])[0, 0])


def beta_reverse(model: ModelSpec, x: PointState, lam: Covector, t: float) -> float:
    """β_{1−t}(y, x) = det N^V_1(t) / det N^V_1(0) · ρ(γ(t)) / ρ(γ(0))."""
    X, L = coords_of(model, x)[None], coords_of(model, lam)[None]
    _require_in_cut(model, X, L)
    t = float(_check_t(t))
    if t == 0.0:
        return 1.0
    _, N = vertical_jacobi(model, X[0], L[0], 1.0, [t, 0.0])
    s_t, l_t = np.linalg.slogdet(N[0])
    s_0, l_0 = np.linalg.slogdet(N[1])
    if s_0 == 0:
        raise DomainError("N^V_1(0) is singular: the endpoints are conjugate")
    Q, _, _, _ = propagate(model, X, L, [t])
    rho = frame_for(model).density(np.concatenate([Q[0], X]))
    return float(s_t * s_0 * np.exp(l_t - l_0) * rho[0] / rho[1])


def distortion_curve(model: ModelSpec, x: PointState, lam: Covector, times: Sequence[float], method: str = "auto") -> DistortionCurve:
    X, L = coords_of(model, x)[None], coords_of(model, lam)[None]
    _require_in_cut(model, X, L)
    times = _check_t(np.asarray(times, dtype=float))
    closed = closed_form_for(model)
    if method == "auto":
        method = "closed" if closed is not None else "numeric"
    if method == "closed":
        if closed is None:
            raise CapabilityError(f"no closed-form distortion coefficient for {model.label}")
        values = closed.beta(np.repeat(X, times.size, axis=0), np.repeat(L, times.size, axis=0), times)
    elif method == "numeric":
        values = beta_numeric_batch(model, X, L, times)[:, 0]
    else:
        raise InputError(f"unknown method {method!r}; expected closed, numeric or auto")
    return DistortionCurve(model, X[0], L[0], times, values, method)


def beta_riemannian(K: float, n: int, t, theta: float) -> np.ndarray:
    """Model-space coefficient t·(s_K(tθ)/s_K(θ))^{n−1}; K = 0 gives tⁿ."""
    if K > 0 and theta >= np.pi / np.sqrt(K):
        raise DomainError("θ must stay below the conjugate distance π/√K")
    t = _check_t(t)
    if theta == 0:
        return t**n
    return t * (generalized_sine(K, t * theta) / generalized_sine(K, theta)) ** (n - 1)


# ── exponent fit ──────────────────────────────────────────────────────────────


def fit_geodesic_exponent(
    model: ModelSpec,
    x: PointState,
    lam: Covector,
    t_min: float = 1e-3,
    t_max: float = 1e-1,
) -> tuple[float, float]:
    """Least-squares (N̂, Ĉ) for β_t ≈ C t^N on a 50-point log grid."""
    if not 0 < t_min < t_max <= 0.1:
        raise InputError("need 0 < t_min < t_max ≤ 0.1")
    times = np.geomspace(t_min, t_max, 50)
    closed = closed_form_for(model)
    X, L = coords_of(model, x)[None], coords_of(model, lam)[None]
    _require_in_cut(model, X, L)
    if closed is not None:
        beta = closed.beta(np.repeat(X, times.size, axis=0), np.repeat(L, times.size, axis=0), times)
    else:
        beta = beta_numeric_batch(model, X, L, times, rtol=1e-12, atol=1e-16)[:, 0]
    if np.any(beta <= 0):
        raise DomainError("non-positive distortion coefficient inside the fit range")
    slope, intercept = np.polyfit(np.log(times), np.log(beta), 1)
    logger.debug("exponent fit on [%g, %g]: N=%.6f", t_min, t_max, slope)
    return float(slope), float(np.exp(intercept))


# ── power bound verification ──────────────────────────────────────────────────


@dataclass
class _Partial:
    min_gap: float
    min_ratio: float
    violations: list[BoundViolation]
    count: int
    samples: int


def _scan(X: np.ndarray, L: np.ndarray, t: np.ndarray, beta: np.ndarray, N: float, tol: float) -> _Partial:
    power = t**N
    gap = beta - power
    keep = np.isfinite(gap)
    X, L, t, beta, power, gap = X[keep], L[keep], t[keep], beta[keep], power[keep], gap[keep]
    if gap.size == 0:
        return _Partial(np.inf, np.inf, [], 0, 0)
    bad = np.nonzero(gap < -tol)[0]
    bad = bad[np.argsort(gap[bad], kind="stable")]
    viol = [
        BoundViolation(tuple(map(float, X[i])), tuple(map(float, L[i])), float(t[i]), float(beta[i]), float(power[i]))
        for i in bad[:_MAX_VIOLATIONS]
    ]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(power > 0, beta / power, np.inf)
    return _Partial(float(gap.min()), float(ratio.min()), viol, int(bad.size), int(gap.size))


def _merge(parts: list[_Partial]) -> _Partial:
    viol = sorted((v for p in parts for v in p.violations), key=lambda v: (v.gap, v.covector, v.t))
    return _Partial(
        min((p.min_gap for p in parts), default=np.inf),
        min((p.min_ratio for p in parts), default=np.inf),
        viol[:_MAX_VIOLATIONS],
        sum(p.count for p in parts),
        sum(p.samples for p in parts),
    )


def _heisenberg_lanes(counts: Sequence[int], delta: float):
    cw, ct = counts
    w = np.linspace(-(1 - delta) * 2 * np.pi, (1 - delta) * 2 * np.pi, cw)
    t = np.linspace(0.0, 1.0, ct + 1)[1:]
    W, Tt = np.meshgrid(w, t, indexing="ij")
    L = np.stack([np.ones(W.size), np.zeros(W.size), W.ravel()], axis=1)
    return np.zeros((W.size, 3)), L, Tt.ravel(), {"w": cw, "t": ct, "delta": delta}


def _grushin_lanes(counts: Sequence[int], delta: float):
    cx, cu, cv, ct = counts
    x0 = np.linspace(-2.0, 2.0, cx)
    u0 = np.linspace(-3.0, 3.0, cu)
    v0 = np.linspace(-(1 - delta) * np.pi, (1 - delta) * np.pi, cv)
    t = np.linspace(0.0, 1.0, ct + 1)[1:]
    G = np.meshgrid(x0, u0, v0, t, indexing="ij")
    X = np.stack([G[0].ravel(), np.zeros(G[0].size)], axis=1)
    L = np.stack([G[1].ravel(), G[2].ravel()], axis=1)
    return X, L, G[3].ravel(), {"x0": cx, "u0": cu, "v0": cv, "t": ct, "delta": delta}


def _random_covectors(model: ModelSpec, count: int, seed: int, delta: float) -> np.ndarray:
    """Covectors at the origin, vertical part kept inside the conjugate-free band."""
    rng = np.random.default_rng(seed)
    L = rng.uniform(-3.0, 3.0, (count, model.dim))
    if model.kind == "htype":
        k = model.htype_k
        band = (1 - delta) * 2 * np.pi / htype_structure.operator_norm(model)
        vert = rng.uniform(-1.0, 1.0, (count, model.dim - k))
        norms = np.linalg.norm(vert, axis=1, keepdims=True)
        vert = np.where(norms > 1, vert / np.maximum(norms, 1e-300), vert)
        L[:, k:] = band * vert
    return L


def verify_power_bound(
    model: ModelSpec,
    N: float,
    grid: Sequence[int],
    seed: int = config.DEFAULT_SEED,
    delta: float = 1e-3,
    threads: int = 1,
) -> BoundReport:
    """Sample β_t − t^N over a parameter grid inside the cut domain.

    grid counts: Heisenberg (w, t); Grushin (x0, u0, v0, t); other models
    (covectors, t) with seeded random covectors at the origin.
    """
    grid = [int(c) for c in grid]
    closed = closed_form_for(model)
    if model.kind == "heisenberg":
        if len(grid) != 2:
            raise InputError("Heisenberg grid needs two counts: w × t")
        X, L, T, desc = _heisenberg_lanes(grid, delta)
    elif model.kind == "grushin":
        if len(grid) != 4:
            raise InputError("Grushin grid needs four counts: x0 × u0 × v0 × t")
        X, L, T, desc = _grushin_lanes(grid, delta)
    else:
        if len(grid) != 2:
            raise InputError("numeric grid needs two counts: covectors × t")
        covs = _random_covectors(model, grid[0], seed, delta)
        times = np.linspace(0.0, 1.0, grid[1] + 1)[1:]
        desc = {"covectors": grid[0], "t": grid[1], "delta": delta, "seed": seed}

    if closed is not None:
        tol = CLOSED_TOL

        def run(chunk: slice) -> _Partial:
            beta = closed.beta(X[chunk], L[chunk], T[chunk])
            return _scan(X[chunk], L[chunk], T[chunk], beta, N, tol)

        parts = map_chunks(run, X.shape[0], threads)
    else:
        tol = NUMERIC_TOL

        def run(chunk: slice) -> _Partial:
            Lc = covs[chunk]
            Xc = np.zeros_like(Lc)
            beta = beta_numeric_batch(model, Xc, Lc, times)          # (K, B)
            nt, nb = beta.shape
            return _scan(
                np.repeat(Xc, nt, axis=0),
                np.repeat(Lc, nt, axis=0),
                np.tile(times, nb),
                beta.T.ravel(),
                N,
                tol,
            )

        parts = map_chunks(run, covs.shape[0], threads)

    merged = _merge(parts)
    logger.info("power bound N=%g: %d samples, min gap %.3e", N, merged.samples, merged.min_gap)
    return BoundReport(
        exponent=float(N),
        grid={**desc, "tolerance": tol},
        samples=merged.samples,
        min_ratio=merged.min_ratio,
        min_gap=merged.min_gap,
        violations=merged.violations,
        violation_count=merged.count,
    )


# ── sharpness ─────────────────────────────────────────────────────────────────


def _worst(X, L, T, beta, N) -> tuple[int, float]:
    gap = beta - T**N
    gap = np.where(np.isfinite(gap), gap, np.inf)
    i = int(np.argmin(gap))
    return i, float(gap[i])


def _witness(X, L, T, beta, N, i) -> BoundViolation:
    return BoundViolation(tuple(map(float, X[i])), tuple(map(float, L[i])), float(T[i]), float(beta[i]), float(T[i] ** N))


def _refine_box(lo: np.ndarray, hi: np.ndarray, centre: np.ndarray, shrink: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (hi - lo) * shrink
    return np.maximum(lo, centre - half), np.minimum(hi, centre + half)


def _search_box(evaluate, lo: np.ndarray, hi: np.ndarray, N: float, points: int = 41, rounds: int = 4):
    """Coarse-to-fine grid search of β − t^N over an axis box; the last axis is t."""
    best = None
    for _ in range(rounds):
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        P = np.stack([m.ravel() for m in mesh], axis=1)
        X, L, T, beta = evaluate(P)
        i, gap = _worst(X, L, T, beta, N)
        if best is None or gap < best[0]:
            best = (gap, _witness(X, L, T, beta, N, i))
        lo, hi = _refine_box(lo, hi, P[i], 0.25)
    return best


def sharpness_search(model: ModelSpec, N_prime: float, delta: float = 1e-3, seed: int = config.DEFAULT_SEED) -> BoundViolation | None:
    """Look for (λ, t) with β_t < t^{N′}; None when every probe respects the bound."""
    closed = closed_form_for(model)
    if model.kind == "heisenberg":
        wmax = (1 - delta) * 2 * np.pi

        def evaluate(P):
            L = np.stack([np.ones(len(P)), np.zeros(len(P)), P[:, 0]], axis=1)
            X = np.zeros_like(L)
            return X, L, P[:, 1], closed.beta(X, L, P[:, 1])

        gap, wit = _search_box(evaluate, np.array([-wmax, 0.01]), np.array([wmax, 0.99]), N_prime)
    elif model.kind == "grushin":
        vmax = (1 - delta) * np.pi

        def evaluate_line(P):
            # straight geodesics v0 = 0 with u0 < 0, base x0 = 1
            X = np.stack([np.ones(len(P)), np.zeros(len(P))], axis=1)
            L = np.stack([P[:, 0], np.zeros(len(P))], axis=1)
            return X, L, P[:, 1], closed.beta(X, L, P[:, 1])

        gap, wit = _search_box(evaluate_line, np.array([-6.0, 0.01]), np.array([-0.01, 0.999]), N_prime)
        if gap >= -CLOSED_TOL:

            def evaluate(P):
                X = np.stack([P[:, 0], np.zeros(len(P))], axis=1)
                L = P[:, 1:3]
                return X, L, P[:, 3], closed.beta(X, L, P[:, 3])

            gap, wit = _search_box(
                evaluate, np.array([-2.0, -6.0, -vmax, 0.01]), np.array([2.0, 6.0, vmax, 0.999]), N_prime, points=13
            )
    else:
        covs = _random_covectors(model, 64, seed, delta)
        times = np.linspace(0.02, 0.98, 49)
        beta = beta_numeric_batch(model, np.zeros_like(covs), covs, times)
        nt, nb = beta.shape
        X = np.zeros((nt * nb, model.dim))
        L = np.repeat(covs, nt, axis=0)
        T = np.tile(times, nb)
        i, gap = _worst(X, L, T, beta.T.ravel(), N_prime)
        wit = _witness(X, L, T, beta.T.ravel(), N_prime, i)

    tol = CLOSED_TOL if closed is not None else NUMERIC_TOL
    if gap < -tol:
        logger.info("sharpness witness for N'=%g: gap %.3e at t=%.6g", N_prime, gap, wit.t)
        return wit
    return None


# ── Grushin inequality chain ──────────────────────────────────────────────────


def wbar(z) -> np.ndarray:
    """(64 − 25z²) sin²z + 10z(z² − 8) cos z sin z + z²(16 − z²) cos²z."""
    z = np.asarray(z, dtype=float)
    s, c = np.sin(z), np.cos(z)
    return (64 - 25 * z**2) * s**2 + 10 * z * (z**2 - 8) * c * s + z**2 * (16 - z**2) * c**2


def taylor_bound(z) -> np.ndarray:
    """z⁶(−4z⁶/13365 − z²/105 + 8/45), a lower bound for wbar on (0, 2.67)."""
    z = np.asarray(z, dtype=float)
    return z**6 * (-4 * z**6 / 13365 - z**2 / 105 + 8 / 45)


def w_a(a, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    P = a * (a + z) + 4
    Q = (a + z) * (4 * a - z) + 4
    return Q * np.sin(z) - z * P * np.cos(z)


def a_min(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    s, c = np.sin(z), np.cos(z)
    return -(z / 2) * (3 * s - z * c) / (4 * s - z * c)


def taylor_root() -> float:
    """First positive zero of the Taylor lower bound (a cubic in z²)."""
    roots = np.roots([-4 / 13365, 0.0, -1 / 105, 8 / 45])
    s = min(r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    return float(np.sqrt(s))


def grushin_proof_chain(z) -> ProofChainReport:
    z = np.asarray(z, dtype=float).ravel()
    if z.size == 0 or np.any((z <= 0) | (z >= np.pi)):
        raise InputError("z samples must lie in (0, π)")
    wb = wbar(z)
    wa = w_a(a_min(z), z)
    below = z < 2.67
    underestimates = bool(np.all(taylor_bound(z[below]) <= wb[below] + 1e-12))
    # W_{a_min} = W̄ / (4(4 sin z − z cos z))
    scale = 4 * (4 * np.sin(z) - z * np.cos(z))
    consistent = bool(np.allclose(wa * scale, wb, rtol=1e-8, atol=1e-12))
    root = taylor_root()
    checks = {
        "wbar_nonnegative": bool(wb.min() >= -1e-12),
        "w_amin_nonnegative": bool(wa.min() >= -1e-12),
        "w_amin_matches_wbar": consistent,
        "taylor_underestimates": underestimates,
        "taylor_root": abs(root - 2.67491) <= 1e-3,
    }
    return ProofChainReport(
        samples=int(z.size),
        min_wbar=float(wb.min()),
        min_wa=float(wa.min()),
        taylor_underestimates=underestimates,
        taylor_root=root,
        checks=checks,
    )


# ── on-diagonal bound ─────────────────────────────────────────────────────────


def diagonal_bound_check(
    model: ModelSpec,
    x: PointState,
    t_samples: Sequence[float],
    r_samples: Sequence[float],
    count: int = 4000,
    seed: int = config.DEFAULT_SEED,
    threads: int = 1,
) -> DiagonalReport:
    """Estimate β_t(x, x) ≈ μ(Z_t(x, B_r(x))) / μ(B_r(x)) and compare with t^{Q(x)}·1.1.

    Both clouds are gridded with the same cell count per axis; the midpoint cloud's
    pitch is the ball's pitch scaled by t^{w_i}.
    """
    from measure import midpoint_set, sample_set, volume_estimate

    if any(r <= 0 or r > 0.5 for r in r_samples):
        raise InputError("r samples must lie in (0, 0.5]")
    weights = np.asarray(nonholonomic_weights(model, x), dtype=float)
    Qx = float(weights.sum())
    centre = coords_of(model, x)
    rows = []
    for r in r_samples:
        ball = sample_set(model, {"ball": {"center": centre.tolist(), "radius": float(r)}}, count, seed, threads=threads)
        vol_ball = volume_estimate(ball.points)
        source = sample_set(model, {"points": [centre.tolist()]}, 1, seed)
        for t in t_samples:
            Z = midpoint_set(model, source, ball, float(t), seed=seed, threads=threads)
            h = tuple(float(hb * t**w) for hb, w in zip(vol_ball.h, weights))
            vol_z = volume_estimate(Z.points, h=h)
            estimate = vol_z.value / vol_ball.value if vol_ball.value > 0 else float("nan")
            bound = float(t**Qx * 1.1)
            rows.append(
                DiagonalRow(float(t), float(r), float(estimate), bound, "consistent" if estimate <= bound else "violated")
            )
    return DiagonalReport(Q=Qx, rows=rows, seed=seed, samples=count)


# ── p-means ───────────────────────────────────────────────────────────────────


def pmean(p: float, t: float, a: float, b: float) -> float:
    """M_t^p(a, b) with the limits p = 0 (geometric) and p = ±∞ (max / min)."""
    if a < 0 or b < 0:
        raise InputError("p-means are defined for a, b ≥ 0")
    if not 0 <= t <= 1:
        raise InputError("t must lie in [0, 1]")
    if p == np.inf:
        return float(max(a, b))
    if a * b == 0:
        return 0.0
    if p == -np.inf:
        return float(min(a, b))
    if p == 0:
        return float(a ** (1 - t) * b**t)
    return float(((1 - t) * a**p + t * b**p) ** (1 / p))
