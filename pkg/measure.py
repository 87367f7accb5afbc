"""Sampled sets, t-intermediate point clouds, volume estimates and Monte-Carlo inequality checks.

Z_t(A, B) is estimated by the t-midpoints of sampled pairs, which under-approximates
the set; every inequality check therefore carries a statistical slack (1 − ε) and
reports "consistent" / "violated" rather than a proof.
"""

import logging
from typing import Any, Sequence

import numpy as np

import config
from distortion import pmean
from errors import InputError, NumericalFailure, ResourceError
from flow import exp_batch
from geodesy import minimizing_covectors
from models import (
    GridFunction,
    InequalityReport,
    InequalityRow,
    ModelSpec,
    PointState,
    SampledSet,
    VolumeEstimate,
    coords_of,
)
from structures import frame_for, heisenberg
from structures import htype as htype_structure

logger = logging.getLogger(__name__)

_MAX_REJECTION_ROUNDS = 50


# ── balls ─────────────────────────────────────────────────────────────────────


def _ball_box(model: ModelSpec, centre: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Axis box containing B_r(centre); translated=True means the box is around the origin.

    Horizontal speed is 1 along unit-speed geodesics, which bounds every coordinate.
    """
    n = model.dim
    if model.kind == "heisenberg":
        half = np.array([r, r, 0.5 * r * r])
        return -half, half, True
    if model.kind == "htype":
        k = model.htype_k
        half = np.full(n, r)
        half[k:] = 0.5 * htype_structure.operator_norm(model) * r * r
        return -half, half, True
    if model.kind == "grushin":
        half = np.array([r, r * (abs(centre[0]) + r)])
        return centre - half, centre + half, False
    X = frame_for(model).fields(centre[None])[0]
    speed = max(1.0, float(np.linalg.norm(X, 2)))
    half = np.full(n, 2.0 * r * speed)
    return centre - half, centre + half, False


def _translate(model: ModelSpec, centre: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if model.kind == "heisenberg":
        return heisenberg.group_mul(centre[None], pts)
    return htype_structure.group_mul(model, centre[None], pts)


def _inside_ball(model: ModelSpec, centre: np.ndarray, pts: np.ndarray, r: float, threads: int) -> np.ndarray:
    sol = minimizing_covectors(model, np.broadcast_to(centre, pts.shape), pts, threads=threads)
    d2 = 2.0 * frame_for(model).hamiltonian(np.broadcast_to(centre, pts.shape), np.nan_to_num(sol.covectors))
    return sol.ok & (d2 <= r * r)


def _sample_ball(model: ModelSpec, centre: np.ndarray, r: float, count: int, rng: np.random.Generator, threads: int):
    lo, hi, translated = _ball_box(model, centre, r)
    origin = np.zeros_like(centre) if translated else centre
    kept: list[np.ndarray] = []
    proposed = 0
    total = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        pts = rng.uniform(lo, hi, (max(4 * count, 256), model.dim))
        proposed += pts.shape[0]
        inside = _inside_ball(model, origin, pts, r, threads)
        kept.append(pts[inside])
        total += int(inside.sum())
        if total >= count:
            break
    else:
        raise ResourceError("rejection sampling of the metric ball did not fill the request", {"accepted": total})
    pts = np.concatenate(kept)[:count]
    if translated:
        pts = _translate(model, centre, pts)
    return pts, {"proposed": proposed, "accepted": total}


def ball_volume(model: ModelSpec, x: PointState, r: float, count: int = 20000, seed: int = config.DEFAULT_SEED, threads: int = 1) -> float:
    """Hit-or-miss estimate of μ(B_r(x)) inside the enclosing box (density 1 models)."""
    if r <= 0:
        raise InputError("radius must be positive")
    centre = coords_of(model, x)
    lo, hi, translated = _ball_box(model, centre, r)
    pts = np.random.default_rng(seed).uniform(lo, hi, (count, model.dim))
    inside = _inside_ball(model, np.zeros_like(centre) if translated else centre, pts, r, threads)
    return float(np.prod(hi - lo) * inside.mean())


def fit_ball_exponent(
    model: ModelSpec,
    x: PointState,
    radii: Sequence[float],
    count: int = 20000,
    seed: int = config.DEFAULT_SEED,
    threads: int = 1,
) -> tuple[float, list[float]]:
    """Slope of log μ(B_r(x)) against log r, i.e. the local homogeneous dimension Q(x)."""
    radii = [float(r) for r in radii]
    if len(radii) < 2:
        raise InputError("need at least two radii")
    vols = [ball_volume(model, x, r, count, seed, threads) for r in radii]
    if min(vols) <= 0:
        raise NumericalFailure("empty ball estimate; raise the sample count", {"volumes": vols})
    slope, _ = np.polyfit(np.log(radii), np.log(vols), 1)
    return float(slope), vols


# ── sets ──────────────────────────────────────────────────────────────────────


def sample_set(model: ModelSpec, spec: dict[str, Any], count: int, seed: int = config.DEFAULT_SEED, threads: int = 1) -> SampledSet:
    """Seeded samples from {"box": [[lo, hi], ...]}, {"ball": {center, radius}} or {"points": [...]}."""
    if count < 1:
        raise InputError("count must be at least 1")
    if not spec:
        raise InputError("empty set specification")
    rng = np.random.default_rng(seed)
    n = model.dim

    if "box" in spec:
        box = np.asarray(spec["box"], dtype=float)
        if box.shape != (n, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise InputError(f"box needs {n} [lo, hi] pairs with lo < hi")
        pts = rng.uniform(box[:, 0], box[:, 1], (count, n))
        exact = float(np.prod(box[:, 1] - box[:, 0])) if not model.density_terms else None
        return SampledSet(model, "box", {"box": box.tolist()}, pts, exact, seed)

    if "ball" in spec:
        ball = spec["ball"]
        try:
            centre = coords_of(model, ball["center"])
            r = float(ball["radius"])
        except (KeyError, TypeError) as exc:
            raise InputError("ball needs `center` and `radius`") from exc
        if r <= 0:
            raise InputError("ball radius must be positive")
        pts, diag = _sample_ball(model, centre, r, count, rng, threads)
        return SampledSet(model, "ball", {"ball": {"center": centre.tolist(), "radius": r}}, pts, None, seed, diag)

    if "points" in spec:
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        if pts.shape[1] != n or pts.shape[0] == 0:
            raise InputError(f"point list needs rows of {n} coordinates")
        return SampledSet(model, "points", {"points": int(pts.shape[0])}, pts, None, seed)

    raise InputError(f"unknown set specification keys {sorted(spec)}; expected box, ball or points")


def _pairs(na: int, nb: int, rng: np.random.Generator, max_pairs: int) -> tuple[np.ndarray, np.ndarray]:
    if na * nb <= max_pairs:
        ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        return ia.ravel(), ib.ravel()
    return rng.integers(0, na, max_pairs), rng.integers(0, nb, max_pairs)


def midpoint_set(
    model: ModelSpec,
    A: SampledSet,
    B: SampledSet,
    t: float,
    seed: int = config.DEFAULT_SEED,
    threads: int = 1,
    max_pairs: int = config.MAX_PAIRS,
) -> SampledSet:
    """t-intermediate points of minimizing geodesics between sampled pairs of A × B."""
    if not 0 <= t <= 1:
        raise InputError("t must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    ia, ib = _pairs(len(A), len(B), rng, max_pairs)
    Xa, Yb = A.points[ia], B.points[ib]

    sol = minimizing_covectors(model, Xa, Yb, seed=seed, threads=threads)
    failures = int((~sol.ok).sum())
    fraction = failures / max(ia.size, 1)
    diag = {
        "pairs": int(ia.size),
        "failures": failures,
        "failure_fraction": fraction,
        "multiple_minimizers": int(sol.multiple.sum()),
    }
    if fraction > config.FAILURE_THRESHOLD:
        raise NumericalFailure("too many boundary-value failures while building Z_t", diag)
    if failures:
        logger.info("midpoint set: dropped %d of %d pairs", failures, ia.size)

    ok = sol.ok
    pts = exp_batch(model, Xa[ok], sol.covectors[ok], float(t)) if ok.any() else np.empty((0, model.dim))
    pts = np.unique(pts, axis=0)
    return SampledSet(model, "points", {"midpoints": float(t)}, pts, None, seed, diag)


# ── volumes ───────────────────────────────────────────────────────────────────


def default_pitch(points: np.ndarray) -> tuple[float, ...]:
    """Per-axis pitch: extent / min(40, (count/20)^{1/n}) cells."""
    K, n = points.shape
    cells = int(min(40, max(1, np.floor((K / 20.0) ** (1.0 / n)))))
    extent = points.max(axis=0) - points.min(axis=0)
    return tuple(float(e / cells) if e > 0 else 1.0 for e in extent)


def volume_estimate(S: SampledSet | np.ndarray, h: float | Sequence[float] | None = None) -> VolumeEstimate:
    """Occupied cells of an axis grid anchored at the cloud minimum, times the cell volume."""
    pts = S.points if isinstance(S, SampledSet) else np.atleast_2d(np.asarray(S, dtype=float))
    n = pts.shape[1]
    if h is None:
        pitch = default_pitch(pts) if pts.shape[0] else (1.0,) * n
    else:
        pitch = tuple(float(v) for v in np.broadcast_to(np.asarray(h, dtype=float), (n,)))
    if any(p <= 0 for p in pitch):
        raise InputError("grid pitch must be positive")
    if pts.shape[0] == 0:
        return VolumeEstimate(pitch, 0, 0.0)

    origin = pts.min(axis=0)
    extent = pts.max(axis=0) - origin
    cells = float(np.prod(np.floor(extent / np.asarray(pitch)) + 1))
    if cells > config.MAX_CELLS:
        raise ResourceError(f"grid pitch too fine: {cells:.3g} cells", {"pitch": pitch})
    idx = np.floor((pts - origin) / np.asarray(pitch)).astype(np.int64)
    count = int(np.unique(idx, axis=0).shape[0])
    return VolumeEstimate(pitch, count, float(count * np.prod(pitch)))


def _measure_of(S: SampledSet) -> float:
    return S.exact_volume if S.exact_volume is not None else volume_estimate(S).value


def _row(t: float, lhs: float, rhs: float, eps: float) -> InequalityRow:
    slack = lhs / rhs - 1.0 if rhs > 0 else float("inf")
    return InequalityRow(float(t), float(lhs), float(rhs), float(slack), "consistent" if lhs >= (1 - eps) * rhs else "violated")


# ── inequality checks ─────────────────────────────────────────────────────────


def bm_check(
    model: ModelSpec,
    A: SampledSet,
    B: SampledSet,
    N: float,
    t_grid: Sequence[float],
    h: float | Sequence[float] | None = None,
    seed: int = config.DEFAULT_SEED,
    eps: float = config.EPS_STAT,
    threads: int = 1,
) -> InequalityReport:
    """μ(Z_t)^{1/n} ≥ (1−t)^{N/n} μ(A)^{1/n} + t^{N/n} μ(B)^{1/n}, per t."""
    if len(A) == 0 or len(B) == 0:
        raise InputError("both sets need samples")
    n = model.dim
    mA, mB = _measure_of(A), _measure_of(B)
    rows, fractions, pitch = [], [], None
    for t in t_grid:
        Z = midpoint_set(model, A, B, float(t), seed=seed, threads=threads)
        vol = volume_estimate(Z, h)
        pitch = vol.h
        fractions.append(Z.diagnostics["failure_fraction"])
        lhs = vol.value ** (1 / n)
        rhs = (1 - t) ** (N / n) * mA ** (1 / n) + t ** (N / n) * mB ** (1 / n)
        rows.append(_row(t, lhs, rhs, eps))
    return InequalityReport(
        "bm", float(N), rows, seed, len(A) * len(B), pitch, max(fractions, default=0.0),
        {"measure_A": mA, "measure_B": mB},
    )


def mcp_check(
    model: ModelSpec,
    x: PointState,
    B: SampledSet,
    N: float,
    t_grid: Sequence[float],
    h: float | Sequence[float] | None = None,
    seed: int = config.DEFAULT_SEED,
    eps: float = config.EPS_STAT,
    threads: int = 1,
) -> InequalityReport:
    """μ(Z_t(x, B)) ≥ t^N μ(B), per t."""
    if len(B) == 0:
        raise InputError("B needs samples")
    source = sample_set(model, {"points": [coords_of(model, x).tolist()]}, 1, seed)
    mB = _measure_of(B)
    rows, fractions, pitch = [], [], None
    for t in t_grid:
        Z = midpoint_set(model, source, B, float(t), seed=seed, threads=threads)
        vol = volume_estimate(Z, h)
        pitch = vol.h
        fractions.append(Z.diagnostics["failure_fraction"])
        rows.append(_row(t, vol.value, t**N * mB, eps))
    return InequalityReport("mcp", float(N), rows, seed, len(B), pitch, max(fractions, default=0.0), {"measure_B": mB})


def _mean_exponent(p: float, n: int) -> float:
    if p == np.inf:
        return 1.0 / n
    if p == -1.0 / n:
        return -np.inf
    return p / (1 + n * p)


def bbl_check(
    model: ModelSpec,
    f: GridFunction,
    g: GridFunction,
    t: float,
    p: float,
    N_bound: float,
    h: float | Sequence[float] | None = None,
    seed: int = config.DEFAULT_SEED,
    eps: float = config.EPS_STAT,
    threads: int = 1,
) -> InequalityReport:
    """p-mean inequality with β replaced by the power bounds (1−t)^N and t^N.

    The smallest admissible h is the cellwise maximum, over pairs landing in a
    cell, of M_t^p((1−t)^{n−N} f(x), t^{n−N} g(y)); then ∫h is compared with
    M_t^{p/(1+np)}(∫f, ∫g).
    """
    n = model.dim
    if f.lo.size != n or g.lo.size != n:
        raise InputError(f"gridded functions must live on {n}-dimensional grids")
    if p < -1.0 / n:
        raise InputError("p must be at least −1/n")
    if not 0 < t < 1:
        raise InputError("t must lie in (0, 1)")
    frame = frame_for(model)
    cf, cg = f.centres(), g.centres()
    mass_f, mass_g = f.integral(frame.density(cf)), g.integral(frame.density(cg))
    if mass_f <= 0 or mass_g <= 0:
        raise InputError("f and g need positive mass")

    vf, vg = f.values.ravel(), g.values.ravel()
    sf, sg = np.nonzero(vf > 0)[0], np.nonzero(vg > 0)[0]
    rng = np.random.default_rng(seed)
    ia, ib = _pairs(sf.size, sg.size, rng, config.MAX_PAIRS)
    ia, ib = sf[ia], sg[ib]

    sol = minimizing_covectors(model, cf[ia], cg[ib], seed=seed, threads=threads)
    ok = sol.ok
    fraction = float(1.0 - ok.mean())
    if fraction > config.FAILURE_THRESHOLD:
        raise NumericalFailure("too many boundary-value failures while building h", {"failure_fraction": fraction})
    Z = exp_batch(model, cf[ia][ok], sol.covectors[ok], t)
    a = (1 - t) ** (n - N_bound) * vf[ia][ok]
    b = t ** (n - N_bound) * vg[ib][ok]
    need = np.array([pmean(p, t, x, y) for x, y in zip(a, b)])

    pitch = np.asarray(volume_estimate(Z, h).h)
    origin = Z.min(axis=0)
    idx = np.floor((Z - origin) / pitch).astype(np.int64)
    cells, inverse = np.unique(idx, axis=0, return_inverse=True)
    hval = np.zeros(cells.shape[0])
    np.maximum.at(hval, inverse.ravel(), need)
    centres = origin + (cells + 0.5) * pitch
    lhs = float(np.sum(hval * frame.density(centres)) * np.prod(pitch))
    rhs = pmean(_mean_exponent(p, n), t, mass_f, mass_g)

    row = _row(t, lhs, rhs, eps)
    return InequalityReport(
        "bbl", float(N_bound), [row], seed, int(ia.size), tuple(map(float, pitch)), fraction,
        {"p": p, "mass_f": mass_f, "mass_g": mass_g},
    )
