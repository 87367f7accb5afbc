"""Boundary-value geodesics: inverse exponential, distances, cut/conjugate times, midpoints.

The solver is a damped Newton method on F(λ) = exp_x(λ) − y with the exact
Jacobian N^V_0(1). It runs on lanes: every (pair, start) combination is one
row of a batched array, so thousands of endpoint pairs go through the same
vectorized exp / Jacobian evaluation. Starts come from scalar-reduction seeds
for the closed-form models plus a scrambled Halton design over a box sized
by the endpoint gap and the cut-time frequency band.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np
from scipy.optimize import brentq
from scipy.stats import qmc

import config
from errors import CapabilityError, DomainError, InputError, NotFoundError, NumericalFailure
from flow import dense_flow, exp_and_jacobian_batch, exp_batch, exp_jacobian
from models import Covector, GeodesicSolution, ModelSpec, PointState, coords_of
from structures import closed_form_for, frame_for
from structures import htype as htype_structure

logger = logging.getLogger(__name__)

T = TypeVar("T")

_CONJ_GRID = 1000
_CONJ_FLOOR = 1e-8
_BACKTRACK = 12
_TIE_REL = 1e-9


# ── helpers ───────────────────────────────────────────────────────────────────


def map_chunks(fn: Callable[[slice], T], count: int, threads: int = 1) -> list[T]:
    """Run fn over ordered slices of range(count); results come back in order."""
    if count == 0:
        return []
    n_chunks = 1 if threads <= 1 else min(count, threads * 4)
    edges = np.linspace(0, count, n_chunks + 1).astype(int)
    slices = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if threads <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


def _energy(model: ModelSpec, X: np.ndarray, L: np.ndarray) -> np.ndarray:
    return frame_for(model).hamiltonian(X, L)


def _frequency_band(model: ModelSpec) -> tuple[list[int], float]:
    """Covector coordinates sampled inside the cut-time band, and the band half-width."""
    if model.kind == "heisenberg":
        return [2], 2 * np.pi
    if model.kind == "grushin":
        return [1], np.pi
    if model.kind == "htype":
        return list(range(model.htype_k, model.dim)), 2 * np.pi / htype_structure.operator_norm(model)
    return [], 0.0


def _admissible(model: ModelSpec, L: np.ndarray) -> np.ndarray:
    closed = closed_form_for(model)
    if closed is None:
        return np.ones(L.shape[0], dtype=bool)
    return closed.cut_time(L) >= 1.0 - 1e-9


# ── cut and conjugate times ───────────────────────────────────────────────────


def cut_time(model: ModelSpec, lam: Covector | Sequence[float]) -> float:
    closed = closed_form_for(model)
    if closed is None:
        raise CapabilityError(f"no closed-form cut time for {model.label}; use conjugate_time")
    L = coords_of(model, lam)
    base = lam.base.array if isinstance(lam, Covector) else np.zeros(model.dim)
    if _energy(model, base[None], L[None])[0] <= 0:
        raise DomainError("cut time needs a covector with positive energy")
    return float(closed.cut_time(L[None])[0])


def conjugate_time(model: ModelSpec, x, lam, horizon: float) -> float | None:
    """First zero of det N^V_0 on (0, horizon], or None.

    Sign changes are bracketed on a 10³-point grid of the Hermite dense output and
    refined with brentq on freshly integrated determinants. A grid value only carries
    a sign when |det N| clears a noise floor relative to the product of the column
    norms of N; that ratio stays O(1) as t → 0 even though det N vanishes to high order.
    """
    if horizon <= 0:
        raise InputError("horizon must be positive")
    n = model.dim
    q0, p0 = coords_of(model, x), coords_of(model, lam)
    spline = dense_flow(model, q0, p0, horizon, columns=n)
    times = horizon * np.arange(1, _CONJ_GRID + 1) / _CONJ_GRID
    N = spline(times)[:, 2 * n + n * n :].reshape(-1, n, n)
    dets = np.linalg.det(N)
    hadamard = np.prod(np.linalg.norm(N, axis=1), axis=1)
    if not np.any(hadamard > 0):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hadamard > 0, np.abs(dets) / hadamard, 0.0)

    signed = np.nonzero(ratio > _CONJ_FLOOR)[0]
    for a, b in zip(signed[:-1], signed[1:]):
        if np.sign(dets[a]) != np.sign(dets[b]):
            return _refine_root(model, q0, p0, float(times[a]), float(times[b]))
        if b > a + 1:
            # touches zero without a sign change
            gap = a + 1 + int(np.argmin(ratio[a + 1 : b]))
            return float(times[gap])
    if signed.size and signed[-1] < _CONJ_GRID - 1:
        return float(times[signed[-1] + 1])
    return None


def _refine_root(model: ModelSpec, q0: np.ndarray, p0: np.ndarray, lo: float, hi: float) -> float:
    def det_at(t: float) -> float:
        return float(np.linalg.det(exp_jacobian(model, q0, p0, t)))

    f_lo, f_hi = det_at(lo), det_at(hi)
    if f_lo * f_hi > 0:
        # a zero sitting on a grid node
        small, big = sorted((abs(f_lo), abs(f_hi)))
        if small <= 1e-12 * big:
            return lo if abs(f_lo) < abs(f_hi) else hi
    try:
        root = brentq(det_at, lo, hi, xtol=1e-10, rtol=1e-14)
    except ValueError as exc:
        raise NumericalFailure(
            "conjugate-time refinement lost the determinant sign change",
            {"bracket": [lo, hi], "det": [f_lo, f_hi]},
        ) from exc
    logger.debug("conjugate time %.12g bracketed in [%g, %g]", root, lo, hi)
    return float(root)


# ── batched Newton ────────────────────────────────────────────────────────────


def _newton(
    model: ModelSpec,
    X: np.ndarray,
    Y: np.ndarray,
    L: np.ndarray,
    tol: float,
    max_iter: int = config.NEWTON_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on exp_X(L) = Y per lane; returns (L, residual)."""
    L = L.copy()
    Q, J = exp_and_jacobian_batch(model, X, L)
    F = Q - Y
    res = np.linalg.norm(F, axis=1)
    res[~np.isfinite(res)] = np.inf
    stalled = np.zeros(L.shape[0], dtype=bool)

    for it in range(max_iter):
        active = np.nonzero((res > tol) & ~stalled & np.isfinite(res))[0]
        if active.size == 0:
            break
        step = -(np.linalg.pinv(J[active]) @ F[active][..., None])[..., 0]
        alpha = np.ones(active.size)
        pending = np.arange(active.size)
        for _ in range(_BACKTRACK):
            lanes = active[pending]
            trial = L[lanes] + alpha[pending, None] * step[pending]
            Qt, Jt = exp_and_jacobian_batch(model, X[lanes], trial)
            Ft = Qt - Y[lanes]
            rt = np.linalg.norm(Ft, axis=1)
            ok = np.isfinite(rt) & (rt < res[lanes])
            good = lanes[ok]
            L[good], J[good], F[good], res[good] = trial[ok], Jt[ok], Ft[ok], rt[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        stalled[active[pending]] = True
        logger.debug("newton iter %d: %d active lanes, %d stalled", it, active.size, pending.size)
    return L, res


def _halton_starts(model: ModelSpec, X: np.ndarray, Y: np.ndarray, starts: int, seed: int) -> np.ndarray:
    """(B·starts, n) covectors from a scrambled Halton design, pair-major."""
    n = model.dim
    design = qmc.Halton(d=n, scramble=True, seed=seed).random(starts)
    gap = np.linalg.norm(Y - X, axis=1)
    scale = np.maximum(np.maximum(gap, np.sqrt(gap)), 1e-3)
    box = 2.0 * design - 1.0
    L = 3.0 * scale[:, None, None] * box[None, :, :]
    freq, band = _frequency_band(model)
    if freq:
        L[:, :, freq] = band * (1 - 1e-6) * box[None, :, freq]
    return L.reshape(-1, n)


def _closed_seeds(model: ModelSpec, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scalar-reduction seeds as lanes: (L, owner, ambiguous per pair)."""
    closed = closed_form_for(model)
    seeds, ambiguous = closed.inverse_seeds(X, Y)
    if seeds.ndim == 2:
        seeds = seeds[:, None, :]
    nb, k, n = seeds.shape
    owner = np.repeat(np.arange(nb), k)
    flat = seeds.reshape(-1, n)
    keep = np.all(np.isfinite(flat), axis=1)
    return flat[keep], owner[keep], ambiguous


@dataclass
class PairSolutions:
    """Minimal-energy covectors for a batch of endpoint pairs."""
    covectors: np.ndarray       # (B, n); NaN where no solution was found
    residual: np.ndarray        # (B,)
    ok: np.ndarray              # (B,) bool
    multiple: np.ndarray        # (B,) bool, competing minimizers seen

    @property
    def failure_fraction(self) -> float:
        return float(1.0 - self.ok.mean()) if self.ok.size else 0.0


def _select(
    model: ModelSpec,
    nb: int,
    X: np.ndarray,
    L: np.ndarray,
    owner: np.ndarray,
    res: np.ndarray,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per pair: lowest-energy admissible lane, ties broken by lexicographic covector order."""
    n = model.dim
    best = np.full((nb, n), np.nan)
    best_res = np.full(nb, np.inf)
    ok = np.zeros(nb, dtype=bool)
    multiple = np.zeros(nb, dtype=bool)

    valid = (res <= tol) & _admissible(model, L)
    if not np.any(valid):
        return best, best_res, ok, multiple
    L, owner, res = L[valid], owner[valid], res[valid]
    E = _energy(model, X[owner], L)

    emin = np.full(nb, np.inf)
    np.minimum.at(emin, owner, E)
    near = E <= emin[owner] * (1 + _TIE_REL) + 1e-14
    L, owner, res = L[near], owner[near], res[near]

    order = np.lexsort(tuple(L[:, j] for j in reversed(range(n))) + (owner,))
    first = order[np.unique(owner[order], return_index=True)[1]]
    chosen = owner[first]
    best[chosen], best_res[chosen], ok[chosen] = L[first], res[first], True

    spread = np.zeros(nb)
    np.maximum.at(spread, owner, np.linalg.norm(L - best[owner], axis=1))
    multiple = spread > config.DEDUP_TOL
    return best, best_res, ok, multiple


def _solve_pairs(
    model: ModelSpec,
    X: np.ndarray,
    Y: np.ndarray,
    starts: int,
    seed: int,
    tol: float,
) -> PairSolutions:
    nb, n = X.shape
    lanes, owners = [], []
    ambiguous = np.zeros(nb, dtype=bool)
    if closed_form_for(model) is not None:
        Ls, own, ambiguous = _closed_seeds(model, X, Y)
        lanes.append(Ls)
        owners.append(own)
    if starts > 0:
        lanes.append(_halton_starts(model, X, Y, starts, seed))
        owners.append(np.repeat(np.arange(nb), starts))
    L0 = np.concatenate(lanes) if lanes else np.empty((0, n))
    owner = np.concatenate(owners) if owners else np.empty(0, dtype=int)

    same = np.all(X == Y, axis=1)
    L, res = _newton(model, X[owner], Y[owner], L0, tol) if owner.size else (L0, np.empty(0))
    best, best_res, ok, multiple = _select(model, nb, X, L, owner, res, tol)
    best[same], best_res[same], ok[same], multiple[same] = 0.0, 0.0, True, False
    return PairSolutions(best, best_res, ok, (multiple | ambiguous) & ok)


def minimizing_covectors(
    model: ModelSpec,
    X,
    Y,
    starts: int | None = None,
    seed: int = config.DEFAULT_SEED,
    tol: float = config.NEWTON_TOL,
    threads: int = 1,
) -> PairSolutions:
    """Minimizing initial covectors for many (X[i], Y[i]) pairs at once.

    Closed-form models start from their seeds only (starts=0) and retry failed pairs
    with the full Halton design; other models use DEFAULT_STARTS starts per pair.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X, Y = np.broadcast_arrays(X, Y)
    if X.shape[1] != model.dim:
        raise InputError(f"expected points with {model.dim} coordinates")
    closed = closed_form_for(model) is not None
    if starts is None:
        starts = 0 if closed else config.DEFAULT_STARTS

    def run(chunk: slice) -> PairSolutions:
        return _solve_pairs(model, X[chunk], Y[chunk], starts, seed, tol)

    parts = map_chunks(run, X.shape[0], threads)
    out = PairSolutions(
        np.concatenate([p.covectors for p in parts]) if parts else np.empty((0, model.dim)),
        np.concatenate([p.residual for p in parts]) if parts else np.empty(0),
        np.concatenate([p.ok for p in parts]) if parts else np.empty(0, dtype=bool),
        np.concatenate([p.multiple for p in parts]) if parts else np.empty(0, dtype=bool),
    )

    retry = np.nonzero(~out.ok)[0]
    if retry.size and starts == 0:
        logger.debug("retrying %d pairs with %d Halton starts", retry.size, config.DEFAULT_STARTS)
        again = _solve_pairs(model, X[retry], Y[retry], config.DEFAULT_STARTS, seed, tol)
        out.covectors[retry] = again.covectors
        out.residual[retry] = again.residual
        out.ok[retry] = again.ok
        out.multiple[retry] = again.multiple
    if not out.ok.all():
        logger.info("%d of %d pairs without a minimizing solution", int((~out.ok).sum()), out.ok.size)
    return out


# ── single-pair operations ────────────────────────────────────────────────────


def inverse_exp(
    model: ModelSpec,
    x: PointState,
    y: PointState,
    starts: int = config.DEFAULT_STARTS,
    seed: int = config.DEFAULT_SEED,
    tol: float = config.NEWTON_TOL,
) -> list[GeodesicSolution]:
    """All distinct covectors λ with exp_x(λ) = y found from the start set, lowest energy first."""
    X = coords_of(model, x)[None]
    Y = coords_of(model, y)[None]
    closed = closed_form_for(model)
    if np.array_equal(X, Y):
        return [GeodesicSolution(tuple(0.0 for _ in range(model.dim)), 0.0, 0.0, True, None)]

    lanes = [_halton_starts(model, X, Y, starts, seed)] if starts > 0 else []
    ambiguous = False
    if closed is not None:
        Ls, _, amb = _closed_seeds(model, X, Y)
        lanes.insert(0, Ls)
        ambiguous = bool(amb[0])
    if not lanes:
        raise InputError(f"{model.label} has no closed-form seeds; inverse_exp needs starts ≥ 1")
    L0 = np.concatenate(lanes)
    Xl, Yl = np.repeat(X, L0.shape[0], axis=0), np.repeat(Y, L0.shape[0], axis=0)
    L, res = _newton(model, Xl, Yl, L0, tol)

    conv = np.nonzero(res <= tol)[0]
    if conv.size == 0:
        raise NotFoundError(
            "no start converged for the boundary-value problem",
            diagnostics={"starts": int(L0.shape[0]), "best_residual": float(np.min(res))},
        )
    E = _energy(model, Xl[conv], L[conv])
    order = np.lexsort(tuple(L[conv, j] for j in reversed(range(model.dim))) + (E,))
    kept: list[int] = []
    for k in order:
        if all(np.linalg.norm(L[conv[k]] - L[conv[j]]) >= config.DEDUP_TOL for j in kept):
            kept.append(k)

    cands = [(conv[k], float(E[k])) for k in kept]
    if closed is not None:
        cuts = closed.cut_time(L[[c for c, _ in cands]])
        admissible = cuts >= 1.0 - 1e-9
    else:
        cuts = [None] * len(cands)
        admissible = np.zeros(len(cands), dtype=bool)
        for idx, (c, _) in enumerate(cands):
            if conjugate_time(model, X[0], L[c], 1.0 - 1e-9) is None:
                admissible[idx] = True
                break

    emin = min((e for (_, e), a in zip(cands, admissible) if a), default=None)
    minimal = [a and emin is not None and e <= emin * (1 + _TIE_REL) + 1e-14 for (_, e), a in zip(cands, admissible)]
    multiple = ambiguous or sum(minimal) > 1

    out = []
    for (c, e), cut, is_min in zip(cands, cuts, minimal):
        out.append(
            GeodesicSolution(
                covector=tuple(float(v) for v in L[c]),
                length=float(np.sqrt(2.0 * max(e, 0.0))),
                residual=float(res[c]),
                minimizing=bool(is_min),
                t_cut=None if cut is None else float(cut),
                multiple_minimizers=bool(multiple and is_min),
            )
        )
    logger.debug("inverse_exp: %d converged lanes, %d distinct solutions", conv.size, len(out))
    return out


def _minimal(solutions: list[GeodesicSolution]) -> GeodesicSolution:
    for sol in solutions:
        if sol.minimizing:
            return sol
    raise NotFoundError("no minimizing solution among the boundary-value solutions", {"solutions": len(solutions)})


def distance(model: ModelSpec, x: PointState, y: PointState, **kwargs) -> float:
    return _minimal(inverse_exp(model, x, y, **kwargs)).length


def midpoint(model: ModelSpec, x: PointState, y: PointState, t: float, **kwargs) -> PointState:
    """exp_x(t·λ*) along the minimal-energy minimizer."""
    best = _minimal(inverse_exp(model, x, y, **kwargs))
    X = coords_of(model, x)[None]
    q = exp_batch(model, X, np.asarray(best.covector)[None], float(t))[0]
    return PointState(tuple(float(v) for v in q), model)


# ── semiconvexity probe ───────────────────────────────────────────────────────


def probe_directions(n: int, count: int = 64) -> np.ndarray:
    """Unit vectors: circle for n=2, Fibonacci sphere for n=3, seeded Gaussians beyond."""
    if n == 2:
        ang = np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if n == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = np.pi * (3.0 - np.sqrt(5.0)) * k
        rho = np.sqrt(1.0 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    v = np.random.default_rng(config.DEFAULT_SEED).standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def semiconvexity_probe(
    model: ModelSpec,
    y: PointState,
    x: PointState,
    radii: Sequence[float],
    directions: int = 64,
) -> list[tuple[float, float]]:
    """q(r) = min_v (d²(x+rv, y) + d²(x−rv, y) − 2 d²(x, y)) / r² over unit directions v."""
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise InputError("radii must be positive")
    if any(r < 1e-4 for r in radii):
        raise InputError("radii below 1e-4 amplify solver noise past usefulness")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise InputError("radii must be strictly decreasing")
    Xc, Yc = coords_of(model, x), coords_of(model, y)
    if np.array_equal(Xc, Yc):
        raise DomainError("the probe needs x ≠ y")

    V = probe_directions(model.dim, directions)
    R = np.asarray(radii)
    pts = np.concatenate(
        [Xc[None], (Xc + R[:, None, None] * V[None]).reshape(-1, model.dim), (Xc - R[:, None, None] * V[None]).reshape(-1, model.dim)]
    )
    sol = minimizing_covectors(model, np.broadcast_to(Yc, pts.shape), pts, tol=config.PROBE_TOL)
    if not sol.ok.all():
        raise NotFoundError("distance evaluation failed inside the probe", {"failures": int((~sol.ok).sum())})
    d2 = 2.0 * _energy(model, np.broadcast_to(Yc, pts.shape), sol.covectors)

    k = len(radii) * directions
    base, plus, minus = d2[0], d2[1 : 1 + k].reshape(len(radii), -1), d2[1 + k :].reshape(len(radii), -1)
    quotient = (plus + minus - 2.0 * base) / (R[:, None] ** 2)
    return [(r, float(q)) for r, q in zip(radii, quotient.min(axis=1))]
