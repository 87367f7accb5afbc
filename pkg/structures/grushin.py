"""Grushin plane: frame X1 = ∂x, X2 = x∂y, Lebesgue measure.

H = ½(u² + x²v²). From (x0, y0) with covector (u0, v0):

  x(t) = x0 cos(tv) + u0 S,          S = sin(tv)/v
  y(t) = y0 + x0² R + u0² P + u0 x0 Q
  R = tv/2 + sin(2tv)/4,  P = (2tv − sin 2tv)/(4v²),  Q = (1 − cos 2tv)/(2v)

v is conserved, u(t) = u0 cos(tv) − x0 v sin(tv). Cut time π/|v|.
"""

import numpy as np

from models import Polynomial

from .special import arc_minus_sin_cubed, sin_minus_cos_cubed, sinc

FRAME: tuple[tuple[Polynomial, ...], ...] = (
    (((1.0, (0, 0)),), ()),
    ((), ((1.0, (1, 0)),)),
)

_ROOT_GRID = 257
_MAX_ROOTS = 6


def weights(x0: float) -> tuple[int, int]:
    return (1, 2) if x0 == 0 else (1, 1)


def _as_batch(X, L, t):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    X, L = np.broadcast_arrays(X, L)
    t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    return X, L, t


def _kernels(v: np.ndarray, t: np.ndarray) -> dict[str, np.ndarray]:
    tv = t * v
    s2 = 2.0 * tv
    k = arc_minus_sin_cubed(s2)
    return {
        "cos": np.cos(tv),
        "sin": np.sin(tv),
        "S": t * sinc(tv),
        "R": 0.5 * tv + 0.25 * np.sin(s2),
        "P": 2.0 * t**3 * v * k,
        "Q": t**2 * v * sinc(tv) ** 2,
        "dS": -(t**3) * v * sin_minus_cos_cubed(tv),
        "dR": t * np.cos(tv) ** 2,
        "dP": t**3 * sinc(tv) ** 2 - 4.0 * t**3 * k,
        "dQ": 2.0 * t**2 * sinc(s2) - t**2 * sinc(tv) ** 2,
    }


def exp(X, L, t) -> np.ndarray:
    X, L, t = _as_batch(X, L, t)
    x0, y0 = X[:, 0], X[:, 1]
    u, v = L[:, 0], L[:, 1]
    K = _kernels(v, t)
    x = x0 * K["cos"] + u * K["S"]
    y = y0 + x0 * x0 * K["R"] + u * u * K["P"] + u * x0 * K["Q"]
    return np.stack([x, y], axis=1)


def covector(X, L, t) -> np.ndarray:
    X, L, t = _as_batch(X, L, t)
    x0, u, v = X[:, 0], L[:, 0], L[:, 1]
    tv = t * v
    return np.stack([u * np.cos(tv) - x0 * v * np.sin(tv), v], axis=1)


def exp_jacobian(X, L, t) -> np.ndarray:
    X, L, t = _as_batch(X, L, t)
    x0 = X[:, 0]
    u, v = L[:, 0], L[:, 1]
    K = _kernels(v, t)
    J = np.empty((X.shape[0], 2, 2))
    J[:, 0, 0] = K["S"]
    J[:, 0, 1] = -x0 * t * K["sin"] + u * K["dS"]
    J[:, 1, 0] = 2.0 * u * K["P"] + x0 * K["Q"]
    J[:, 1, 1] = x0 * x0 * K["dR"] + u * u * K["dP"] + u * x0 * K["dQ"]
    return J


def cut_time(L) -> np.ndarray:
    v = np.abs(np.atleast_2d(np.asarray(L, dtype=float))[:, 1])
    with np.errstate(divide="ignore"):
        return np.where(v > 0, np.pi / np.where(v > 0, v, 1.0), np.inf)


def in_domain(X, L) -> np.ndarray:
    return np.abs(np.atleast_2d(np.asarray(L, dtype=float))[:, 1]) < np.pi


def beta(X, L, t) -> np.ndarray:
    """β_t = t²·[u²t² g(tv) + x0(tu + x0) sinc(tv)] / [u² g(v) + x0(u + x0) sinc(v)], g = (sin s − s cos s)/s³."""
    X, L, t = _as_batch(X, L, t)
    x0, u, v = X[:, 0], L[:, 0], L[:, 1]
    num = u * u * t * t * sin_minus_cos_cubed(t * v) + x0 * (t * u + x0) * sinc(t * v)
    den = u * u * sin_minus_cos_cubed(v) + x0 * (u + x0) * sinc(v)
    return t * t * num / den


def _endpoint_gap(x0, y0, x1, y1, v):
    """y(1) − y1 along the one-parameter family hitting x1 at time 1; returns (gap, u)."""
    one = np.ones_like(v)
    K = _kernels(v, one)
    u = (x1 - x0 * K["cos"]) / K["S"]
    gap = y0 + x0 * x0 * K["R"] + u * u * K["P"] + u * x0 * K["Q"] - y1
    return gap, u


def inverse_seeds(X, Y) -> tuple[np.ndarray, np.ndarray]:
    """Candidate covectors with |v| < π reaching Y from X, by scalar reduction in v.

    Returns (L, ambiguous): L has shape (B, _MAX_ROOTS, 2) padded with NaN; ambiguous
    flags endpoints on the singular line reached from it (two mirror minimizers).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    nb = X.shape[0]
    x0, y0 = X[:, :1], X[:, 1:]
    x1, y1 = Y[:, :1], Y[:, 1:]

    grid = np.linspace(-np.pi, np.pi, _ROOT_GRID + 2)[1:-1][None, :]
    gap, _ = _endpoint_gap(x0, y0, x1, y1, grid)
    change = np.signbit(gap[:, :-1]) != np.signbit(gap[:, 1:])

    seeds = np.full((nb, _MAX_ROOTS, 2), np.nan)
    rows, cols = np.nonzero(change)
    if rows.size:
        lo = grid[0, cols].copy()
        hi = grid[0, cols + 1].copy()
        bx0, by0, bx1, by1 = x0[rows], y0[rows], x1[rows], y1[rows]
        glo, _ = _endpoint_gap(bx0, by0, bx1, by1, lo[:, None])
        glo = glo[:, 0]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm, _ = _endpoint_gap(bx0, by0, bx1, by1, mid[:, None])
            gm = gm[:, 0]
            same = np.signbit(gm) == np.signbit(glo)
            lo = np.where(same, mid, lo)
            glo = np.where(same, gm, glo)
            hi = np.where(same, hi, mid)
        v = 0.5 * (lo + hi)
        _, u = _endpoint_gap(bx0, by0, bx1, by1, v[:, None])
        slot = np.zeros(nb, dtype=int)
        for r, uu, vv in zip(rows, u[:, 0], v):
            if slot[r] < _MAX_ROOTS:
                seeds[r, slot[r]] = (uu, vv)
                slot[r] += 1

    # singular line to singular line: reached only at the cut time, v = ±π
    singular = (X[:, 0] == 0) & (Y[:, 0] == 0) & (Y[:, 1] != X[:, 1])
    if np.any(singular):
        dy = (Y[:, 1] - X[:, 1])[singular]
        seeds[singular, 0] = np.stack([np.sqrt(2 * np.pi * np.abs(dy)), np.pi * np.sign(dy)], axis=1)
        seeds[singular, 1] = np.stack([-np.sqrt(2 * np.pi * np.abs(dy)), np.pi * np.sign(dy)], axis=1)
    return seeds, singular
