"""Heisenberg group in (x, y, z) coordinates.

Frame X1 = ∂x − (y/2)∂z, X2 = ∂y + (x/2)∂z, Lebesgue (Haar) measure.
Group law (x,y,z)⋆(x′,y′,z′) = (x+x′, y+y′, z+z′+½(x′y − y′x)); the frame is
left-invariant, so everything is computed from the origin and translated.

With h = (u − yw/2, v + xw/2) the horizontal part of a covector (u, v, w) at
(x, y, z), the geodesic from the origin with initial (h1, h2, w) is

  x(t) = h1·a − h2·b,  y(t) = h1·b + h2·a,  z(t) = (h1² + h2²)·c
  a = sin(wt)/w,  b = (1 − cos wt)/w,  c = (wt − sin wt)/(2w²)

and the horizontal velocity rotates with angular speed w. Cut time 2π/|w|.
"""

import numpy as np

from models import Polynomial

from .special import arc_minus_sin_cubed, sin_minus_cos_cubed, sinc

FRAME: tuple[tuple[Polynomial, ...], ...] = (
    (((1.0, (0, 0, 0)),), (), ((-0.5, (0, 1, 0)),)),
    ((), ((1.0, (0, 0, 0)),), ((0.5, (1, 0, 0)),)),
)
WEIGHTS = (1, 1, 2)


def group_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = a + b
    out[..., 2] += 0.5 * (b[..., 0] * a[..., 1] - b[..., 1] * a[..., 0])
    return out


def group_inv(a: np.ndarray) -> np.ndarray:
    return -np.asarray(a, dtype=float)


def _horizontal(X: np.ndarray, L: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = L[:, 2]
    return L[:, 0] - 0.5 * X[:, 1] * w, L[:, 1] + 0.5 * X[:, 0] * w, w


def _kernels(w: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, ...]:
    """a, b, c and their w-derivatives a′, b′, c′ at time t."""
    th = w * t
    half = 0.5 * th
    a = t * sinc(th)
    b = 0.5 * t * th * sinc(half) ** 2
    c = 0.5 * t**2 * th * arc_minus_sin_cubed(th)
    # a′ = −(sin θ − θ cos θ)/w²
    da = -(t**2) * th * sin_minus_cos_cubed(th)
    # b′ = (θ sin θ − (1 − cos θ))/w² = t²·(sinc θ − ½ sinc²(θ/2))
    db = t**2 * (sinc(th) - 0.5 * sinc(half) ** 2)
    # c′ = t³·((1 − cos θ)/(2θ²) − (θ − sin θ)/θ³)
    dc = t**3 * (0.25 * sinc(half) ** 2 - arc_minus_sin_cubed(th))
    return a, b, c, da, db, dc


def _as_batch(X, L, t):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    X, L = np.broadcast_arrays(X, L)
    t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    return X, L, t


def exp(X, L, t) -> np.ndarray:
    """Position at time t of the geodesic with initial covector L at X."""
    X, L, t = _as_batch(X, L, t)
    h1, h2, w = _horizontal(X, L)
    a, b, c, *_ = _kernels(w, t)
    g = np.stack([h1 * a - h2 * b, h1 * b + h2 * a, (h1 * h1 + h2 * h2) * c], axis=1)
    return group_mul(X, g)


def covector(X, L, t) -> np.ndarray:
    """Covector coordinates at time t along the extremal."""
    X, L, t = _as_batch(X, L, t)
    h1, h2, w = _horizontal(X, L)
    q = exp(X, L, t)
    th = w * t
    ct, st = np.cos(th), np.sin(th)
    k1 = h1 * ct - h2 * st
    k2 = h1 * st + h2 * ct
    return np.stack([k1 + 0.5 * q[:, 1] * w, k2 - 0.5 * q[:, 0] * w, w], axis=1)


def exp_jacobian(X, L, t) -> np.ndarray:
    """∂ exp_X(tL)/∂L, shape (B, 3, 3)."""
    X, L, t = _as_batch(X, L, t)
    h1, h2, w = _horizontal(X, L)
    a, b, c, da, db, dc = _kernels(w, t)
    nb = X.shape[0]

    Dg = np.empty((nb, 3, 3))
    Dg[:, 0] = np.stack([a, -b, h1 * da - h2 * db], axis=1)
    Dg[:, 1] = np.stack([b, a, h1 * db + h2 * da], axis=1)
    Dg[:, 2] = np.stack([2 * h1 * c, 2 * h2 * c, (h1 * h1 + h2 * h2) * dc], axis=1)

    Dh = np.broadcast_to(np.eye(3), (nb, 3, 3)).copy()
    Dh[:, 0, 2] = -0.5 * X[:, 1]
    Dh[:, 1, 2] = 0.5 * X[:, 0]

    Dt = np.broadcast_to(np.eye(3), (nb, 3, 3)).copy()
    Dt[:, 2, 0] = 0.5 * X[:, 1]
    Dt[:, 2, 1] = -0.5 * X[:, 0]
    return Dt @ Dg @ Dh


def cut_time(L) -> np.ndarray:
    w = np.abs(np.atleast_2d(np.asarray(L, dtype=float))[:, 2])
    with np.errstate(divide="ignore"):
        return np.where(w > 0, 2 * np.pi / np.where(w > 0, w, 1.0), np.inf)


def in_domain(X, L) -> np.ndarray:
    return np.abs(np.atleast_2d(np.asarray(L, dtype=float))[:, 2]) < 2 * np.pi


def beta(X, L, t) -> np.ndarray:
    """Distortion coefficient β_t along the geodesic; depends on w only."""
    X, L, t = _as_batch(X, L, t)
    half = 0.5 * L[:, 2]
    ratio_s = sinc(t * half) / sinc(half)
    ratio_f = sin_minus_cos_cubed(t * half) / sin_minus_cos_cubed(half)
    return t**5 * ratio_s * ratio_f


def _mu(w: np.ndarray) -> np.ndarray:
    """(w − sin w)/(8 sin²(w/2)), odd and increasing on (−2π, 2π)."""
    return w * arc_minus_sin_cubed(w) / (2.0 * sinc(0.5 * w) ** 2)


def inverse_seeds(X, Y) -> tuple[np.ndarray, np.ndarray]:
    """Minimizing covector at X reaching Y, by scalar reduction.

    Returns (L, ambiguous) where ambiguous flags vertical displacements, whose
    minimizers form a one-parameter family.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    g = group_mul(group_inv(X), Y)
    r2 = g[:, 0] ** 2 + g[:, 1] ** 2
    gz = g[:, 2]
    vertical = (r2 == 0) & (gz != 0)
    target = np.abs(gz) / np.where(r2 > 0, r2, 1.0)

    lo = np.zeros_like(target)
    hi = np.full_like(target, 2 * np.pi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = _mu(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    w = np.sign(gz) * 0.5 * (lo + hi)
    w = np.where(vertical, 2 * np.pi * np.sign(gz), w)

    a = sinc(w)
    b = 0.5 * w * sinc(0.5 * w) ** 2
    den = np.where(vertical | (r2 == 0), 1.0, a * a + b * b)
    h1 = (a * g[:, 0] + b * g[:, 1]) / den
    h2 = (-b * g[:, 0] + a * g[:, 1]) / den
    h1 = np.where(vertical, np.sqrt(4 * np.pi * np.abs(gz)), h1)
    h2 = np.where(vertical, 0.0, h2)

    L = np.stack([h1 + 0.5 * X[:, 1] * w, h2 - 0.5 * X[:, 0] * w, w], axis=1)
    return L, vertical
