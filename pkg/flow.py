"""Hamiltonian geodesic flow and Jacobi matrices in the canonical Darboux frame.

Extremals solve q̇ = ∂H/∂p, ṗ = −∂H/∂q. Jacobi matrices J = (M; N) (M the δp
block, N the δq block) solve

    Ṁ = −A M − R N,   Ṅ = B M + Aᵀ N,
    A = ∂²H/∂q∂p,  B = ∂²H/∂p²,  R = ∂²H/∂q²,

so that for J^V_0 (M(0) = I, N(0) = 0) N^V_0(t) is the coordinate Jacobian of
λ ↦ exp_x(tλ). Integration uses scipy's embedded RK 5(4) pair; every
propagation is batched over lanes so Newton solvers and grid sweeps can push
many covectors through one solve.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

import config
from errors import CapabilityError, DomainError, InputError, NumericalFailure
from models import (
    Covector,
    Extremal,
    JacobiMatrixState,
    ModelSpec,
    PointState,
    VariationalCoefficients,
    coords_of,
)
from structures import closed_form_for, frame_for

logger = logging.getLogger(__name__)

_SINGULAR_COND = 1e12


# ── batched propagation ───────────────────────────────────────────────────────


def _pack(Q, P, M, N) -> np.ndarray:
    parts = [Q.ravel(), P.ravel()]
    if M is not None:
        parts += [M.ravel(), N.ravel()]
    return np.concatenate(parts)


def _unpack(y: np.ndarray, nb: int, n: int, c: int):
    s = nb * n
    Q = y[:s].reshape(nb, n)
    P = y[s : 2 * s].reshape(nb, n)
    if c == 0:
        return Q, P, None, None
    m = nb * n * c
    M = y[2 * s : 2 * s + m].reshape(nb, n, c)
    N = y[2 * s + m :].reshape(nb, n, c)
    return Q, P, M, N


def _rhs(model: ModelSpec, nb: int, c: int):
    frame = frame_for(model)
    n = model.dim

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        Q, P, M, N = _unpack(y, nb, n, c)
        if c == 0:
            dq, dp = frame.hamilton_rhs(Q, P)
            return _pack(dq, dp, None, None)
        dq, dp, A, B, R = frame.blocks(Q, P)
        dM = -A @ M - R @ N
        dN = B @ M + np.swapaxes(A, 1, 2) @ N
        return _pack(dq, dp, dM, dN)

    return rhs


def _solve(rhs, t0: float, t1: float, y0: np.ndarray, t_eval, rtol: float, atol: float):
    sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalFailure(
            f"integrator failed: {sol.message}",
            diagnostics={"t_start": t0, "t_target": t1, "t_reached": float(sol.t[-1]) if sol.t.size else t0},
        )
    return sol


def propagate(
    model: ModelSpec,
    Q0: np.ndarray,
    P0: np.ndarray,
    times,
    M0: np.ndarray | None = None,
    N0: np.ndarray | None = None,
    t0: float = 0.0,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Flow (Q, P) and optionally (M, N) from t0 to each requested time.

    Q0, P0 are (B, n); M0, N0 are (B, n, c). Times may lie on either side of t0.
    Returns arrays with a leading axis over `times` in the order given.
    """
    Q0 = np.atleast_2d(np.asarray(Q0, dtype=float))
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    nb, n = Q0.shape
    c = 0 if M0 is None else M0.shape[2]
    times = np.atleast_1d(np.asarray(times, dtype=float))
    y0 = _pack(Q0, P0, M0, N0)
    rhs = _rhs(model, nb, c)

    out = np.empty((times.size, y0.size))
    for forward in (True, False):
        mask = times > t0 if forward else times < t0
        if not np.any(mask):
            continue
        idx = np.nonzero(mask)[0]
        # solve_ivp wants strictly monotone t_eval; repeated times share a row
        uniq, back = np.unique(times[idx], return_inverse=True)
        t_eval = uniq if forward else uniq[::-1]
        sol = _solve(rhs, t0, float(t_eval[-1]), y0, t_eval, rtol, atol)
        rows = sol.y.T if forward else sol.y.T[::-1]
        out[idx] = rows[back]
    out[times == t0] = y0

    Qs, Ps, Ms, Ns = [], [], [], []
    for row in out:
        Q, P, M, N = _unpack(row, nb, n, c)
        Qs.append(Q)
        Ps.append(P)
        Ms.append(M)
        Ns.append(N)
    if c == 0:
        return np.array(Qs), np.array(Ps), None, None
    return np.array(Qs), np.array(Ps), np.array(Ms), np.array(Ns)


def dense_flow(
    model: ModelSpec,
    q0: np.ndarray,
    p0: np.ndarray,
    t1: float,
    columns: int = 0,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> CubicHermiteSpline:
    """Cubic Hermite interpolant through the accepted steps of one extremal (plus J^V_0 if columns)."""
    n = model.dim
    M0 = np.eye(n)[None, :, :columns] if columns else None
    N0 = np.zeros((1, n, columns)) if columns else None
    rhs = _rhs(model, 1, columns)
    y0 = _pack(q0[None], p0[None], M0, N0)
    sol = _solve(rhs, 0.0, t1, y0, None, rtol, atol)
    slopes = np.array([rhs(t, y) for t, y in zip(sol.t, sol.y.T)])
    return CubicHermiteSpline(sol.t, sol.y.T, slopes, axis=0)


def _lanes(model: ModelSpec, x, lam) -> tuple[np.ndarray, np.ndarray]:
    return coords_of(model, x)[None], coords_of(model, lam)[None]


def _vertical_init(nb: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.broadcast_to(np.eye(n), (nb, n, n)).copy(), np.zeros((nb, n, n))


# ── exponential map ───────────────────────────────────────────────────────────


def exp_closed(model: ModelSpec, x: PointState, lam: Covector, t: float) -> PointState:
    closed = closed_form_for(model)
    if closed is None:
        raise CapabilityError(f"no closed-form exponential map for {model.label}; use exp_numeric")
    if t < 0:
        raise InputError(f"exp_closed needs t >= 0, got {t}")
    q = closed.exp(coords_of(model, x)[None], coords_of(model, lam)[None], float(t))[0]
    return PointState(tuple(float(v) for v in q), model)


def exp_numeric(model: ModelSpec, x: PointState, lam: Covector, t: float, tol: float = 1e-12) -> PointState:
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    Q0, P0 = _lanes(model, x, lam)
    Q, _, _, _ = propagate(model, Q0, P0, [float(t)], rtol=tol, atol=tol)
    return PointState(tuple(float(v) for v in Q[0, 0]), model)


def exp_batch(model: ModelSpec, X: np.ndarray, L: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp_X(tL) for many lanes; closed form when available."""
    closed = closed_form_for(model)
    if closed is not None:
        return closed.exp(X, L, t)
    Q, _, _, _ = propagate(model, X, L, [t])
    return Q[0]


def exp_and_jacobian_batch(model: ModelSpec, X: np.ndarray, L: np.ndarray, t: float = 1.0):
    """(exp_X(tL), N^V_0(t)) for many lanes."""
    closed = closed_form_for(model)
    if closed is not None:
        return closed.exp(X, L, t), closed.exp_jacobian(X, L, t)
    M0, N0 = _vertical_init(X.shape[0], model.dim)
    Q, _, _, N = propagate(model, X, L, [t], M0, N0)
    return Q[0], N[0]


def integrate_extremal(model: ModelSpec, x: PointState, lam: Covector, T: float = 1.0, samples: int = 101) -> Extremal:
    """Sample the extremal on an even grid of [0, T]."""
    q0, p0 = _lanes(model, x, lam)
    times = np.linspace(0.0, T, samples)
    Q, P, _, _ = propagate(model, q0, p0, times)
    q, p = Q[:, 0], P[:, 0]
    energy = frame_for(model).hamiltonian(q, p)
    return Extremal(model, q0[0], p0[0], times, q, p, energy)


def variational_coefficients(model: ModelSpec, q, p) -> VariationalCoefficients:
    Q, P = _lanes(model, q, p)
    _, _, A, B, R = frame_for(model).blocks(Q, P)
    return VariationalCoefficients(A=A[0], B=B[0], R=R[0])


# ── Jacobi matrices ───────────────────────────────────────────────────────────


def _state_at(model: ModelSpec, q0: np.ndarray, p0: np.ndarray, s: float, rtol: float, atol: float):
    if s == 0:
        return q0, p0
    Q, P, _, _ = propagate(model, q0, p0, [s], rtol=rtol, atol=atol)
    return Q[0], P[0]


def jacobi_propagate(
    model: ModelSpec,
    x: PointState,
    lam: Covector,
    s: float,
    t: float,
    init: JacobiMatrixState,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> JacobiMatrixState:
    """Propagate a Jacobi matrix given at time s along the extremal of λ to time t."""
    q0, p0 = _lanes(model, x, lam)
    qs, ps = _state_at(model, q0, p0, s, rtol, atol)
    M0 = np.asarray(init.M, dtype=float)[None]
    N0 = np.asarray(init.N, dtype=float)[None]
    _, _, M, N = propagate(model, qs, ps, [t], M0, N0, t0=s, rtol=rtol, atol=atol)
    return JacobiMatrixState(t=float(t), M=M[0, 0], N=N[0, 0])


def vertical_jacobi(
    model: ModelSpec,
    x,
    lam,
    s: float,
    times,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> tuple[np.ndarray, np.ndarray]:
    """J^V_s evaluated at each time: arrays M, N of shape (K, n, n)."""
    q0, p0 = _lanes(model, x, lam)
    qs, ps = _state_at(model, q0, p0, s, rtol, atol)
    M0, N0 = _vertical_init(1, model.dim)
    _, _, M, N = propagate(model, qs, ps, times, M0, N0, t0=s, rtol=rtol, atol=atol)
    return M[:, 0], N[:, 0]


def fundamental_blocks(
    model: ModelSpec,
    x,
    lam,
    times,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> dict[str, np.ndarray]:
    """J^V_0 and J^H_0 at each time, from one 2n-column propagation."""
    n = model.dim
    q0, p0 = _lanes(model, x, lam)
    M0 = np.concatenate([np.eye(n), np.zeros((n, n))], axis=1)[None]
    N0 = np.concatenate([np.zeros((n, n)), np.eye(n)], axis=1)[None]
    _, _, M, N = propagate(model, q0, p0, times, M0, N0, rtol=rtol, atol=atol)
    M, N = M[:, 0], N[:, 0]
    return {"MV": M[:, :, :n], "NV": N[:, :, :n], "MH": M[:, :, n:], "NH": N[:, :, n:]}


def exp_jacobian(model: ModelSpec, x: PointState, lam: Covector, t: float) -> np.ndarray:
    """N^V_0(t) = ∂ exp_x(tλ)/∂λ via the variational equation."""
    if t == 0:
        return np.zeros((model.dim, model.dim))
    _, N = vertical_jacobi(model, x, lam, 0.0, [t])
    return N[0]


def exp_jacobian_fd(model: ModelSpec, x: PointState, lam: Covector, t: float) -> np.ndarray:
    """Central finite differences of exp (cross-check oracle only)."""
    X, L = _lanes(model, x, lam)
    n = model.dim
    h = 1e-6 * max(1.0, float(np.linalg.norm(L)))
    steps = np.eye(n) * h
    plus = exp_batch(model, np.repeat(X, n, axis=0), L + steps, t)
    minus = exp_batch(model, np.repeat(X, n, axis=0), L - steps, t)
    return ((plus - minus) / (2 * h)).T


def _checked_solve(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _SINGULAR_COND:
        raise DomainError(f"{what} is singular")
    return np.linalg.solve(A, B)


def s_matrix(model: ModelSpec, x: PointState, lam: Covector, t: float) -> np.ndarray:
    """S(t) = N^V_0(t)⁻¹ N^H_0(t); symmetric and non-increasing before the first conjugate time."""
    blocks = fundamental_blocks(model, x, lam, [t])
    return _checked_solve(blocks["NV"][0], blocks["NH"][0], "N^V_0(t)")


def riccati_w(model: ModelSpec, x: PointState, lam: Covector, t: float) -> np.ndarray:
    """W(t) = N^V_0(t) M^V_0(t)⁻¹."""
    if t == 0:
        return np.zeros((model.dim, model.dim))
    M, N = vertical_jacobi(model, x, lam, 0.0, [t])
    return _checked_solve(M[0].T, N[0].T, "M^V_0(t)").T


def riccati_residual(model: ModelSpec, x: PointState, lam: Covector, t: float, h: float = 1e-4) -> float:
    """‖Ẇ − (B + AᵀW + WA + WRW)‖ with Ẇ by a fourth-order central difference."""
    times = [t - 2 * h, t - h, t, t + h, t + 2 * h]
    q0, p0 = _lanes(model, x, lam)
    M0, N0 = _vertical_init(1, model.dim)
    Q, P, M, N = propagate(model, q0, p0, times, M0, N0, rtol=1e-12, atol=1e-14)
    W = [_checked_solve(M[k, 0].T, N[k, 0].T, "M^V_0(t)").T for k in range(5)]
    dW = (W[0] - 8 * W[1] + 8 * W[3] - W[4]) / (12 * h)
    _, _, A, B, R = frame_for(model).blocks(Q[2], P[2])
    A, B, R, Wt = A[0], B[0], R[0], W[2]
    return float(np.linalg.norm(dW - (B + A.T @ Wt + Wt @ A + Wt @ R @ Wt)))


def change_of_basis_check(model: ModelSpec, x: PointState, lam: Covector, s: float, t: float) -> float:
    """Max-norm residual of J^V_s(t) = −J^V_0(t) N^V_0(s)⁻¹ N^H_0(s) N^V_s(0) + J^H_0(t) N^V_s(0)."""
    rtol, atol = 1e-13, 1e-15
    fund = fundamental_blocks(model, x, lam, [s, t], rtol=rtol, atol=atol)
    Ms, Ns = vertical_jacobi(model, x, lam, s, [0.0, t], rtol=rtol, atol=atol)
    NVs_0 = Ns[0]
    lhs = np.concatenate([Ms[1], Ns[1]], axis=0)

    JV0_t = np.concatenate([fund["MV"][1], fund["NV"][1]], axis=0)
    JH0_t = np.concatenate([fund["MH"][1], fund["NH"][1]], axis=0)
    coupling = _checked_solve(fund["NV"][0], fund["NH"][0], "N^V_0(s)")
    rhs = -JV0_t @ coupling @ NVs_0 + JH0_t @ NVs_0
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class JacobianEstimate:
    identity_residual: float    # max-norm residual of the N(t) decomposition
    lhs: float                  # det N(t)^{1/n}
    rhs: float                  # sum of the two weighted terms
    holds: bool


def jacobian_decomposition(
    model: ModelSpec,
    x: PointState,
    lam: Covector,
    s: float,
    t: float,
    S0: np.ndarray,
    tol: float = 1e-8,
) -> JacobianEstimate:
    """Split the Lagrangian Jacobi matrix with N(0) = I, M(0) = S0 through times 0 and s.

    N(t) = N^V_s(t) N^V_s(0)⁻¹ + N^V_0(t) N^V_0(s)⁻¹ N(s), and the determinant estimate
    det N(t)^{1/n} ≥ (det N^V_s(t)/det N^V_s(0))^{1/n} + (det N^V_0(t)/det N^V_0(s))^{1/n} det N(s)^{1/n}.
    """
    n = model.dim
    q0, p0 = _lanes(model, x, lam)
    _, _, _, NJ = propagate(model, q0, p0, [s, t], np.asarray(S0, dtype=float)[None], np.eye(n)[None])
    N_s, N_t = NJ[0, 0], NJ[1, 0]
    _, NVs = vertical_jacobi(model, x, lam, s, [0.0, t])
    _, NV0 = vertical_jacobi(model, x, lam, 0.0, [s, t])

    rebuilt = NVs[1] @ _checked_solve(NVs[0].T, np.eye(n), "N^V_s(0)").T + NV0[1] @ _checked_solve(
        NV0[0], N_s, "N^V_0(s)"
    )
    residual = float(np.max(np.abs(rebuilt - N_t)))

    def root(value: float) -> float:
        return float(np.sign(value) * abs(value) ** (1.0 / n))

    lhs = root(np.linalg.det(N_t))
    rhs = root(np.linalg.det(NVs[1]) / np.linalg.det(NVs[0])) + root(
        np.linalg.det(NV0[1]) / np.linalg.det(NV0[0])
    ) * root(np.linalg.det(N_s))
    return JacobianEstimate(residual, lhs, rhs, holds=lhs >= rhs - tol)
