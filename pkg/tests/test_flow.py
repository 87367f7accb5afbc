"""
Hamiltonian flow and Jacobi matrices.

  - closed-form exponential maps and their numeric counterparts
  - energy conservation and time homogeneity
  - N^V_0 as the Jacobian of exp (variational ODE, closed form, finite differences)
  - S(t), W(t) and the change-of-basis identity
"""

import numpy as np
import pytest

from errors import CapabilityError, DomainError, InputError
from flow import (
    change_of_basis_check,
    exp_batch,
    exp_closed,
    exp_jacobian,
    exp_jacobian_fd,
    exp_numeric,
    fundamental_blocks,
    integrate_extremal,
    jacobi_propagate,
    jacobian_decomposition,
    propagate,
    riccati_residual,
    riccati_w,
    s_matrix,
    variational_coefficients,
    vertical_jacobi,
)
from models import JacobiMatrixState, ModelSpec
from structures import heisenberg, model_from_name

PI = np.pi


# ── exponential map ───────────────────────────────────────────────────────────


def test_exp_closed_heisenberg_examples(heis):
    assert exp_closed(heis, (0, 0, 0), (1, 0, 0), 1.0).coords == pytest.approx((1.0, 0.0, 0.0))
    assert exp_closed(heis, (0, 0, 0), (0, 0, 5), 1.0).coords == pytest.approx((0.0, 0.0, 0.0))
    q = exp_closed(heis, (0, 0, 0), (1, 0, 2 * PI), 1.0).coords
    assert q == pytest.approx((0.0, 0.0, 1 / (4 * PI)), abs=1e-12)


def test_exp_closed_grushin_straight_line(grushin):
    q = exp_closed(grushin, (0.4, -1.5), (2.0, 0.0), 0.7).coords
    assert q == pytest.approx((0.4 + 1.4, -1.5), abs=1e-14)


def test_exp_closed_requires_closed_model(htype):
    with pytest.raises(CapabilityError):
        exp_closed(htype, (0,) * 5, (1, 0, 0, 0, 0), 1.0)


def test_exp_closed_rejects_negative_time(heis, grushin):
    with pytest.raises(InputError):
        exp_closed(heis, (0, 0, 0), (1, 0, 0), -0.5)
    with pytest.raises(InputError):
        exp_closed(grushin, (0, 0), (1, 1), -1e-12)
    assert exp_closed(grushin, (0.2, 0.3), (1, 1), 0.0).coords == pytest.approx((0.2, 0.3), abs=1e-15)


def test_exp_closed_is_left_translated(heis):
    g = np.array([0.3, -0.7, 1.1])
    lam = np.array([0.8, 0.2, 1.5])
    at_g = np.asarray(exp_closed(heis, g, lam, 1.0).coords)
    # covector at g pulled back to the origin keeps its horizontal part
    h = np.array([lam[0] - 0.5 * g[1] * lam[2], lam[1] + 0.5 * g[0] * lam[2], lam[2]])
    from_origin = heisenberg.exp(np.zeros((1, 3)), h[None], 1.0)[0]
    np.testing.assert_allclose(at_g, heisenberg.group_mul(g, from_origin), atol=1e-14)


@pytest.mark.parametrize(
    "name, x, lam",
    [
        ("heisenberg", (0, 0, 0), (1, 0, 2 * PI)),
        ("heisenberg", (0.5, -0.2, 0.1), (0.7, -1.1, 2.5)),
        ("grushin", (1, 0), (0, 1)),
        ("grushin", (-0.3, 0.4), (1.2, -2.0)),
    ],
)
def test_exp_numeric_matches_closed(name, x, lam):
    model = ModelSpec.heisenberg() if name == "heisenberg" else ModelSpec.grushin()
    numeric = exp_numeric(model, x, lam, 1.0, tol=1e-12).coords
    closed = exp_closed(model, x, lam, 1.0).coords
    np.testing.assert_allclose(numeric, closed, atol=1e-8)


def test_exp_numeric_zero_covector(grushin, htype):
    assert exp_numeric(grushin, (0.3, 2.0), (0, 0), 1.0).coords == (0.3, 2.0)
    x = (0.1, 0.2, 0.3, 0.4, 0.5)
    assert exp_numeric(htype, x, (0,) * 5, 1.0).coords == pytest.approx(x)


def test_exp_numeric_rejects_bad_tolerance(heis):
    with pytest.raises(DomainError):
        exp_numeric(heis, (0, 0, 0), (1, 0, 0), 1.0, tol=0.0)


def test_htype_corank_one_matches_heisenberg(heis):
    as_htype = ModelSpec.htype([[[0, -1], [1, 0]]], np.eye(2))
    lam = (0.6, -0.4, 1.7)
    numeric = exp_numeric(as_htype, (0, 0, 0), lam, 1.0).coords
    np.testing.assert_allclose(numeric, exp_closed(heis, (0, 0, 0), lam, 1.0).coords, atol=1e-8)


def test_generic_frame_follows_closed_form(heis, heis_generic):
    X = np.array([[0.0, 0.0, 0.0], [0.2, -0.4, 1.0]])
    L = np.array([[1.0, 0.5, 2.0], [-0.3, 0.9, -3.0]])
    np.testing.assert_allclose(exp_batch(heis_generic, X, L, 1.0), exp_batch(heis, X, L, 1.0), atol=1e-8)


def test_time_homogeneity(grushin):
    X = np.array([[0.5, 0.1]])
    L = np.array([[1.0, 1.3]])
    t = 0.37
    Q_scaled, _, _, _ = propagate(grushin, X, t * L, [1.0])
    Q_direct, _, _, _ = propagate(grushin, X, L, [t])
    np.testing.assert_allclose(Q_scaled[0], Q_direct[0], atol=1e-8)


def test_propagate_backwards_and_unordered(heis):
    X, L = np.zeros((1, 3)), np.array([[1.0, 0.0, 1.0]])
    Q, _, _, _ = propagate(heis, X, L, [0.8, -0.5, 0.0, 0.3, 0.8])
    times = np.array([0.8, -0.5, 0.0, 0.3, 0.8])
    exact = heisenberg.exp(np.zeros((5, 3)), np.repeat(L, 5, axis=0), times)
    np.testing.assert_allclose(Q[:, 0], exact, atol=1e-9)


# ── extremals ─────────────────────────────────────────────────────────────────


@pytest.mark.parametrize(
    "name, x, lam",
    [
        ("heisenberg", (0, 0, 0), (1, 0.5, 2)),
        ("grushin", (0.5, 0), (1, 1)),
        ("htype", (0,) * 5, (1, -0.5, 0.3, 0.2, 0.6)),
    ],
)
def test_extremal_conserves_energy(name, x, lam):
    model = model_from_name(name)
    ext = integrate_extremal(model, x, lam, T=1.0, samples=41)
    assert ext.times[0] == 0.0 and ext.times[-1] == 1.0
    np.testing.assert_array_equal(ext.q[0], np.asarray(x, dtype=float))
    np.testing.assert_array_equal(ext.p[0], np.asarray(lam, dtype=float))
    assert ext.energy_drift <= 1e-9


def test_extremal_of_zero_length(grushin):
    ext = integrate_extremal(grushin, (1, 0), (1, 1), T=0.0, samples=3)
    np.testing.assert_array_equal(ext.q, np.repeat([[1.0, 0.0]], 3, axis=0))


def test_variational_coefficients_signs(htype):
    rng = np.random.default_rng(2)
    for _ in range(5):
        vc = variational_coefficients(htype, rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5))
        np.testing.assert_allclose(vc.B, vc.B.T, atol=1e-14)
        np.testing.assert_allclose(vc.R, vc.R.T, atol=1e-12)
        assert np.linalg.eigvalsh(vc.B).min() >= -1e-10


# ── Jacobi matrices ───────────────────────────────────────────────────────────


def test_jacobi_initial_condition(heis):
    init = JacobiMatrixState(0.0, np.eye(3), np.zeros((3, 3)))
    state = jacobi_propagate(heis, (0, 0, 0), (1, 0, PI), 0.0, 0.0, init)
    np.testing.assert_array_equal(state.M, np.eye(3))
    np.testing.assert_array_equal(state.N, np.zeros((3, 3)))


def test_jacobi_matches_closed_jacobian(heis):
    lam = np.array([1.0, 0.0, PI])
    times = [0.2, 0.7, 1.3, 1.9]
    M, N = vertical_jacobi(heis, (0, 0, 0), lam, 0.0, times)
    closed = heisenberg.exp_jacobian(np.zeros((4, 3)), np.repeat(lam[None], 4, axis=0), np.array(times))
    np.testing.assert_allclose(N, closed, atol=1e-8)
    assert np.all(np.linalg.det(N) > 0)
    for Mk, Nk, t in zip(M, N, times):
        assert JacobiMatrixState(t, Mk, Nk).lagrangian_defect <= 1e-9


def test_jacobi_straight_line_never_degenerates(heis):
    _, N = vertical_jacobi(heis, (0, 0, 0), (1, 0, 0), 0.0, np.linspace(0.5, 10.0, 20))
    assert np.all(np.linalg.det(N) > 0)


def test_jacobi_propagate_from_interior_time(grushin):
    x, lam = (0.5, 0.0), (1.0, 1.0)
    init = JacobiMatrixState(0.3, np.eye(2), np.zeros((2, 2)))
    state = jacobi_propagate(grushin, x, lam, 0.3, 0.9, init)
    M, N = vertical_jacobi(grushin, x, lam, 0.3, [0.9])
    np.testing.assert_allclose(state.M, M[0], atol=1e-12)
    np.testing.assert_allclose(state.N, N[0], atol=1e-12)


def test_exp_jacobian_examples(heis, grushin):
    np.testing.assert_array_equal(exp_jacobian(heis, (0, 0, 0), (1, 0, 1), 0.0), np.zeros((3, 3)))
    assert abs(np.linalg.det(exp_jacobian(heis, (0, 0, 0), (1, 0, 2 * PI), 1.0))) <= 1e-8
    ode = exp_jacobian(grushin, (1, 0), (1, 0), 1.0)
    fd = exp_jacobian_fd(grushin, (1, 0), (1, 0), 1.0)
    np.testing.assert_allclose(ode, fd, atol=1e-6)


def test_exp_jacobian_numeric_model(heis_generic):
    x, lam = np.array([0.1, 0.2, 0.0]), np.array([0.4, -0.6, 1.2])
    ode = exp_jacobian(heis_generic, x, lam, 0.8)
    closed = heisenberg.exp_jacobian(x[None], lam[None], 0.8)[0]
    np.testing.assert_allclose(ode, closed, atol=1e-8)


def test_s_matrix_symmetric_and_non_increasing(heis):
    lam = (1.0, 0.0, PI)
    times = np.linspace(0.3, 1.9, 12)
    blocks = fundamental_blocks(heis, (0, 0, 0), lam, times)
    S = [np.linalg.solve(nv, nh) for nv, nh in zip(blocks["NV"], blocks["NH"])]
    for Sk in S:
        np.testing.assert_allclose(Sk, Sk.T, atol=1e-7 * (1 + np.abs(Sk).max()))
    for S1, S2 in zip(S, S[1:]):
        diff = 0.5 * ((S1 - S2) + (S1 - S2).T)
        assert np.linalg.eigvalsh(diff).min() >= -1e-6 * (1 + np.abs(S1).max())


def test_s_matrix_at_unit_time(heis):
    S = s_matrix(heis, (0, 0, 0), (1.0, 0.0, PI), 1.0)
    np.testing.assert_allclose(S, S.T, atol=1e-8 * (1 + np.abs(S).max()))


def test_s_matrix_blows_up_near_zero(heis):
    S = s_matrix(heis, (0, 0, 0), (1.0, 0.0, PI), 1e-3)
    assert np.abs(S).max() > 1e3


def test_riccati_w(heis):
    np.testing.assert_array_equal(riccati_w(heis, (0, 0, 0), (1, 0, 1), 0.0), np.zeros((3, 3)))
    W = riccati_w(heis, (0, 0, 0), (1, 0, 1), 0.1)
    np.testing.assert_allclose(W, W.T, atol=1e-8)
    assert np.linalg.eigvalsh(0.5 * (W + W.T)).min() >= -1e-9
    assert riccati_residual(heis, (0, 0, 0), (1, 0, 1), 0.3) <= 1e-6


@pytest.mark.parametrize(
    "name, x, lam, s, t, tol",
    [
        ("heisenberg", (0, 0, 0), (1, 0, 1), 0.5, 0.8, 1e-7),
        ("heisenberg", (0, 0, 0), (1, 0, 1), 0.5, 0.5, 1e-9),
        ("grushin", (0.5, 0), (1, 1), 0.3, 0.9, 1e-7),
    ],
)
def test_change_of_basis(name, x, lam, s, t, tol):
    model = ModelSpec.heisenberg() if name == "heisenberg" else ModelSpec.grushin()
    assert change_of_basis_check(model, x, lam, s, t) <= tol


def test_jacobian_decomposition_rebuilds_n(heis):
    est = jacobian_decomposition(heis, (0, 0, 0), (1, 0, 1), 0.5, 0.8, np.zeros((3, 3)))
    assert est.identity_residual <= 1e-6
    assert np.isfinite(est.lhs) and np.isfinite(est.rhs)
