"""
Model definitions, frames and Hamiltonians.

  - ModelSpec validation and spec hashing
  - Hamiltonian values, homogeneity, frame consistency
  - H-type structure identity
  - polynomial frame derivative blocks against finite differences
  - nonholonomic weights and the trigonometric kernels
"""

import numpy as np
import pytest

from errors import CapabilityError, InputError
from models import Covector, ModelSpec, PointState, coords_of
from structures import (
    frame_for,
    generating_frame,
    hamiltonian,
    htype_structure_check,
    measure_density,
    model_from_name,
    nonholonomic_weights,
)
from structures import heisenberg
from structures.special import arc_minus_sin_cubed, generalized_sine, sin_minus_cos_cubed, sinc


# ── ModelSpec ─────────────────────────────────────────────────────────────────


def test_builtin_dimensions(heis, grushin, htype):
    assert (heis.dim, heis.rank) == (3, 2)
    assert (grushin.dim, grushin.rank) == (2, 2)
    assert (htype.dim, htype.rank, htype.htype_k) == (5, 4, 4)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "heisenberg", "dim": 2, "rank": 2},
        {"kind": "grushin", "dim": 2, "rank": 1},
        {"kind": "torus", "dim": 2, "rank": 2},
        {"kind": "htype", "dim": 3, "rank": 2},
    ],
)
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(InputError):
        ModelSpec(**kwargs)


def test_generic_rejects_high_degree():
    with pytest.raises(InputError):
        ModelSpec.generic([[[(1.0, (4, 0))], []]])


def test_generic_rejects_wrong_component_count():
    with pytest.raises(InputError):
        ModelSpec.generic([[[(1.0, (0, 0))]], [[], [(1.0, (0, 0))]]])


def test_htype_rejects_failing_identity():
    with pytest.raises(InputError):
        ModelSpec.htype([[[0, -1], [1, 0]]], np.diag([1.0, 2.0]))


def test_spec_hash_stable_and_distinct(heis, grushin):
    assert heis.spec_hash() == ModelSpec.heisenberg().spec_hash()
    assert heis.spec_hash() != grushin.spec_hash()
    assert len(heis.spec_hash()) == 64


def test_model_from_name_aliases():
    assert model_from_name("Heisenberg3") == ModelSpec.heisenberg()
    assert model_from_name(" grushin ") == ModelSpec.grushin()
    with pytest.raises(InputError):
        model_from_name("engel")


def test_point_and_covector_dimension_checked(heis):
    with pytest.raises(InputError):
        PointState((0.0, 0.0), heis)
    base = PointState((0.0, 0.0, 0.0), heis)
    with pytest.raises(InputError):
        Covector((1.0,), base)
    with pytest.raises(InputError):
        coords_of(heis, [0.0, np.nan, 0.0])


# ── Hamiltonian and frame ─────────────────────────────────────────────────────


def test_hamiltonian_examples(heis, grushin):
    assert hamiltonian(heis, (0, 0, 0), (3, 4, 7)) == pytest.approx(12.5)
    assert hamiltonian(grushin, (0, 0), (0, 5)) == 0.0
    assert hamiltonian(heis, (1, 2, 3), (0, 0, 0)) == 0.0
    assert hamiltonian(heis, (1, 0, 0), (0, 0, 1)) == pytest.approx(0.125)


def test_hamiltonian_accepts_states(heis):
    x = PointState((0.0, 0.0, 0.0), heis)
    lam = Covector((3.0, 4.0, 7.0), x)
    assert hamiltonian(heis, x, lam) == pytest.approx(12.5)


def test_hamiltonian_dimension_mismatch(heis):
    with pytest.raises(InputError):
        hamiltonian(heis, (0, 0), (1, 0, 0))


def test_generating_frame_examples(heis, grushin):
    assert generating_frame(heis, (0, 0, 0)) == [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
    assert generating_frame(heis, (1, 2, 3)) == [(1.0, 0.0, -1.0), (0.0, 1.0, 0.5)]
    assert generating_frame(grushin, (2, 0)) == [(1.0, 0.0), (0.0, 2.0)]
    assert generating_frame(grushin, (0, 0)) == [(1.0, 0.0), (0.0, 0.0)]


@pytest.mark.parametrize("name", ["heisenberg", "grushin", "htype"])
def test_hamiltonian_quadratic_and_frame_consistent(name):
    model = model_from_name(name)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.uniform(-2, 2, model.dim)
        lam = rng.uniform(-3, 3, model.dim)
        c = rng.uniform(-4, 4)
        h = hamiltonian(model, x, lam)
        assert hamiltonian(model, x, c * lam) == pytest.approx(c * c * h, rel=1e-12, abs=1e-14)
        frame = np.array(generating_frame(model, x))
        assert 0.5 * np.sum((frame @ lam) ** 2) == pytest.approx(h, rel=1e-12, abs=1e-14)


def test_measure_density(heis, grushin):
    assert measure_density(heis, (5, -1, 2)) == 1.0
    assert measure_density(grushin, (0.3, 9)) == 1.0
    weighted = ModelSpec.generic(
        [[[(1.0, (0, 0))], []], [[], [(1.0, (0, 0))]]],
        density_terms=[(1.0, (0, 0)), (2.0, (1, 0))],
    )
    assert measure_density(weighted, (3, 0)) == pytest.approx(7.0)


def test_htype_reproduces_heisenberg_hamiltonian(heis):
    as_htype = ModelSpec.htype([[[0, -1], [1, 0]]], np.eye(2))
    rng = np.random.default_rng(11)
    for _ in range(10):
        x, lam = rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3)
        assert hamiltonian(as_htype, x, lam) == pytest.approx(hamiltonian(heis, x, lam), rel=1e-12)


# ── H-type identity ───────────────────────────────────────────────────────────


@pytest.mark.parametrize(
    "J, S, holds",
    [
        ([[0, 1], [-1, 0]], np.eye(2), True),
        ([[0, 2], [-2, 0]], np.eye(2), False),
        ([[0, 2], [-2, 0]], 2 * np.eye(2), True),
    ],
)
def test_htype_structure_check(J, S, holds):
    report = htype_structure_check(3, 2, [J], S)
    assert report.holds is holds
    assert bool(report.violations) is not holds


def test_htype_structure_check_reports_pairs():
    report = htype_structure_check(3, 2, [[[0, 2], [-2, 0]]], np.eye(2))
    (a, b, residual), = report.violations
    assert (a, b) == (0, 0)
    assert residual == pytest.approx(6.0)


def test_htype_structure_check_rejects_non_skew():
    with pytest.raises(InputError):
        htype_structure_check(3, 2, [[[1, 0], [0, 1]]], np.eye(2))


def test_htype_structure_check_rejects_zero_s():
    with pytest.raises(InputError):
        htype_structure_check(3, 2, [[[0, 1], [-1, 0]]], np.zeros((2, 2)))


def test_default_htype_second_layer(htype):
    J = [np.asarray(j) for j in htype.htype_J]
    S = np.asarray(htype.htype_S)
    assert htype_structure_check(5, 4, J, S).holds


# ── frame derivative blocks ───────────────────────────────────────────────────


def _cubic_generic() -> ModelSpec:
    return ModelSpec.generic(
        [
            [[(1.0, (0, 0))], [(1.0, (0, 2))]],
            [[(0.5, (1, 1))], [(1.0, (3, 0))]],
        ]
    )


@pytest.mark.parametrize("name", ["heisenberg", "grushin", "htype", "cubic"])
def test_blocks_match_finite_differences(name):
    model = _cubic_generic() if name == "cubic" else model_from_name(name)
    frame = frame_for(model)
    n = model.dim
    rng = np.random.default_rng(5)
    q = rng.uniform(-1, 1, n)
    p = rng.uniform(-1, 1, n)
    h = 1e-6

    def rhs(qq, pp):
        dq, dp = frame.hamilton_rhs(qq[None], pp[None])
        return dq[0], dp[0]

    A_fd, B_fd, R_fd = np.empty((n, n)), np.empty((n, n)), np.empty((n, n))
    for c in range(n):
        e = np.eye(n)[c] * h
        dq_plus, dp_plus = rhs(q + e, p)
        dq_minus, dp_minus = rhs(q - e, p)
        A_fd[c] = (dq_plus - dq_minus) / (2 * h)
        R_fd[:, c] = -(dp_plus - dp_minus) / (2 * h)
        B_fd[:, c] = (rhs(q, p + e)[0] - rhs(q, p - e)[0]) / (2 * h)

    _, _, A, B, R = frame.blocks(q[None], p[None])
    np.testing.assert_allclose(A[0], A_fd, atol=1e-6)
    np.testing.assert_allclose(B[0], B_fd, atol=1e-6)
    np.testing.assert_allclose(R[0], R_fd, atol=1e-6)
    np.testing.assert_allclose(B[0], B[0].T, atol=1e-14)
    np.testing.assert_allclose(R[0], R[0].T, atol=1e-12)
    assert np.linalg.eigvalsh(B[0]).min() >= -1e-10


def test_hamilton_rhs_is_gradient(grushin):
    frame = frame_for(grushin)
    q, p = np.array([[0.7, -0.2]]), np.array([[0.3, 1.1]])
    dq, dp = frame.hamilton_rhs(q, p)
    h = 1e-6
    for a in range(2):
        e = np.eye(2)[a][None] * h
        dH_dp = (frame.hamiltonian(q, p + e) - frame.hamiltonian(q, p - e)) / (2 * h)
        dH_dq = (frame.hamiltonian(q + e, p) - frame.hamiltonian(q - e, p)) / (2 * h)
        assert dq[0, a] == pytest.approx(dH_dp[0], abs=1e-8)
        assert dp[0, a] == pytest.approx(-dH_dq[0], abs=1e-8)


# ── weights and group law ─────────────────────────────────────────────────────


def test_nonholonomic_weights(heis, grushin, htype, euclidean2, heis_generic):
    assert nonholonomic_weights(heis, (0, 0, 0)) == (1, 1, 2)
    assert nonholonomic_weights(grushin, (0, 0)) == (1, 2)
    assert nonholonomic_weights(grushin, (1, 0)) == (1, 1)
    assert nonholonomic_weights(htype, (0,) * 5) == (1, 1, 1, 1, 2)
    assert nonholonomic_weights(euclidean2, (0.3, -2)) == (1, 1)
    with pytest.raises(CapabilityError):
        nonholonomic_weights(heis_generic, (0, 0, 0))


def test_heisenberg_group_inverse():
    a = np.array([[0.3, -1.2, 2.5]])
    np.testing.assert_allclose(heisenberg.group_mul(a, heisenberg.group_inv(a)), 0.0, atol=1e-15)
    b = np.array([[1.0, 0.0, 0.0]])
    c = np.array([[0.0, 1.0, 0.0]])
    assert heisenberg.group_mul(b, c)[0, 2] == pytest.approx(-0.5)


# ── special functions ─────────────────────────────────────────────────────────


def test_kernels_at_zero():
    assert sinc(0.0) == 1.0
    assert sin_minus_cos_cubed(0.0) == pytest.approx(1 / 3)
    assert arc_minus_sin_cubed(0.0) == pytest.approx(1 / 6)


@pytest.mark.parametrize("fn", [sin_minus_cos_cubed, arc_minus_sin_cubed])
def test_series_branch_continuous(fn):
    assert fn(0.00999999) == pytest.approx(float(fn(0.01000001)), rel=1e-9)


def test_kernels_direct_values():
    s = 1.3
    assert sin_minus_cos_cubed(s) == pytest.approx((np.sin(s) - s * np.cos(s)) / s**3, rel=1e-14)
    assert arc_minus_sin_cubed(s) == pytest.approx((s - np.sin(s)) / s**3, rel=1e-14)


def test_generalized_sine():
    assert generalized_sine(1.0, np.pi / 2) == pytest.approx(1.0)
    assert generalized_sine(-1.0, 1.0) == pytest.approx(np.sinh(1.0))
    assert generalized_sine(0.0, 2.0) == 2.0
    assert generalized_sine(4.0, np.pi / 4) == pytest.approx(0.5)
