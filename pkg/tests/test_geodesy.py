"""
Boundary-value geodesics.

  - closed-form cut times and numeric conjugate times
  - inverse exponential, distances and midpoints on the built-in models
  - metric properties: symmetry, triangle inequality, left invariance
  - the semiconvexity probe at smooth and cut points
"""

import numpy as np
import pytest
from scipy.optimize import brentq

import geodesy
from errors import CapabilityError, DomainError, InputError, NotFoundError, NumericalFailure
from flow import exp_batch
from geodesy import (
    conjugate_time,
    cut_time,
    distance,
    inverse_exp,
    map_chunks,
    midpoint,
    minimizing_covectors,
    semiconvexity_probe,
)
from structures import frame_for, heisenberg

PI = np.pi
SQRT_4PI = 2 * np.sqrt(PI)


def _distances(model, X, Y):
    sol = minimizing_covectors(model, X, Y)
    assert sol.ok.all()
    return np.sqrt(2 * frame_for(model).hamiltonian(np.asarray(X, dtype=float), sol.covectors))


# ── cut and conjugate times ───────────────────────────────────────────────────


def test_cut_time_examples(heis, grushin):
    assert cut_time(heis, (1, 0, PI)) == pytest.approx(2.0)
    assert cut_time(grushin, (3, 2)) == pytest.approx(PI / 2)
    assert cut_time(heis, (1, 1, 0)) == np.inf


def test_cut_time_errors(heis, htype):
    with pytest.raises(CapabilityError):
        cut_time(htype, (1, 0, 0, 0, 1))
    with pytest.raises(DomainError):
        cut_time(heis, (0, 0, 5))


def test_conjugate_time_heisenberg(heis):
    assert conjugate_time(heis, (0, 0, 0), (1, 0, PI), 3.0) == pytest.approx(2.0, abs=1e-6)
    assert conjugate_time(heis, (0, 0, 0), (1, 0, 0), 10.0) is None


def test_conjugate_time_grushin_from_singular_line(grushin):
    # det N^V_0 ∝ θ (sin θ − θ cos θ), θ = vt: first zero at tan θ = θ, after the cut time 1
    theta = brentq(lambda s: np.sin(s) - s * np.cos(s), 4.0, 4.7)
    found = conjugate_time(grushin, (0, 0), (1, PI), 2.0)
    assert found == pytest.approx(theta / PI, abs=1e-6)
    assert found > 1.0


def test_conjugate_time_rejects_bad_horizon(heis):
    with pytest.raises(InputError):
        conjugate_time(heis, (0, 0, 0), (1, 0, 1), 0.0)


def test_conjugate_time_long_horizon_finds_first_zero(heis):
    # on a 250-wide window the first zero at t = 2 lands on the eighth grid node
    assert conjugate_time(heis, (0, 0, 0), (1, 0, PI), 250.0) == pytest.approx(2.0, abs=1e-6)
    assert conjugate_time(heis, (0, 0, 0), (0.6, 0.8, 2 * PI), 40.0) == pytest.approx(1.0, abs=1e-6)


def test_conjugate_time_refinement_failure(heis, monkeypatch):
    monkeypatch.setattr(geodesy, "exp_jacobian", lambda model, q0, p0, t: np.eye(3))
    with pytest.raises(NumericalFailure) as info:
        conjugate_time(heis, (0, 0, 0), (1, 0, PI), 3.0)
    assert len(info.value.diagnostics["bracket"]) == 2


# ── inverse exponential ───────────────────────────────────────────────────────


def test_inverse_exp_horizontal_line(heis):
    sols = inverse_exp(heis, (0, 0, 0), (1.5, 0, 0))
    best = next(s for s in sols if s.minimizing)
    assert best.covector == pytest.approx((1.5, 0.0, 0.0), abs=1e-7)
    assert best.length == pytest.approx(1.5)
    assert best.residual <= 1e-9
    assert best.t_cut > 1e6
    assert not best.multiple_minimizers


def test_inverse_exp_vertical_axis(heis):
    sols = inverse_exp(heis, (0, 0, 0), (0, 0, 1))
    best = next(s for s in sols if s.minimizing)
    assert best.length == pytest.approx(SQRT_4PI, abs=1e-7)
    assert abs(best.covector[2]) == pytest.approx(2 * PI, abs=1e-6)
    assert best.multiple_minimizers


def test_inverse_exp_grushin_line(grushin):
    sols = inverse_exp(grushin, (1, 0), (2, 0))
    best = next(s for s in sols if s.minimizing)
    assert best.covector == pytest.approx((1.0, 0.0), abs=1e-7)
    assert best.length == pytest.approx(1.0)


def test_inverse_exp_same_point(heis):
    (sol,) = inverse_exp(heis, (0.2, 0.3, 0.4), (0.2, 0.3, 0.4))
    assert sol.covector == (0.0, 0.0, 0.0)
    assert sol.length == 0.0 and sol.minimizing


def test_inverse_exp_numeric_model(euclidean2):
    sols = inverse_exp(euclidean2, (0, 0), (3, 4), starts=8)
    assert sols[0].minimizing
    assert sols[0].length == pytest.approx(5.0)


def test_inverse_exp_not_found(heis_generic):
    with pytest.raises(NotFoundError) as info:
        inverse_exp(heis_generic, (0, 0, 0), (1, 0.5, 0.2), starts=2, tol=1e-300)
    assert info.value.exit_code == 3
    assert info.value.diagnostics["starts"] == 2


def test_inverse_exp_needs_starts_without_seeds(euclidean2):
    with pytest.raises(InputError):
        inverse_exp(euclidean2, (0, 0), (1, 0), starts=0)


def test_inverse_exp_recovers_covector(heis):
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, (20, 3))
    L = rng.uniform(-1, 1, (20, 3))
    L[:, 2] = rng.uniform(-0.9, 0.9, 20) * 2 * PI
    Y = exp_batch(heis, X, L, 1.0)
    sol = minimizing_covectors(heis, X, Y)
    assert sol.ok.all()
    np.testing.assert_allclose(sol.covectors, L, atol=1e-7)


# ── distances and midpoints ───────────────────────────────────────────────────


def test_distance_examples(heis, grushin):
    assert distance(heis, (0, 0, 0), (1, 0, 0)) == pytest.approx(1.0)
    assert distance(heis, (0, 0, 0), (0, 0, 1)) == pytest.approx(3.5449077, abs=1e-7)
    assert distance(grushin, (-1, 0), (1, 0)) == pytest.approx(2.0)


def test_distance_symmetric_and_triangle(heis):
    rng = np.random.default_rng(1)
    X, Y, Z = (rng.uniform(-1, 1, (15, 3)) for _ in range(3))
    dxy, dyx = _distances(heis, X, Y), _distances(heis, Y, X)
    np.testing.assert_allclose(dxy, dyx, atol=1e-8)
    dxz, dyz = _distances(heis, X, Z), _distances(heis, Y, Z)
    assert np.all(dxz <= dxy + dyz + 1e-7)


def test_distance_left_invariant(heis):
    rng = np.random.default_rng(4)
    X, Y, G = (rng.uniform(-1, 1, (10, 3)) for _ in range(3))
    base = _distances(heis, X, Y)
    moved = _distances(heis, heisenberg.group_mul(G, X), heisenberg.group_mul(G, Y))
    np.testing.assert_allclose(moved, base, atol=1e-7)


def test_midpoint_examples(heis, grushin):
    x, y = (0.1, -0.2, 0.3), (0.7, 0.4, -0.5)
    assert midpoint(heis, x, y, 0.0).coords == pytest.approx(x)
    assert midpoint(heis, x, y, 1.0).coords == pytest.approx(y, abs=1e-9)
    assert midpoint(heis, (0, 0, 0), (1, 0, 0), 0.5).coords == pytest.approx((0.5, 0.0, 0.0))
    assert midpoint(grushin, (-1, 0), (1, 0), 0.25).coords == pytest.approx((-0.5, 0.0), abs=1e-9)


def test_midpoint_constant_speed(heis):
    x, y = (0.0, 0.0, 0.0), (0.6, -0.3, 0.4)
    d = distance(heis, x, y)
    for t in (0.25, 0.5, 0.8):
        m = midpoint(heis, x, y, t).coords
        assert distance(heis, x, m) == pytest.approx(t * d, abs=1e-6)


# ── batched solver plumbing ───────────────────────────────────────────────────


def test_map_chunks_keeps_order():
    out = map_chunks(lambda s: list(range(s.start, s.stop)), 37, threads=3)
    assert [i for chunk in out for i in chunk] == list(range(37))
    assert map_chunks(lambda s: s, 0, threads=4) == []


def test_minimizing_covectors_threads_agree(grushin):
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 1, (24, 2))
    Y = rng.uniform(-1, 1, (24, 2))
    one = minimizing_covectors(grushin, X, Y, threads=1)
    many = minimizing_covectors(grushin, X, Y, threads=4)
    np.testing.assert_array_equal(one.ok, many.ok)
    np.testing.assert_allclose(one.covectors[one.ok], many.covectors[many.ok], atol=1e-12)


# ── semiconvexity probe ───────────────────────────────────────────────────────


def test_probe_smooth_point(heis):
    rows = semiconvexity_probe(heis, (0, 0, 0), (1, 0, 0), [1e-1, 1e-2, 1e-3])
    assert [r for r, _ in rows] == [1e-1, 1e-2, 1e-3]
    for _, q in rows:
        assert -50 <= q <= 50


def test_probe_cut_point(heis):
    rows = semiconvexity_probe(heis, (0, 0, 0), (0, 0, 1), [1e-1, 1e-2, 1e-3])
    qs = [q for _, q in rows]
    assert qs[-1] <= -1e3
    assert qs[0] > qs[1] > qs[2]


@pytest.mark.parametrize("radii", [[1e-2, 1e-1], [1e-2, 1e-5], [0.0]])
def test_probe_rejects_radii(heis, radii):
    with pytest.raises(InputError):
        semiconvexity_probe(heis, (0, 0, 0), (1, 0, 0), radii)


def test_probe_rejects_coincident_points(heis):
    with pytest.raises(DomainError):
        semiconvexity_probe(heis, (1, 0, 0), (1, 0, 0), [1e-2])
