"""
Sampled sets, midpoint clouds and volume-based inequality checks.
"""

import numpy as np
import pytest

from errors import InputError, ResourceError
from geodesy import minimizing_covectors
from measure import (
    ball_volume,
    bbl_check,
    bm_check,
    default_pitch,
    fit_ball_exponent,
    mcp_check,
    midpoint_set,
    sample_set,
    volume_estimate,
)
from models import GridFunction
from structures import frame_for

UNIT_CUBE = [[0, 1], [0, 1], [0, 1]]


def _dist_from(model, centre, pts):
    X = np.broadcast_to(np.asarray(centre, dtype=float), pts.shape)
    sol = minimizing_covectors(model, X, pts)
    assert sol.ok.all()
    return np.sqrt(2 * frame_for(model).hamiltonian(X, sol.covectors))


# ── sampling ──────────────────────────────────────────────────────────────────


def test_sample_box(heis):
    s = sample_set(heis, {"box": UNIT_CUBE}, 10, seed=3)
    assert len(s) == 10
    assert np.all((s.points >= 0) & (s.points <= 1))
    assert s.exact_volume == pytest.approx(1.0)
    again = sample_set(heis, {"box": UNIT_CUBE}, 10, seed=3)
    np.testing.assert_array_equal(s.points, again.points)


@pytest.mark.parametrize(
    "spec, count",
    [
        ({}, 5),
        ({"box": UNIT_CUBE}, 0),
        ({"box": [[0, 1], [0, 1]]}, 5),
        ({"box": [[0, 1], [2, 1], [0, 1]]}, 5),
        ({"ball": {"radius": 1.0}}, 5),
        ({"ball": {"center": [0, 0, 0], "radius": -1.0}}, 5),
        ({"disc": 1}, 5),
    ],
)
def test_sample_set_rejects(heis, spec, count):
    with pytest.raises(InputError):
        sample_set(heis, spec, count)


@pytest.mark.parametrize("centre", [(0.0, 0.0, 0.0), (1.0, -0.5, 0.3)])
def test_sample_ball_heisenberg(heis, centre):
    s = sample_set(heis, {"ball": {"center": list(centre), "radius": 0.5}}, 40, seed=5)
    assert len(s) == 40
    assert s.diagnostics["accepted"] >= 40
    assert np.all(_dist_from(heis, centre, s.points) <= 0.5 + 1e-9)


def test_sample_ball_grushin(grushin):
    s = sample_set(grushin, {"ball": {"center": [0.5, 0.0], "radius": 0.4}}, 30, seed=2)
    assert np.all(_dist_from(grushin, (0.5, 0.0), s.points) <= 0.4 + 1e-9)


# ── midpoint sets ─────────────────────────────────────────────────────────────


def test_midpoint_set_endpoints(heis):
    A = sample_set(heis, {"box": UNIT_CUBE}, 5, seed=1)
    B = sample_set(heis, {"box": [[1, 2], [0, 1], [0, 1]]}, 5, seed=2)
    Z0 = midpoint_set(heis, A, B, 0.0)
    np.testing.assert_allclose(Z0.points, np.unique(A.points, axis=0), atol=1e-12)
    assert Z0.diagnostics["pairs"] == 25
    assert Z0.diagnostics["failures"] == 0


def test_midpoint_set_from_a_point(heis):
    A = sample_set(heis, {"points": [[0, 0, 0]]}, 1)
    B = sample_set(heis, {"points": [[1, 0, 0], [0, 1, 0]]}, 2)
    Z = midpoint_set(heis, A, B, 0.5)
    np.testing.assert_allclose(Z.points, [[0.0, 0.5, 0.0], [0.5, 0.0, 0.0]], atol=1e-9)


def test_midpoint_set_grushin_across_singular_line(grushin):
    A = sample_set(grushin, {"box": [[-2, -1], [0, 1]]}, 12, seed=4)
    B = sample_set(grushin, {"box": [[1, 2], [0, 1]]}, 12, seed=5)
    Z = midpoint_set(grushin, A, B, 0.5)
    assert Z.diagnostics["failure_fraction"] < 0.05
    assert len(Z) > 100


def test_midpoints_stay_in_shrunken_ball(heis):
    ball = sample_set(heis, {"ball": {"center": [0, 0, 0], "radius": 0.5}}, 30, seed=8)
    source = sample_set(heis, {"points": [[0, 0, 0]]}, 1)
    Z = midpoint_set(heis, source, ball, 0.5)
    assert np.all(_dist_from(heis, (0, 0, 0), Z.points) <= 0.25 + 1e-6)


def test_midpoint_set_rejects_t(heis):
    A = sample_set(heis, {"box": UNIT_CUBE}, 2)
    with pytest.raises(InputError):
        midpoint_set(heis, A, A, 1.5)


# ── volume estimates ──────────────────────────────────────────────────────────


def test_volume_estimate_unit_square():
    pts = np.random.default_rng(0).uniform(0, 1, (200_000, 2))
    est = volume_estimate(pts, h=0.05)
    assert est.count == 400
    assert 0.95 <= est.value <= 1.0 + 1e-12


def test_volume_estimate_trivial_clouds():
    single = volume_estimate(np.array([[1.0, 2.0, 3.0]]), h=0.1)
    assert single.count == 1
    assert single.value == pytest.approx(1e-3)
    assert volume_estimate(np.empty((0, 3))).value == 0.0


def test_volume_estimate_errors():
    pts = np.random.default_rng(1).uniform(0, 1, (100, 3))
    with pytest.raises(ResourceError):
        volume_estimate(pts, h=1e-4)
    with pytest.raises(InputError):
        volume_estimate(pts, h=0.0)


def test_default_pitch():
    pts = np.random.default_rng(2).uniform((0, 0), (2, 1), (1280, 2))
    extent = pts.max(axis=0) - pts.min(axis=0)
    assert default_pitch(pts) == pytest.approx(tuple(extent / 8))


# ── ball volumes ──────────────────────────────────────────────────────────────


def test_fit_ball_exponent_heisenberg(heis):
    slope, vols = fit_ball_exponent(heis, (0, 0, 0), [0.4, 0.2, 0.1], count=4000)
    assert slope == pytest.approx(4.0, abs=1e-3)
    assert vols[0] > vols[1] > vols[2] > 0


def test_fit_ball_exponent_grushin_singular(grushin):
    slope, _ = fit_ball_exponent(grushin, (0, 0), [0.4, 0.2, 0.1], count=4000)
    assert slope == pytest.approx(3.0, abs=1e-3)


def test_ball_volume_errors(heis):
    with pytest.raises(InputError):
        ball_volume(heis, (0, 0, 0), 0.0)
    with pytest.raises(InputError):
        fit_ball_exponent(heis, (0, 0, 0), [0.3])


# ── inequality checks ─────────────────────────────────────────────────────────


def test_bm_check_heisenberg(heis):
    A = sample_set(heis, {"box": UNIT_CUBE}, 15, seed=1)
    report = bm_check(heis, A, A, 5, [0.5], h=0.5)
    assert report.verdict == "consistent"
    assert report.samples == 225
    assert report.extra["measure_A"] == pytest.approx(1.0)

    loose = bm_check(heis, A, A, 0.5, [0.5], h=0.5)
    assert loose.verdict == "violated"


def test_bm_check_grushin(grushin):
    A = sample_set(grushin, {"box": [[-2, -1], [0, 1]]}, 20, seed=1)
    B = sample_set(grushin, {"box": [[1, 2], [0, 1]]}, 20, seed=2)
    report = bm_check(grushin, A, B, 5, [0.25, 0.5, 0.75], h=0.25)
    assert [r.t for r in report.rows] == [0.25, 0.5, 0.75]
    assert report.verdict == "consistent"
    assert report.failure_fraction < 0.05


def test_mcp_check(heis, grushin):
    B = sample_set(heis, {"box": [[0.5, 1.5]] * 3}, 200, seed=6)
    assert mcp_check(heis, (0, 0, 0), B, 5, [0.5], h=0.25).verdict == "consistent"
    assert mcp_check(heis, (0, 0, 0), B, 0, [0.5], h=0.25).verdict == "violated"

    G = sample_set(grushin, {"box": [[1, 2], [0, 1]]}, 100, seed=6)
    assert mcp_check(grushin, (0, 0), G, 5, [0.5], h=0.25).verdict == "consistent"


def test_bm_check_rejects_empty(heis):
    A = sample_set(heis, {"box": UNIT_CUBE}, 3)
    empty = sample_set(heis, {"points": [[0, 0, 0]]}, 1)
    empty.points = np.empty((0, 3))
    with pytest.raises(InputError):
        bm_check(heis, A, empty, 5, [0.5])


def _indicator(lo, hi, shape=(3, 3, 3)):
    return GridFunction(np.array(lo), np.array(hi), np.ones(shape))


def test_bbl_check_indicators(heis):
    f = _indicator([0, 0, 0], [1, 1, 1])
    g = _indicator([1, 0, 0], [2, 1, 1])
    for p in (np.inf, -1 / 3):
        report = bbl_check(heis, f, g, 0.5, p, 5, h=0.5)
        assert report.verdict == "consistent"
        assert report.extra["mass_f"] == pytest.approx(1.0)


def test_bbl_check_rejects(heis):
    f = _indicator([0, 0, 0], [1, 1, 1])
    zero = GridFunction(np.zeros(3), np.ones(3), np.zeros((3, 3, 3)))
    flat = GridFunction(np.zeros(2), np.ones(2), np.ones((3, 3)))
    with pytest.raises(InputError):
        bbl_check(heis, zero, f, 0.5, 1.0, 5)
    with pytest.raises(InputError):
        bbl_check(heis, flat, f, 0.5, 1.0, 5)
    with pytest.raises(InputError):
        bbl_check(heis, f, f, 0.5, -1.0, 5)
