"""Fast acceptance subset, run by `main.py selftest`.

Four checks, all seeded and deterministic:
  closed_vs_numeric   exp_closed against the integrated flow (Heisenberg, Grushin)
  distortion          closed β_t against the numeric Jacobi determinant ratio
  conjugate_time      numeric first conjugate time against 2π/|w| on Heisenberg
  wbar                the Grushin proof chain on 10⁴ points of (0, π)

`rtol` / `atol` are the integrator tolerances used by the numeric side; loosening
them is how the failure path is exercised.
"""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

import config
from distortion import beta_numeric_batch, grushin_proof_chain
from flow import propagate
from geodesy import conjugate_time
from models import ModelSpec
from structures import closed_form_for

logger = logging.getLogger(__name__)

EXP_TOL = 1e-8
BETA_TOL = 1e-6
CONJ_TOL = 1e-6


@dataclass
class SelftestReport:
    checks: dict[str, bool]
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _in_cut_lanes(model: ModelSpec, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if model.kind == "heisenberg":
        X = rng.uniform(-1.0, 1.0, (count, 3))
        L = rng.uniform(-1.0, 1.0, (count, 3))
        L[:, 2] = rng.uniform(-0.9, 0.9, count) * 2 * np.pi
    else:
        X = np.stack([rng.uniform(-1.0, 1.0, count), rng.uniform(-1.0, 1.0, count)], axis=1)
        L = np.stack([rng.uniform(-1.0, 1.0, count), rng.uniform(-0.9, 0.9, count) * np.pi], axis=1)
    return X, L


def check_closed_vs_numeric(count: int, seed: int, rtol: float, atol: float) -> float:
    """Max coordinate error of exp_x(tλ) over both closed-form models."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for model in (ModelSpec.heisenberg(), ModelSpec.grushin()):
        X, L = _in_cut_lanes(model, count, rng)
        T = rng.uniform(0.0, 1.0, count)
        exact = closed_form_for(model).exp(X, L, T)
        # γ_λ(t) = γ_{tλ}(1): one common end time for every lane
        Q, _, _, _ = propagate(model, X, L * T[:, None], [1.0], rtol=rtol, atol=atol)
        worst = max(worst, float(np.max(np.abs(Q[0] - exact))))
    return worst


def check_distortion(count: int, seed: int, rtol: float, atol: float) -> float:
    """Max relative error of β_t, closed against numeric, on a common t grid."""
    rng = np.random.default_rng(seed + 1)
    times = np.array([0.1, 0.25, 0.5, 0.75, 0.9])
    worst = 0.0
    for model in (ModelSpec.heisenberg(), ModelSpec.grushin()):
        X, L = _in_cut_lanes(model, count, rng)
        closed = closed_form_for(model)
        numeric = beta_numeric_batch(model, X, L, times, rtol=rtol, atol=atol)
        for k, t in enumerate(times):
            exact = closed.beta(X, L, np.full(count, t))
            rel = np.abs(numeric[k] - exact) / np.maximum(np.abs(exact), 1e-300)
            worst = max(worst, float(rel.max()))
    return worst


def check_conjugate_time(count: int, seed: int) -> float:
    """Max relative gap between the numeric conjugate time and 2π/|w|."""
    rng = np.random.default_rng(seed + 2)
    model = ModelSpec.heisenberg()
    worst = 0.0
    for _ in range(count):
        u, v = rng.uniform(-1.0, 1.0, 2)
        w = rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 6.0)
        exact = 2 * np.pi / abs(w)
        found = conjugate_time(model, np.zeros(3), np.array([u, v, w]), 1.5 * exact)
        if found is None:
            return float("inf")
        worst = max(worst, abs(found - exact) / exact)
    return worst


def run_selftest(
    seed: int = config.DEFAULT_SEED,
    rtol: float = config.RTOL,
    atol: float = config.ATOL,
) -> SelftestReport:
    exp_err = check_closed_vs_numeric(200, seed, rtol, atol)
    beta_err = check_distortion(40, seed, rtol, atol)
    conj_err = check_conjugate_time(10, seed)
    z = np.linspace(0.0, np.pi, 10_002)[1:-1]
    chain = grushin_proof_chain(z)

    checks = {
        "closed_vs_numeric": exp_err <= EXP_TOL,
        "distortion": beta_err <= BETA_TOL,
        "conjugate_time": conj_err <= CONJ_TOL,
        "wbar": chain.passed,
    }
    details = {
        "closed_vs_numeric": {"max_error": exp_err, "tolerance": EXP_TOL},
        "distortion": {"max_relative_error": beta_err, "tolerance": BETA_TOL},
        "conjugate_time": {"max_relative_error": conj_err, "tolerance": CONJ_TOL},
        "wbar": {"samples": chain.samples, "min_wbar": chain.min_wbar, "taylor_root": chain.taylor_root},
    }
    for name, ok in checks.items():
        logger.info("selftest %s: %s", name, "ok" if ok else "FAILED")
    return SelftestReport(checks, details)
