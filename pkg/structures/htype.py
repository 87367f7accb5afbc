"""Generalized H-type Carnot groups in exponential coordinates.

First layer x ∈ R^k, second layer z ∈ R^{n−k}; the frame is

  X_i(x, z) = ∂_{x_i} + ½ Σ_α (J_α x)_i ∂_{z_α},   i = 1..k

with skew J_α satisfying J_α J_β + J_β J_α = −2 δ_αβ S². The matching group law is
(x, z)⋆(x′, z′) = (x + x′, z_α + z′_α + ½⟨J_α x′, x⟩).
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from errors import InputError
from models import ModelSpec, Polynomial

_TOL = 1e-12


@dataclass
class StructureReport:
    holds: bool
    violations: list[tuple[int, int, float]] = field(default_factory=list)  # (α, β, max residual)


def htype_structure_check(n: int, k: int, J: Sequence, S) -> StructureReport:
    """Check J_α J_β + J_β J_α = −2 δ_αβ S² for all pairs of second-layer basis vectors."""
    J_arr = [np.asarray(j, dtype=float) for j in J]
    S_arr = np.asarray(S, dtype=float)
    if len(J_arr) != n - k or n - k < 1:
        raise InputError(f"expected n−k = {n - k} ≥ 1 matrices J, got {len(J_arr)}")
    for idx, j in enumerate(J_arr):
        if j.shape != (k, k):
            raise InputError(f"J[{idx}] has shape {j.shape}, expected ({k}, {k})")
        if np.max(np.abs(j + j.T)) > _TOL:
            raise InputError(f"J[{idx}] is not skew-symmetric")
    if S_arr.shape != (k, k) or np.max(np.abs(S_arr - S_arr.T)) > _TOL:
        raise InputError("S must be a symmetric k×k matrix")
    eig = np.linalg.eigvalsh(S_arr)
    if eig.min() < -_TOL or np.max(np.abs(eig)) == 0:
        raise InputError("S must be non-negative and non-zero")

    S2 = S_arr @ S_arr
    violations = []
    for a in range(len(J_arr)):
        for b in range(a, len(J_arr)):
            lhs = J_arr[a] @ J_arr[b] + J_arr[b] @ J_arr[a]
            rhs = -2.0 * S2 if a == b else np.zeros_like(S2)
            res = float(np.max(np.abs(lhs - rhs)))
            if res > _TOL:
                violations.append((a, b, res))
    return StructureReport(holds=not violations, violations=violations)


def frame_terms(model: ModelSpec) -> tuple[tuple[Polynomial, ...], ...]:
    k, n = model.htype_k, model.dim
    J = [np.asarray(j) for j in model.htype_J]
    fields = []
    for i in range(k):
        comps: list[Polynomial] = []
        for a in range(n):
            if a < k:
                comps.append(((1.0, (0,) * n),) if a == i else ())
                continue
            row = J[a - k][i]
            terms = []
            for j in range(k):
                if row[j] != 0:
                    exps = [0] * n
                    exps[j] = 1
                    terms.append((0.5 * float(row[j]), tuple(exps)))
            comps.append(tuple(terms))
        fields.append(tuple(comps))
    return tuple(fields)


def weights(model: ModelSpec) -> tuple[int, ...]:
    return (1,) * model.htype_k + (2,) * (model.dim - model.htype_k)


def group_mul(model: ModelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = model.htype_k
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    out = a + b
    for alpha, j in enumerate(model.htype_J):
        Jb = b[:, :k] @ np.asarray(j).T
        out[:, k + alpha] += 0.5 * np.sum(Jb * a[:, :k], axis=1)
    return out


def operator_norm(model: ModelSpec) -> float:
    return max(float(np.linalg.norm(np.asarray(j), 2)) for j in model.htype_J)
