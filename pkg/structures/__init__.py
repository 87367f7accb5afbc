from functools import lru_cache

import numpy as np

from errors import CapabilityError, InputError
from models import Covector, ModelSpec, PointState, coords_of

from . import grushin, heisenberg, htype
from .frame import PolynomialFrame
from .htype import StructureReport, htype_structure_check
from .protocol import ClosedFormStructure

__all__ = [
    "ClosedFormStructure",
    "PolynomialFrame",
    "StructureReport",
    "closed_form_for",
    "frame_for",
    "generating_frame",
    "hamiltonian",
    "htype_structure_check",
    "measure_density",
    "model_from_name",
    "nonholonomic_weights",
]


@lru_cache(maxsize=32)
def frame_for(model: ModelSpec) -> PolynomialFrame:
    """Polynomial frame realizing the model's generating vector fields."""
    if model.kind == "heisenberg":
        return PolynomialFrame(3, heisenberg.FRAME)
    if model.kind == "grushin":
        return PolynomialFrame(2, grushin.FRAME)
    if model.kind == "htype":
        return PolynomialFrame(model.dim, htype.frame_terms(model))
    return PolynomialFrame(model.dim, model.frame_defs, model.density_terms)


def closed_form_for(model: ModelSpec) -> ClosedFormStructure | None:
    """Closed-form implementation, or None when only the numeric flow is available."""
    if model.kind == "heisenberg":
        return heisenberg
    if model.kind == "grushin":
        return grushin
    return None


def model_from_name(name: str) -> ModelSpec:
    """Built-in model by name; H-type defaults to the corank-1 group with k=4, S=diag(1,1,2,2)."""
    key = name.strip().lower()
    if key in ("heisenberg", "heisenberg3"):
        return ModelSpec.heisenberg()
    if key in ("grushin", "grushin2"):
        return ModelSpec.grushin()
    if key in ("htype", "h-type"):
        J = np.zeros((4, 4))
        J[0, 1], J[1, 0] = -1.0, 1.0
        J[2, 3], J[3, 2] = -2.0, 2.0
        return ModelSpec.htype([J], np.diag([1.0, 1.0, 2.0, 2.0]))
    raise InputError(f"unknown built-in model {name!r}; use heisenberg, grushin, htype or a .toml path")


# ── MODULE models operations ──────────────────────────────────────────────────


def hamiltonian(model: ModelSpec, x: PointState, lam: Covector) -> float:
    q = coords_of(model, x)
    p = coords_of(model, lam)
    return float(frame_for(model).hamiltonian(q[None], p[None])[0])


def generating_frame(model: ModelSpec, x: PointState) -> list[tuple[float, ...]]:
    q = coords_of(model, x)
    X = frame_for(model).fields(q[None])[0]
    return [tuple(float(c) for c in row) for row in X]


def measure_density(model: ModelSpec, x: PointState) -> float:
    q = coords_of(model, x)
    return float(frame_for(model).density(q[None])[0])


def nonholonomic_weights(model: ModelSpec, x: PointState) -> tuple[int, ...]:
    """Weights w_i(x) of the flag at x; Q(x) = Σ w_i."""
    q = coords_of(model, x)
    if model.kind == "heisenberg":
        return heisenberg.WEIGHTS
    if model.kind == "grushin":
        return grushin.weights(float(q[0]))
    if model.kind == "htype":
        return htype.weights(model)
    X = frame_for(model).fields(q[None])[0]
    if np.linalg.matrix_rank(X, tol=1e-12) == model.dim:
        return (1,) * model.dim
    raise CapabilityError("weights of a non-Riemannian generic frame need Lie brackets, which are not computed")
