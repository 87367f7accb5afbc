import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from errors import InputError

KINDS = ("heisenberg", "grushin", "htype", "generic")

# term = (coefficient, exponent tuple); polynomial = tuple of terms
Term = tuple[float, tuple[int, ...]]
Polynomial = tuple[Term, ...]


@dataclass(frozen=True)
class ModelSpec:
    """Which sub-Riemannian structure, plus its reference density."""
    kind: str                       # one of KINDS
    dim: int                        # n
    rank: int                       # m, size of the generating frame
    htype_k: int | None = None
    htype_J: tuple = ()             # (n-k) skew k×k matrices as nested tuples
    htype_S: tuple = ()             # symmetric k×k
    # generic: m fields, each a tuple of n component polynomials
    frame_defs: tuple[tuple[Polynomial, ...], ...] = ()
    density_terms: Polynomial = ()  # empty → density 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "heisenberg" and (self.dim, self.rank) != (3, 2):
            raise InputError("Heisenberg3 requires dim=3, rank=2")
        if self.kind == "grushin" and (self.dim, self.rank) != (2, 2):
            raise InputError("Grushin2 requires dim=2, rank=2")
        if self.kind == "htype":
            k = self.htype_k
            if k is None or not (1 <= k < self.dim) or self.rank != k:
                raise InputError("HType requires 1 ≤ k < n and rank = k")
            if len(self.htype_J) != self.dim - k:
                raise InputError(f"HType needs n−k = {self.dim - k} J matrices, got {len(self.htype_J)}")
        if self.kind == "generic":
            if len(self.frame_defs) != self.rank or self.rank < 1:
                raise InputError("generic frame must define exactly `rank` vector fields")
            for field_def in self.frame_defs:
                if len(field_def) != self.dim:
                    raise InputError("every generic vector field needs `dim` component polynomials")
                for poly in field_def:
                    _check_polynomial(poly, self.dim)
        if self.density_terms:
            _check_polynomial(self.density_terms, self.dim)

    # ── constructors ──────────────────────────────────────────────────────────

    @classmethod
    def heisenberg(cls) -> "ModelSpec":
        return cls(kind="heisenberg", dim=3, rank=2)

    @classmethod
    def grushin(cls) -> "ModelSpec":
        return cls(kind="grushin", dim=2, rank=2)

    @classmethod
    def htype(cls, J: Sequence, S: Sequence) -> "ModelSpec":
        """Build a generalized H-type model; rejects data failing the structure identity."""
        from structures.htype import htype_structure_check

        J_arr = [np.asarray(j, dtype=float) for j in J]
        S_arr = np.asarray(S, dtype=float)
        if not J_arr:
            raise InputError("HType needs at least one J matrix")
        k = J_arr[0].shape[0]
        report = htype_structure_check(k + len(J_arr), k, J_arr, S_arr)
        if not report.holds:
            raise InputError(
                "HType structure identity fails",
                diagnostics={"violations": report.violations},
            )
        return cls(
            kind="htype",
            dim=k + len(J_arr),
            rank=k,
            htype_k=k,
            htype_J=tuple(_to_nested(j) for j in J_arr),
            htype_S=_to_nested(S_arr),
        )

    @classmethod
    def generic(cls, frame_defs: Sequence, density_terms: Sequence = ()) -> "ModelSpec":
        frame = tuple(
            tuple(tuple((float(c), tuple(int(e) for e in exps)) for c, exps in comp) for comp in fld)
            for fld in frame_defs
        )
        dim = len(frame[0]) if frame else 0
        density = tuple((float(c), tuple(int(e) for e in exps)) for c, exps in density_terms)
        return cls(kind="generic", dim=dim, rank=len(frame), frame_defs=frame, density_terms=density)

    # ── identity ──────────────────────────────────────────────────────────────

    def canonical(self) -> dict[str, Any]:
        return asdict(self)

    def spec_hash(self) -> str:
        """sha256 over the canonical JSON form; recorded in every report."""
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def label(self) -> str:
        if self.kind == "htype":
            return f"htype(n={self.dim},k={self.htype_k})"
        return self.kind


def _to_nested(a: np.ndarray) -> tuple:
    return tuple(tuple(float(v) for v in row) for row in np.atleast_2d(a))


def _check_polynomial(poly: Polynomial, dim: int) -> None:
    for coeff, exps in poly:
        if len(exps) != dim or any(e < 0 for e in exps):
            raise InputError(f"polynomial term exponents {exps} do not match dim={dim}")
        if sum(exps) > 3:
            raise InputError("polynomial frame terms are limited to degree ≤ 3")
        if not math.isfinite(coeff):
            raise InputError("polynomial coefficients must be finite")


@dataclass(frozen=True)
class PointState:
    coords: tuple[float, ...]
    model: ModelSpec

    def __post_init__(self) -> None:
        if len(self.coords) != self.model.dim:
            raise InputError(f"point has {len(self.coords)} coords, model dim is {self.model.dim}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


@dataclass(frozen=True)
class Covector:
    coords: tuple[float, ...]
    base: PointState

    def __post_init__(self) -> None:
        if len(self.coords) != self.base.model.dim:
            raise InputError(f"covector has {len(self.coords)} coords, model dim is {self.base.model.dim}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)


def coords_of(model: ModelSpec, value: "PointState | Covector | Sequence[float] | np.ndarray") -> np.ndarray:
    """Coordinate array of a point/covector (or raw sequence), checked against model.dim."""
    if isinstance(value, (PointState, Covector)):
        arr = value.array
    else:
        arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (model.dim,):
        raise InputError(f"expected {model.dim} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("coordinates must be finite")
    return arr


# ── flow ─────────────────────────────────────────────────────────────────────


@dataclass(eq=False)
class Extremal:
    """Normal extremal sampled at increasing times."""
    model: ModelSpec
    x: np.ndarray
    covector: np.ndarray
    times: np.ndarray       # (K,)
    q: np.ndarray           # (K, n) point coords
    p: np.ndarray           # (K, n) covector coords
    energy: np.ndarray      # (K,) H along the curve

    @property
    def energy_drift(self) -> float:
        h0 = float(self.energy[0])
        return float(np.max(np.abs(self.energy - h0)) / max(abs(h0), 1e-30))


@dataclass(eq=False)
class JacobiMatrixState:
    t: float
    M: np.ndarray           # δp block
    N: np.ndarray           # δq block

    @property
    def lagrangian_defect(self) -> float:
        return float(np.max(np.abs(self.M.T @ self.N - self.N.T @ self.M), initial=0.0))


@dataclass(eq=False)
class VariationalCoefficients:
    A: np.ndarray           # ∂²H/∂q∂p
    B: np.ndarray           # ∂²H/∂p², symmetric PSD
    R: np.ndarray           # ∂²H/∂q², symmetric


# ── geodesy ──────────────────────────────────────────────────────────────────


@dataclass
class GeodesicSolution:
    covector: tuple[float, ...]
    length: float
    residual: float
    minimizing: bool
    t_cut: float | None = None          # None when no closed-form cut time
    multiple_minimizers: bool = False
    horizon: float = 1.0

    @property
    def energy(self) -> float:
        return 0.5 * self.length**2


# ── distortion ───────────────────────────────────────────────────────────────


@dataclass(eq=False)
class DistortionCurve:
    model: ModelSpec
    x: np.ndarray
    covector: np.ndarray
    times: np.ndarray
    values: np.ndarray
    method: str             # "closed" | "numeric"


@dataclass
class BoundViolation:
    base: tuple[float, ...]
    covector: tuple[float, ...]
    t: float
    beta: float
    power: float            # t**N

    @property
    def gap(self) -> float:
        return self.beta - self.power


@dataclass
class BoundReport:
    exponent: float
    grid: dict[str, Any]
    samples: int
    min_ratio: float        # min β_t / t^N
    min_gap: float          # min β_t − t^N
    violations: list[BoundViolation] = field(default_factory=list)
    violation_count: int = 0

    @property
    def verdict(self) -> str:
        return "pass" if not self.violations else "fail"


@dataclass
class ProofChainReport:
    samples: int
    min_wbar: float
    min_wa: float
    taylor_underestimates: bool
    taylor_root: float
    checks: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class DiagonalRow:
    t: float
    r: float
    estimate: float
    bound: float            # t^Q · 1.1
    verdict: str


@dataclass
class DiagonalReport:
    Q: float
    rows: list[DiagonalRow]
    seed: int
    samples: int

    @property
    def passed(self) -> bool:
        return all(r.verdict == "consistent" for r in self.rows)


# ── measure ──────────────────────────────────────────────────────────────────


@dataclass(eq=False)
class SampledSet:
    model: ModelSpec
    kind: str                               # "box" | "ball" | "points"
    description: dict[str, Any]
    points: np.ndarray                      # (K, n)
    exact_volume: float | None = None
    seed: int | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.points.shape[0])


@dataclass
class VolumeEstimate:
    h: tuple[float, ...]    # per-axis pitch
    count: int              # occupied cells
    value: float            # count · Π h
    statistical: bool = True


@dataclass(eq=False)
class GridFunction:
    """Nonnegative function sampled at the cell centres of an axis-aligned box."""
    lo: np.ndarray          # (n,)
    hi: np.ndarray          # (n,)
    values: np.ndarray      # shape (m_1, ..., m_n)

    def __post_init__(self) -> None:
        self.lo = np.asarray(self.lo, dtype=float).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float)
        if self.lo.shape != self.hi.shape or self.values.ndim != self.lo.size:
            raise InputError("grid bounds and value array disagree on dimension")
        if np.any(self.hi <= self.lo):
            raise InputError("grid box must have positive extent on every axis")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise InputError("gridded function values must be finite and nonnegative")

    @property
    def pitch(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.values.shape)

    def centres(self) -> np.ndarray:
        axes = [lo + (np.arange(m) + 0.5) * h for lo, m, h in zip(self.lo, self.values.shape, self.pitch)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def integral(self, density: np.ndarray | None = None) -> float:
        vals = self.values.ravel()
        if density is not None:
            vals = vals * density
        return float(vals.sum() * np.prod(self.pitch))


@dataclass
class InequalityRow:
    t: float
    lhs: float
    rhs: float
    slack: float            # lhs / rhs − 1
    verdict: str            # "consistent" | "violated"


@dataclass
class InequalityReport:
    check: str              # "bm" | "mcp" | "bbl"
    exponent: float
    rows: list[InequalityRow]
    seed: int
    samples: int
    h: tuple[float, ...] | None
    failure_fraction: float
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "consistent" if all(r.verdict == "consistent" for r in self.rows) else "violated"


# ── transport ────────────────────────────────────────────────────────────────


@dataclass(eq=False)
class DiscreteMeasure:
    support: np.ndarray     # (K, n)
    weights: np.ndarray     # (K,)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.support = np.atleast_2d(np.asarray(self.support, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.support.shape[0] != self.weights.shape[0]:
            raise InputError("support and weights differ in length")
        if np.any(self.weights < 0):
            raise InputError("weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise InputError(f"weights sum to {self.weights.sum()!r}, expected 1 within 1e-12")
        if len(np.unique(self.support, axis=0)) != self.support.shape[0]:
            raise InputError("support points must be distinct")

    def __len__(self) -> int:
        return int(self.weights.shape[0])


@dataclass(eq=False)
class TransportPlan:
    coupling: np.ndarray
    cost: float

    def marginal_residual(self, mu0: DiscreteMeasure, mu1: DiscreteMeasure) -> float:
        rows = np.abs(self.coupling.sum(axis=1) - mu0.weights).max(initial=0.0)
        cols = np.abs(self.coupling.sum(axis=0) - mu1.weights).max(initial=0.0)
        return float(max(rows, cols))


@dataclass
class DensityCheckReport:
    t: float
    checked_points: int
    excluded: int
    min_slack: float        # min over points of lhs / rhs
    verdict: str
