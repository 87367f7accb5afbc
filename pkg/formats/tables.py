"""CSV tables: trajectories, Jacobi matrices, distortion curves, W̄ samples and measures."""

import csv
import io
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from errors import InputError
from models import DiscreteMeasure, DistortionCurve, Extremal, JacobiMatrixState, ModelSpec


def _fmt(v: float) -> str:
    return repr(float(v))


def _emit(header: list[str], rows: Iterable[Iterable[float]], out: TextIO | None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def write_trajectory_csv(ext: Extremal, out: TextIO | None = None) -> str:
    n = ext.q.shape[1]
    header = ["t"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["H"]
    rows = (np.concatenate([[t], q, p, [h]]) for t, q, p, h in zip(ext.times, ext.q, ext.p, ext.energy))
    return _emit(header, rows, out)


def write_jacobi_csv(states: list[JacobiMatrixState], out: TextIO | None = None) -> str:
    """t, row-major M, row-major N, det M, det N (canonical coordinate frame)."""
    if not states:
        return _emit(["t"], [], out)
    n = states[0].M.shape[0]
    header = (
        ["t"]
        + [f"M{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        + [f"N{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        + ["detM", "detN"]
    )
    rows = (
        np.concatenate([[s.t], s.M.ravel(), s.N.ravel(), [np.linalg.det(s.M), np.linalg.det(s.N)]])
        for s in states
    )
    return _emit(header, rows, out)


def write_distortion_csv(curve: DistortionCurve, out: TextIO | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "beta", "method"])
    for t, b in zip(curve.times, curve.values):
        writer.writerow([_fmt(t), _fmt(b), curve.method])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def write_wbar_csv(z: np.ndarray, wbar: np.ndarray, taylor: np.ndarray, out: TextIO | None = None) -> str:
    return _emit(["z", "wbar", "taylor_bound"], zip(z, wbar, taylor), out)


def write_measure_csv(measure: DiscreteMeasure, out: TextIO | None = None) -> str:
    n = measure.support.shape[1]
    header = [f"q{i + 1}" for i in range(n)] + ["weight"]
    rows = (np.append(q, w) for q, w in zip(measure.support, measure.weights))
    return _emit(header, rows, out)


def read_measure_csv(path: str | Path, model: ModelSpec) -> DiscreteMeasure:
    """Columns q1..qn,weight; weights must already sum to 1 within 1e-12."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as exc:
            raise InputError(f"{path}: empty measure file") from exc
        expected = [f"q{i + 1}" for i in range(model.dim)] + ["weight"]
        if [h.strip() for h in header] != expected:
            raise InputError(f"{path}: expected header {','.join(expected)}")
        try:
            data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric entry") from exc
    if data.size == 0:
        raise InputError(f"{path}: no atoms")
    return DiscreteMeasure(data[:, :-1], data[:, -1])
