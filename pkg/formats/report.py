"""Deterministic JSON for reports.

Floats are written with their shortest round-trip repr (at most 17 significant
digits); non-finite values become the strings "inf", "-inf" and "nan". Output is
byte-identical for identical inputs.
"""

import dataclasses
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

import config
from models import ModelSpec

# derived values worth keeping in the JSON form of a dataclass
_PROPERTIES = ("verdict", "passed", "gap", "energy", "failure_fraction")


def to_jsonable(obj: Any) -> Any:
    """Recursively convert dataclasses / arrays / tuples to JSON-safe types."""
    if isinstance(obj, ModelSpec):
        return {"label": obj.label, "spec_hash": obj.spec_hash()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        for name in _PROPERTIES:
            if isinstance(getattr(type(obj), name, None), property):
                out[name] = to_jsonable(getattr(obj, name))
        return out
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(i) for i in obj]
    return obj


def _finite(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(i) for i in obj]
    return obj


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text; floats use the shortest repr that round-trips exactly."""
    return json.dumps(_finite(to_jsonable(obj)), indent=indent, allow_nan=False, ensure_ascii=False) + "\n"


def envelope(command: str, model: ModelSpec | None, seed: int | None, grid: Any, result: Any) -> dict[str, Any]:
    """Report wrapper carrying tool version, model spec hash, seed and grid description."""
    return {
        "tool": config.TOOL_NAME,
        "version": config.__version__,
        "command": command,
        "model": None if model is None else model.label,
        "spec_hash": None if model is None else model.spec_hash(),
        "seed": seed,
        "grid": grid,
        "result": result,
    }


def write_text(text: str, path: str | Path | None) -> None:
    """Write to path, or to stdout when path is None."""
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")
