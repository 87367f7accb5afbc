"""TOML model specifications and run-config files.

Model file:

    kind = "generic"            # heisenberg | grushin | htype | generic
    dim = 2

    [[frame]]                   # one table per vector field (generic only)
    components = [ [[1.0, [0, 0]]], [] ]

    [density]                   # optional; terms of a polynomial density
    terms = [[1.0, [0, 0]]]

    [htype]                     # htype only
    J = [ [[0, -1], [1, 0]] ]
    S = [[1, 0], [0, 1]]

Run-config files hold RunConfig keys at top level and command parameters under [params].
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any

from errors import InputError
from models import ModelSpec
from structures import model_from_name

_MODEL_KEYS = {"kind", "dim", "rank", "frame", "density", "htype"}


def _read_toml(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{path}: file not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: invalid TOML: {exc}") from exc


def _terms(raw: Any, where: str) -> list[tuple[float, tuple[int, ...]]]:
    try:
        return [(float(c), tuple(int(e) for e in exps)) for c, exps in raw]
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: polynomial terms are [coefficient, [exponents]] pairs") from exc


def model_from_dict(data: dict[str, Any]) -> ModelSpec:
    unknown = set(data) - _MODEL_KEYS
    if unknown:
        raise InputError(f"unknown model keys: {sorted(unknown)}")
    kind = str(data.get("kind", "")).lower()
    if kind in ("heisenberg", "grushin"):
        return model_from_name(kind)
    if kind == "htype":
        block = data.get("htype") or {}
        if "J" not in block or "S" not in block:
            raise InputError("[htype] needs J and S")
        return ModelSpec.htype(block["J"], block["S"])
    if kind == "generic":
        frame = data.get("frame") or []
        fields = [[_terms(comp, f"frame[{i}]") for comp in fld.get("components", [])] for i, fld in enumerate(frame)]
        density = _terms((data.get("density") or {}).get("terms", []), "density")
        model = ModelSpec.generic(fields, density)
        if "dim" in data and int(data["dim"]) != model.dim:
            raise InputError(f"dim = {data['dim']} but frame components give {model.dim}")
        return model
    raise InputError(f"unknown model kind {kind!r}")


def load_model(path: str | Path) -> ModelSpec:
    return model_from_dict(_read_toml(path))


def resolve_model(value: str) -> ModelSpec:
    """Built-in model name, or path to a .toml model file."""
    if value.endswith(".toml") or Path(value).is_file():
        return load_model(value)
    return model_from_name(value)


def load_run_config(path: str | Path) -> dict[str, Any]:
    """Raw run-config mapping; validation (unknown keys, ranges) is RunConfig's job."""
    return _read_toml(path)
