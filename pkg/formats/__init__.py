from .modelfile import load_model, load_run_config, resolve_model
from .report import dumps, envelope, to_jsonable, write_text
from .tables import (
    read_measure_csv,
    write_distortion_csv,
    write_jacobi_csv,
    write_measure_csv,
    write_trajectory_csv,
    write_wbar_csv,
)

__all__ = [
    "dumps",
    "envelope",
    "load_model",
    "load_run_config",
    "read_measure_csv",
    "resolve_model",
    "to_jsonable",
    "write_distortion_csv",
    "write_jacobi_csv",
    "write_measure_csv",
    "write_text",
    "write_trajectory_csv",
    "write_wbar_csv",
]
