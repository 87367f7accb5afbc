import os
from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field

_ENV_KEYS = ("SRDIST_THREADS", "SRDIST_CACHE_DIR", "SRDIST_LOG_LEVEL")


def read_environment(env_file: Path | None = None) -> dict[str, str]:
    """SRDIST_* settings from the repo .env file, overridden by the process environment."""
    path = env_file if env_file is not None else Path(__file__).parent / ".env"
    values: dict[str, str] = {}
    if path.is_file():
        values = {k: v for k, v in dotenv_values(path).items() if k in _ENV_KEYS and v is not None}
    values.update({k: os.environ[k] for k in _ENV_KEYS if k in os.environ})
    return values


_env = read_environment()

TOOL_NAME = "srdist"
__version__ = "0.3.0"

SRDIST_THREADS: str | None = _env.get("SRDIST_THREADS")
SRDIST_CACHE_DIR: Path = Path(_env.get("SRDIST_CACHE_DIR", Path(__file__).parent / ".cache"))
SRDIST_LOG_LEVEL: str = _env.get("SRDIST_LOG_LEVEL", "WARNING")

# Integrator defaults (embedded RK 5(4))
RTOL: float = 1e-10
ATOL: float = 1e-12

# Boundary-value solver
NEWTON_TOL: float = 1e-9
PROBE_TOL: float = 1e-11     # tightened for second-difference quotients
NEWTON_MAX_ITER: int = 60
DEFAULT_STARTS: int = 64
DEDUP_TOL: float = 1e-6

# Monte Carlo checks
FAILURE_THRESHOLD: float = 0.05
EPS_STAT: float = 0.05
MAX_PAIRS: int = 1_000_000
MAX_CELLS: int = 100_000_000
DENSITY_SLACK: float = 0.8

DEFAULT_SEED: int = 20240611


def resolve_threads(flag: int | None = None) -> int:
    """Worker cap: explicit flag, else SRDIST_THREADS, else 1."""
    if flag is not None:
        return max(1, int(flag))
    if SRDIST_THREADS:
        try:
            return max(1, int(SRDIST_THREADS))
        except ValueError:
            pass
    return 1


class RunConfig(BaseModel):
    """Validated run settings for one CLI invocation (defaults < file < flags)."""

    model_config = ConfigDict(extra="forbid")

    model: str = "heisenberg"
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    output: str | None = None
    format: Literal["csv", "json"] | None = None
    threads: int = Field(default=1, ge=1)
    params: dict[str, Any] = Field(default_factory=dict)
