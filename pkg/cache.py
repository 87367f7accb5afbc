"""Persistent cache for boundary-value solutions.

Stores every GeodesicSolution returned by geodesy.inverse_exp for an endpoint
pair so that repeated `geodesic` runs skip the multi-start Newton solve.

The cache is keyed by (model spec hash, x, y, tolerance, starts, seed), the
full input of a multi-start solve; endpoints are rendered with 17 significant
digits so the key is exact. Solutions keep the
order inverse_exp produced (lowest energy first).

Cache location: $SRDIST_CACHE_DIR/geodesics.db  (SQLite, default .cache/ sibling to this file)
"""

import json
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import config
from models import GeodesicSolution, ModelSpec

_SCHEMA = """
CREATE TABLE IF NOT EXISTS bvp_solutions (
    spec_hash   TEXT NOT NULL,
    x_key       TEXT NOT NULL,
    y_key       TEXT NOT NULL,
    tol_key     TEXT NOT NULL,
    starts      INTEGER NOT NULL,
    seed        TEXT NOT NULL,
    rank        INTEGER NOT NULL,
    covector    TEXT NOT NULL,
    length      REAL NOT NULL,
    residual    REAL NOT NULL,
    minimizing  INTEGER NOT NULL,
    t_cut       REAL,
    multiple    INTEGER NOT NULL,
    model_label TEXT,
    cached_at   TEXT NOT NULL,
    PRIMARY KEY (spec_hash, x_key, y_key, tol_key, starts, seed, rank)
);
"""

_KEY_MATCH = "spec_hash = ? AND x_key = ? AND y_key = ? AND tol_key = ? AND starts = ? AND seed = ?"


def _db_path(db_path: Path | None) -> Path:
    return db_path if db_path is not None else config.SRDIST_CACHE_DIR / "geodesics.db"


def _conn(db_path: Path | None = None) -> sqlite3.Connection:
    path = _db_path(db_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path)
    conn.row_factory = sqlite3.Row
    conn.executescript(_SCHEMA)
    return conn


def _key(values: Sequence[float]) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


def _solve_key(
    model: ModelSpec, x: Sequence[float], y: Sequence[float], tol: float, starts: int, seed: int
) -> tuple:
    return (model.spec_hash(), _key(x), _key(y), _key([tol]), int(starts), str(int(seed)))


# ── Write ─────────────────────────────────────────────────────────────────────


def save_solutions(
    model: ModelSpec,
    x: Sequence[float],
    y: Sequence[float],
    tol: float,
    solutions: list[GeodesicSolution],
    *,
    starts: int = config.DEFAULT_STARTS,
    seed: int = config.DEFAULT_SEED,
    db_path: Path | None = None,
) -> None:
    """Persist all solutions of one endpoint pair, replacing older entries."""
    now = datetime.now(timezone.utc).isoformat()
    key = _solve_key(model, x, y, tol, starts, seed)

    conn = _conn(db_path)
    with conn:
        conn.execute(
            f"DELETE FROM bvp_solutions WHERE {_KEY_MATCH}",
            key,
        )
        for rank, sol in enumerate(solutions):
            conn.execute(
                """INSERT INTO bvp_solutions
                   (spec_hash, x_key, y_key, tol_key, starts, seed, rank, covector, length, residual,
                    minimizing, t_cut, multiple, model_label, cached_at)
                   VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)""",
                (
                    *key,
                    rank,
                    json.dumps(list(sol.covector)),
                    sol.length,
                    sol.residual,
                    int(sol.minimizing),
                    sol.t_cut,
                    int(sol.multiple_minimizers),
                    model.label,
                    now,
                ),
            )
    conn.close()


# ── Read ──────────────────────────────────────────────────────────────────────


def load_solutions(
    model: ModelSpec,
    x: Sequence[float],
    y: Sequence[float],
    tol: float,
    *,
    starts: int = config.DEFAULT_STARTS,
    seed: int = config.DEFAULT_SEED,
    db_path: Path | None = None,
) -> list[GeodesicSolution] | None:
    """Cached solutions for the pair in their original order, or None on a miss."""
    conn = _conn(db_path)
    rows = conn.execute(
        f"SELECT * FROM bvp_solutions WHERE {_KEY_MATCH} ORDER BY rank",
        _solve_key(model, x, y, tol, starts, seed),
    ).fetchall()
    conn.close()

    if not rows:
        return None
    return [
        GeodesicSolution(
            covector=tuple(json.loads(r["covector"])),
            length=r["length"],
            residual=r["residual"],
            minimizing=bool(r["minimizing"]),
            t_cut=r["t_cut"],
            multiple_minimizers=bool(r["multiple"]),
        )
        for r in rows
    ]


# ── Maintenance ───────────────────────────────────────────────────────────────


def clear_cache(db_path: Path | None = None) -> None:
    """Delete all cached solutions."""
    conn = _conn(db_path)
    with conn:
        conn.execute("DELETE FROM bvp_solutions")
    conn.close()


def cache_stats(db_path: Path | None = None) -> dict:
    """Return a summary of what's stored in the cache."""
    conn = _conn(db_path)
    rows = conn.execute("SELECT COUNT(*) FROM bvp_solutions").fetchone()[0]
    pairs = conn.execute(
        "SELECT COUNT(*) FROM (SELECT DISTINCT spec_hash, x_key, y_key, tol_key, starts, seed FROM bvp_solutions)"
    ).fetchone()[0]
    oldest = conn.execute("SELECT MIN(cached_at) FROM bvp_solutions").fetchone()[0]
    newest = conn.execute("SELECT MAX(cached_at) FROM bvp_solutions").fetchone()[0]
    conn.close()
    return {
        "solutions": rows,
        "pairs": pairs,
        "oldest_entry": oldest,
        "newest_entry": newest,
        "db_path": str(_db_path(db_path)),
    }
