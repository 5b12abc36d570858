from __future__ import annotations

import os
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import duckdb
import polars as pl

from ebitflow.errors import ConfigError

DB_PATH_ENV = "EBITFLOW_DB_PATH"
SEED_ENV = "EBITFLOW_SEED"
MAX_SEED = 2**64 - 1


def get_db_path(db_path: Path | str | None = None) -> Path | None:
    """Explicit path, else ``EBITFLOW_DB_PATH``, else None for an in-memory database."""
    if db_path is None:
        value = os.environ.get(DB_PATH_ENV)
        return Path(value) if value else None
    return Path(db_path)


@contextmanager
def db_connection(
    db_path: Path | str | None = None,
) -> Iterator[duckdb.DuckDBPyConnection]:
    path = get_db_path(db_path)
    with duckdb.connect(":memory:" if path is None else path) as conn:
        yield conn


def save_trials(
    frame: pl.DataFrame,
    name: str,
    *,
    db_path: Path | str | None = None,
) -> Path | None:
    path = get_db_path(db_path)
    if path is None:
        return None
    with db_connection(path) as conn:
        conn.register("frame", frame)
        conn.execute(f"create or replace table {name} as select * from frame")
    return path


def load_trials(name: str, *, db_path: Path | str | None = None) -> pl.DataFrame:
    with db_connection(db_path) as conn:
        arrow_table = conn.execute(f"select * from {name}").fetch_arrow_table()
    return pl.DataFrame(arrow_table)


def get_default_seed(seed: int | None = None) -> int:
    if seed is not None:
        return seed
    value = os.environ.get(SEED_ENV)
    if not value:
        return 0
    try:
        parsed = int(value, 0)
    except ValueError as exc:
        raise ConfigError([f"{SEED_ENV}: '{value}' is not an integer"]) from exc
    if not 0 <= parsed <= MAX_SEED:
        raise ConfigError([f"{SEED_ENV}: {parsed} is outside [0, 2**64)"])
    return parsed


def find_assets_root() -> Path:
    for parent in [Path.cwd(), *Path.cwd().parents]:
        candidate = parent / "assets"
        if candidate.is_dir():
            return candidate
    raise FileNotFoundError("assets directory not found")


def resolve_state_path(name: Path | str) -> Path:
    """A state file path as given, or a fixture name under ``assets/states``."""
    path = Path(name)
    if path.is_file():
        return path
    fixture = find_assets_root() / "states" / path.name
    if fixture.suffix != ".json":
        fixture = fixture.with_suffix(".json")
    if not fixture.is_file():
        raise FileNotFoundError(f"State file not found: {name}")
    return fixture
