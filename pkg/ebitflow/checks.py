"""Bound checks over a per-trial margin table.

Every margin column ``m`` has a companion ``m__slack`` column; a check is a SQL
query returning the trials where ``m < -m__slack``.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import duckdb
import polars as pl

from ebitflow.show import render_table

SLACK_SUFFIX = "__slack"
LineReporter = Callable[[str], None]


@dataclass(frozen=True)
class BoundCheck:
    name: str
    query: str
    margin: str


@dataclass(frozen=True)
class CheckResult:
    name: str
    failing_rows: int

    @property
    def ok(self) -> bool:
        return self.failing_rows == 0


def margin_columns(frame: pl.DataFrame) -> list[str]:
    return [
        column
        for column in frame.columns
        if f"{column}{SLACK_SUFFIX}" in frame.columns
    ]


def margin_query(margin: str) -> str:
    return (
        f'select trial, seed, "{margin}" as margin, "{margin}{SLACK_SUFFIX}" as slack '
        f"from trials "
        f'where "{margin}" < -"{margin}{SLACK_SUFFIX}"'
    )


def bound_checks(frame: pl.DataFrame, prefix: str) -> list[BoundCheck]:
    return [
        BoundCheck(name=f"{prefix}__{margin}", query=margin_query(margin), margin=margin)
        for margin in margin_columns(frame)
    ]


def violation_query(checks: list[BoundCheck]) -> str:
    failing = " union ".join(f"select trial from ({check.query})" for check in checks)
    return f"select count(distinct trial) from ({failing}) as violating_trials"


def run_bound_checks(
    frame: pl.DataFrame,
    prefix: str,
    *,
    reporter: LineReporter | None = None,
    sample_rows: int = 5,
) -> tuple[list[CheckResult], int]:
    """Run every margin check; return per-check results and the violating-trial count."""
    if sample_rows < 1:
        raise ValueError("sample_rows must be at least 1")
    checks = bound_checks(frame, prefix)
    total = len(checks)
    count_width = len(str(total))
    name_width = max((len(check.name) for check in checks), default=0)
    results: list[CheckResult] = []

    with duckdb.connect() as conn:
        conn.register("trials", frame)
        for index, check in enumerate(checks, start=1):
            failing_rows = count_failing_rows(conn, check.query)
            results.append(CheckResult(check.name, failing_rows))
            if reporter is None:
                continue
            status = "FAIL" if failing_rows else "OK"
            reporter(
                f"[{index:>{count_width}}/{total:>{count_width}}] "
                f"{check.name:<{name_width}} {status}"
            )
            if not failing_rows:
                continue
            reporter(f"  margin: {check.margin}")
            reporter(f"  failing rows: {failing_rows}")
            columns, rows = sample_failing_rows(conn, check.query, sample_rows)
            for line in ["sample:", *render_table(columns, rows)]:
                reporter(f"  {line}")
        violations = count_violations(conn, checks)
    return results, violations


def count_failing_rows(conn: duckdb.DuckDBPyConnection, query: str) -> int:
    row = conn.execute(f"select count(*) from ({query}) as failing_rows").fetchone()
    if row is None:
        raise ValueError("Missing bound check count")
    return int(row[0])


def count_violations(conn: duckdb.DuckDBPyConnection, checks: list[BoundCheck]) -> int:
    if not checks:
        return 0
    row = conn.execute(violation_query(checks)).fetchone()
    if row is None:
        raise ValueError("Missing violation count")
    return int(row[0])


def sample_failing_rows(
    conn: duckdb.DuckDBPyConnection,
    query: str,
    limit: int,
) -> tuple[list[str], list[tuple[object, ...]]]:
    cursor = conn.execute(f"select * from ({query}) as failing_rows limit {limit}")
    rows = cursor.fetchall()
    columns = [description[0] for description in cursor.description]
    return columns, rows
