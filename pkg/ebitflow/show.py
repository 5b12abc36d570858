from __future__ import annotations

from ebitflow.entanglement import EofResult
from ebitflow.protocol import ProtocolTrace
from ebitflow.states import SchmidtForm

VALUE_DIGITS = 7


def render_table(columns: list[str], rows: list[tuple[object, ...]]) -> list[str]:
    if not columns:
        return ["no columns"]
    if not rows:
        return ["no rows"]

    rendered_rows = [[format_value(value) for value in row] for row in rows]
    widths = [len(column) for column in columns]
    for row in rendered_rows:
        for index, value in enumerate(row):
            widths[index] = max(widths[index], len(value))

    header = " | ".join(
        column.ljust(widths[index]) for index, column in enumerate(columns)
    )
    divider = "-+-".join("-" * width for width in widths)
    body = [
        " | ".join(value.ljust(widths[index]) for index, value in enumerate(row))
        for row in rendered_rows
    ]
    return [header, divider, *body]


def format_value(value: object) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{VALUE_DIGITS}f}"
    return str(value)


def render_trace(trace: ProtocolTrace) -> list[str]:
    lines = [f"regime: {trace.regime}", ""]
    lines += render_table(
        ["step", "name", "cut", "E", "method", "exact"],
        [
            (
                step.step,
                step.name,
                "-" if step.cut is None else str(step.cut),
                step.value,
                step.method,
                step.exact,
            )
            for step in trace.steps
        ],
    )
    lines += ["", "margins:"]
    lines += render_table(
        ["margin", "value", "slack", "status"],
        [
            (name, margin.value, margin.slack, "OK" if margin.ok else "FAIL")
            for name, margin in trace.margins.items()
        ],
    )
    if trace.pairs:
        lines += ["", "pairs:"]
        lines += render_table(["pair", "eof"], list(trace.pairs.items()))
    return lines


def render_schmidt(form: SchmidtForm) -> list[str]:
    left = ",".join(form.left_layout.labels)
    right = ",".join(form.right_layout.labels)
    coeffs = ", ".join(f"{c:.{VALUE_DIGITS}f}" for c in form.coeffs)
    return [
        f"cut: {left}~{right}",
        f"rank: {form.rank}",
        f"coefficients: [{coeffs}]",
    ]


def render_eof(label: str, result: EofResult) -> str:
    flags = [result.method]
    if not result.converged:
        flags.append("not converged")
    if result.restarts_used:
        flags.append(f"restarts={result.restarts_used}")
    return f"{label}: {result.value:.{VALUE_DIGITS}f} ({', '.join(flags)})"
