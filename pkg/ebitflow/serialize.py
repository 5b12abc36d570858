"""JSON form of states, traces and results.

Complex numbers are ``[re, im]`` pairs, matrices are row-major nested lists and
every state carries its layout inline.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from ebitflow.entanglement import EofResult
from ebitflow.errors import ParseError
from ebitflow.protocol import ProtocolTrace
from ebitflow.states import (
    DensityMatrix,
    SchmidtForm,
    StateVector,
    validate_density,
)
from ebitflow.tensor import SubsystemLayout


def encode_complex(array: np.ndarray) -> list[Any]:
    array = np.asarray(array, dtype=complex)
    if array.ndim == 0:
        return [float(array.real), float(array.imag)]
    return [encode_complex(item) for item in array]


def decode_complex(data: Any, shape_name: str) -> np.ndarray:
    try:
        array = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"'{shape_name}' must hold numeric [re, im] pairs") from exc
    if array.ndim < 1 or array.shape[-1] != 2:
        raise ParseError(f"'{shape_name}' entries must be [re, im] pairs")
    return array[..., 0] + 1j * array[..., 1]


def layout_to_dict(layout: SubsystemLayout) -> dict[str, Any]:
    return {"labels": list(layout.labels), "dims": list(layout.dims)}


def layout_from_dict(data: Any) -> SubsystemLayout:
    if not isinstance(data, dict) or {"labels", "dims"} - data.keys():
        raise ParseError("'layout' must be an object with 'labels' and 'dims'")
    labels, dims = data["labels"], data["dims"]
    if not isinstance(labels, list) or not isinstance(dims, list):
        raise ParseError("Layout labels and dims must be lists")
    if not all(isinstance(label, str) for label in labels):
        raise ParseError("Layout labels must be strings")
    if not all(isinstance(dim, int) and not isinstance(dim, bool) for dim in dims):
        raise ParseError("Layout dims must be integers")
    try:
        return SubsystemLayout(tuple(labels), tuple(dims))
    except ValueError as exc:
        raise ParseError(f"Invalid layout: {exc}") from exc


def state_to_dict(state: StateVector | DensityMatrix) -> dict[str, Any]:
    if isinstance(state, StateVector):
        return {
            "kind": "pure",
            "layout": layout_to_dict(state.layout),
            "amplitudes": encode_complex(state.amps),
        }
    return {
        "kind": "density",
        "layout": layout_to_dict(state.layout),
        "matrix": encode_complex(state.mat),
    }


def state_from_dict(data: Any) -> StateVector | DensityMatrix:
    if not isinstance(data, dict):
        raise ParseError("State document must be a JSON object")
    layout = layout_from_dict(data.get("layout"))
    match data.get("kind"):
        case "pure":
            amps = decode_complex(data.get("amplitudes"), "amplitudes")
            if amps.shape != (layout.total_dim,):
                raise ParseError(
                    f"Expected {layout.total_dim} amplitudes, got shape {amps.shape}"
                )
            return StateVector(layout, amps)
        case "density":
            mat = decode_complex(data.get("matrix"), "matrix")
            return validate_density(mat, layout)
        case kind:
            raise ParseError(f"Unknown state kind {kind!r}; expected 'pure' or 'density'")


def load_state(path: Path | str) -> StateVector | DensityMatrix:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"Malformed JSON in {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8 text: {exc}") from exc
    return state_from_dict(data)


def write_json(data: Any, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path


def schmidt_to_dict(form: SchmidtForm) -> dict[str, Any]:
    return {
        "coeffs": [float(c) for c in form.coeffs],
        "rank": form.rank,
        "left_layout": layout_to_dict(form.left_layout),
        "right_layout": layout_to_dict(form.right_layout),
        "left_basis": encode_complex(form.left_basis),
        "right_basis": encode_complex(form.right_basis),
    }


def eof_to_dict(result: EofResult) -> dict[str, Any]:
    return {
        "value": result.value,
        "method": result.method,
        "exact": result.exact,
        "converged": result.converged,
        "restarts_used": result.restarts_used,
        "decomposition_size": (
            None if result.decomposition is None else len(result.decomposition)
        ),
    }


def trace_to_dict(trace: ProtocolTrace, *, with_states: bool = False) -> dict[str, Any]:
    return {
        "regime": trace.regime,
        "steps": [
            {
                "step": step.step,
                "name": step.name,
                "cut": None if step.cut is None else str(step.cut),
                "value": step.value,
                "method": step.method,
                "exact": step.exact,
                "state": (
                    state_to_dict(step.state)
                    if with_states and step.state is not None
                    else None
                ),
            }
            for step in trace.steps
        ],
        "margins": {
            name: {"value": margin.value, "slack": margin.slack, "ok": margin.ok}
            for name, margin in trace.margins.items()
        },
        "extras": dict(trace.extras),
        "pairs": dict(trace.pairs),
    }
