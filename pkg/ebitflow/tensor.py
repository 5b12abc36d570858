"""Index algebra for labeled multi-subsystem registers.

Layouts are big-endian: the first label is the most significant tensor factor,
so basis index ``i`` of a layout ``(A, B)`` with dims ``(dA, dB)`` is
``a * dB + b``.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import reduce

import numpy as np

from ebitflow.errors import (
    DimensionMismatch,
    InvalidBipartition,
    InvalidPermutation,
    UnknownLabel,
)

MAX_SUBSYSTEMS = 6
ABCD = ("A", "B", "C", "D")


@dataclass(frozen=True)
class SubsystemLayout:
    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        dims = tuple(int(dim) for dim in self.dims)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)
        if not labels:
            raise ValueError("Layout must have at least one subsystem")
        if len(labels) != len(dims):
            raise ValueError(
                f"Layout has {len(labels)} labels but {len(dims)} dimensions"
            )
        if len(set(labels)) != len(labels):
            raise ValueError(f"Duplicate subsystem labels: {labels}")
        if len(labels) > MAX_SUBSYSTEMS:
            raise ValueError(
                f"Layout has {len(labels)} subsystems; at most {MAX_SUBSYSTEMS}"
            )
        for label, dim in zip(labels, dims, strict=True):
            if dim < 1:
                raise ValueError(f"Subsystem {label} has invalid dimension {dim}")

    @classmethod
    def qubits(cls, *labels: str) -> SubsystemLayout:
        return cls(tuple(labels), (2,) * len(labels))

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError as exc:
            raise UnknownLabel(
                f"Unknown subsystem '{label}' in layout {self.labels}"
            ) from exc

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def dims_of(self, labels: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.dim(label) for label in labels)

    def subset(self, labels: Iterable[str]) -> SubsystemLayout:
        """Sub-layout for ``labels``, keeping this layout's order."""
        wanted = set(self.checked_labels(labels))
        kept = [label for label in self.labels if label in wanted]
        return SubsystemLayout(tuple(kept), self.dims_of(kept))

    def reordered(self, labels: Sequence[str]) -> SubsystemLayout:
        return SubsystemLayout(tuple(labels), self.dims_of(labels))

    def extended(self, label: str, dim: int) -> SubsystemLayout:
        return SubsystemLayout((*self.labels, label), (*self.dims, dim))

    def checked_labels(self, labels: Iterable[str]) -> tuple[str, ...]:
        checked = tuple(labels)
        for label in checked:
            self.index(label)
        if len(set(checked)) != len(checked):
            raise ValueError(f"Duplicate labels in {checked}")
        return checked

    def fresh_label(self, base: str) -> str:
        label = base
        suffix = 1
        while label in self.labels:
            label = f"{base}{suffix}"
            suffix += 1
        return label


@dataclass(frozen=True)
class Bipartition:
    left: tuple[str, ...]
    right: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", tuple(self.left))
        object.__setattr__(self, "right", tuple(self.right))
        if not self.left or not self.right:
            raise InvalidBipartition(f"Both sides of a cut must be non-empty: {self}")
        if set(self.left) & set(self.right):
            raise InvalidBipartition(f"Cut sides overlap: {self}")

    @classmethod
    def split(cls, layout: SubsystemLayout, left: Iterable[str]) -> Bipartition:
        wanted = set(layout.checked_labels(left))
        return cls(
            tuple(label for label in layout.labels if label in wanted),
            tuple(label for label in layout.labels if label not in wanted),
        )

    @classmethod
    def parse(cls, text: str, layout: SubsystemLayout) -> Bipartition:
        """Parse ``ABC~D``, ``A,B,C~D`` or ``AB|CD`` against ``layout``."""
        separator = "~" if "~" in text else "|"
        left_text, found, right_text = text.partition(separator)
        if not found:
            raise InvalidBipartition(f"Cut '{text}' must look like AB~CD")
        cut = cls(
            _parse_side(left_text, layout),
            _parse_side(right_text, layout),
        )
        cut.validate(layout)
        return cut

    @property
    def labels(self) -> tuple[str, ...]:
        return (*self.left, *self.right)

    def validate(self, layout: SubsystemLayout) -> None:
        for label in self.labels:
            if label not in layout.labels:
                raise InvalidBipartition(
                    f"Cut {self} mentions '{label}' absent from {layout.labels}"
                )
        if len(self.labels) != len(layout.labels):
            raise InvalidBipartition(
                f"Cut {self} does not cover layout {layout.labels}"
            )

    def swapped(self) -> Bipartition:
        return Bipartition(self.right, self.left)

    def __str__(self) -> str:
        return f"{','.join(self.left)}~{','.join(self.right)}"


def _parse_side(text: str, layout: SubsystemLayout) -> tuple[str, ...]:
    text = text.strip()
    if "," in text:
        return tuple(part.strip() for part in text.split(",") if part.strip())
    if text in layout.labels:
        return (text,)
    return tuple(text)


def kron(*matrices: np.ndarray) -> np.ndarray:
    if not matrices:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, (np.asarray(matrix) for matrix in matrices))


def permute_amplitudes(
    amps: np.ndarray,
    layout: SubsystemLayout,
    new_order: Sequence[str],
) -> np.ndarray:
    perm = _permutation(layout, new_order)
    return amps.reshape(layout.dims).transpose(perm).reshape(-1)


def permute_operator(
    op: np.ndarray,
    layout: SubsystemLayout,
    new_order: Sequence[str],
) -> np.ndarray:
    perm = _permutation(layout, new_order)
    n = len(layout.labels)
    tensor = op.reshape(layout.dims * 2)
    axes = [*perm, *(n + axis for axis in perm)]
    dim = layout.total_dim
    return tensor.transpose(axes).reshape(dim, dim)


def _permutation(layout: SubsystemLayout, new_order: Sequence[str]) -> list[int]:
    order = tuple(new_order)
    if sorted(order) != sorted(layout.labels) or len(set(order)) != len(order):
        raise InvalidPermutation(
            f"{order} is not a permutation of layout {layout.labels}"
        )
    return [layout.labels.index(label) for label in order]


def trace_out(
    mat: np.ndarray,
    layout: SubsystemLayout,
    keep: Iterable[str],
) -> tuple[np.ndarray, SubsystemLayout]:
    """Marginal of ``mat`` on ``keep``, in the layout's own label order."""
    keep = tuple(keep)
    if not keep:
        raise ValueError("Partial trace must keep at least one subsystem")
    kept_layout = layout.subset(keep)
    if kept_layout.labels == layout.labels:
        return mat.copy(), layout

    n = len(layout.labels)
    kept_axes = [layout.index(label) for label in kept_layout.labels]
    rows = list(range(n))
    cols = list(range(n, 2 * n))
    for axis in range(n):
        if axis not in kept_axes:
            cols[axis] = rows[axis]
    out = [*kept_axes, *(n + axis for axis in kept_axes)]
    reduced = np.einsum(mat.reshape(layout.dims * 2), rows + cols, out)
    dim = kept_layout.total_dim
    return reduced.reshape(dim, dim), kept_layout


def embed_operator(
    op: np.ndarray,
    targets: Sequence[str],
    layout: SubsystemLayout,
) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in that factor order) to ``layout``."""
    targets = layout.checked_labels(targets)
    target_dim = math.prod(layout.dims_of(targets))
    if op.shape != (target_dim, target_dim):
        raise DimensionMismatch(
            f"Operator of shape {op.shape} cannot act on {targets} "
            f"with dimension {target_dim}"
        )
    rest = [label for label in layout.labels if label not in targets]
    rest_dim = math.prod(layout.dims_of(rest))
    full = np.kron(op, np.eye(rest_dim, dtype=complex))
    working = layout.reordered([*targets, *rest])
    return permute_operator(full, working, layout.labels)
