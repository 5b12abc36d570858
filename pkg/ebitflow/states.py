"""Pure and mixed states, ensembles, purification and Schmidt decomposition."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ebitflow.errors import (
    BadTrace,
    DimensionMismatch,
    LayoutMismatch,
    NotHermitian,
    NotNormalized,
    NotPositive,
)
from ebitflow.tensor import (
    Bipartition,
    SubsystemLayout,
    permute_amplitudes,
    trace_out,
)

ATOL = 1e-10
COEFF_FLOOR = 1e-12
ANCILLA_LABEL = "R"


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: SubsystemLayout
    amps: np.ndarray

    def __post_init__(self) -> None:
        amps = _frozen(np.asarray(self.amps).reshape(-1))
        if amps.shape[0] != self.layout.total_dim:
            raise DimensionMismatch(
                f"{amps.shape[0]} amplitudes for layout of dimension "
                f"{self.layout.total_dim}"
            )
        if not np.all(np.isfinite(amps)):
            raise NotNormalized("State has non-finite amplitudes")
        norm = float(np.linalg.norm(amps))
        if not abs(norm - 1.0) <= ATOL:
            raise NotNormalized(f"State norm is {norm!r}, expected 1")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def normalized(cls, layout: SubsystemLayout, amps: np.ndarray) -> StateVector:
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        return cls(layout, amps / np.linalg.norm(amps))

    @classmethod
    def basis(cls, layout: SubsystemLayout, index: int = 0) -> StateVector:
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[index] = 1.0
        return cls(layout, amps)

    def inner(self, other: StateVector) -> complex:
        if other.layout != self.layout:
            raise LayoutMismatch(f"{self.layout} vs {other.layout}")
        return complex(np.vdot(self.amps, other.amps))

    def marginal(self, keep: Iterable[str]) -> DensityMatrix:
        """Reduced state on ``keep`` computed directly from the amplitudes."""
        keep = self.layout.checked_labels(keep)
        kept = self.layout.subset(keep)
        rest = [label for label in self.layout.labels if label not in keep]
        ordered = permute_amplitudes(self.amps, self.layout, [*kept.labels, *rest])
        block = ordered.reshape(kept.total_dim, -1)
        return DensityMatrix(kept, block @ block.conj().T)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive matrix on ``layout``.

    The constructor checks shape only; untrusted matrices go through
    ``validate_density``.
    """

    layout: SubsystemLayout
    mat: np.ndarray

    def __post_init__(self) -> None:
        mat = _frozen(self.mat)
        dim = self.layout.total_dim
        if mat.shape != (dim, dim):
            raise DimensionMismatch(
                f"Matrix of shape {mat.shape} for layout of dimension {dim}"
            )
        object.__setattr__(self, "mat", mat)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.mat)

    def rank(self, floor: float = COEFF_FLOOR) -> int:
        return int(np.count_nonzero(self.eigenvalues() > floor))


@dataclass(frozen=True, eq=False)
class SchmidtForm:
    coeffs: np.ndarray
    left_basis: np.ndarray
    right_basis: np.ndarray
    left_layout: SubsystemLayout
    right_layout: SubsystemLayout

    @property
    def rank(self) -> int:
        return len(self.coeffs)

    @property
    def weights(self) -> np.ndarray:
        return self.coeffs**2

    def reconstruct(self) -> StateVector:
        """Rebuild the state in left-then-right label order."""
        amps = np.einsum("i,ia,ib->ab", self.coeffs, self.left_basis, self.right_basis)
        labels = (*self.left_layout.labels, *self.right_layout.labels)
        dims = (*self.left_layout.dims, *self.right_layout.dims)
        return StateVector.normalized(SubsystemLayout(labels, dims), amps)


@dataclass(frozen=True, eq=False)
class PureEnsemble:
    members: tuple[tuple[float, StateVector], ...]

    def __post_init__(self) -> None:
        members = tuple((float(p), state) for p, state in self.members)
        if not members:
            raise ValueError("Ensemble must have at least one member")
        layout = members[0][1].layout
        for probability, state in members:
            if probability <= 0:
                raise ValueError(f"Ensemble probability {probability} is not positive")
            if state.layout != layout:
                raise LayoutMismatch(
                    f"Ensemble mixes layouts {layout.labels} and {state.layout.labels}"
                )
        total = sum(probability for probability, _ in members)
        if abs(total - 1.0) > ATOL:
            raise ValueError(f"Ensemble probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_weights(
        cls,
        weights: Sequence[float],
        states: Sequence[StateVector],
        floor: float = COEFF_FLOOR,
    ) -> PureEnsemble:
        """Build an ensemble from unnormalized weights, dropping those below floor."""
        kept = [
            (float(weight), state)
            for weight, state in zip(weights, states, strict=True)
            if weight > floor
        ]
        total = sum(weight for weight, _ in kept)
        return cls(tuple((weight / total, state) for weight, state in kept))

    @property
    def layout(self) -> SubsystemLayout:
        return self.members[0][1].layout

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(probability for probability, _ in self.members)

    @property
    def states(self) -> tuple[StateVector, ...]:
        return tuple(state for _, state in self.members)

    def __len__(self) -> int:
        return len(self.members)

    def map(self, func: Callable[[StateVector], StateVector]) -> PureEnsemble:
        return PureEnsemble(tuple((p, func(state)) for p, state in self.members))

    def density(self) -> DensityMatrix:
        amps = np.stack([state.amps for state in self.states])
        weights = np.asarray(self.probabilities)
        mat = (amps.T * weights) @ amps.conj()
        return DensityMatrix(self.layout, mat)


def pure_to_density(psi: StateVector) -> DensityMatrix:
    return DensityMatrix(psi.layout, np.outer(psi.amps, psi.amps.conj()))


def partial_trace(rho: DensityMatrix, keep: Iterable[str]) -> DensityMatrix:
    mat, layout = trace_out(rho.mat, rho.layout, keep)
    return DensityMatrix(layout, (mat + mat.conj().T) / 2)


def permute_subsystems(psi: StateVector, new_order: Sequence[str]) -> StateVector:
    amps = permute_amplitudes(psi.amps, psi.layout, new_order)
    return StateVector(psi.layout.reordered(new_order), amps)


def product_state(*factors: StateVector) -> StateVector:
    labels: list[str] = []
    dims: list[int] = []
    amps = np.ones(1, dtype=complex)
    for factor in factors:
        labels.extend(factor.layout.labels)
        dims.extend(factor.layout.dims)
        amps = np.kron(amps, factor.amps)
    return StateVector(SubsystemLayout(tuple(labels), tuple(dims)), amps)


def schmidt_decompose(psi: StateVector, cut: Bipartition) -> SchmidtForm:
    cut.validate(psi.layout)
    left = psi.layout.reordered(cut.left)
    right = psi.layout.reordered(cut.right)
    ordered = permute_amplitudes(psi.amps, psi.layout, cut.labels)
    u, s, vh = np.linalg.svd(
        ordered.reshape(left.total_dim, right.total_dim),
        full_matrices=False,
    )
    kept = s > COEFF_FLOOR
    return SchmidtForm(
        coeffs=s[kept],
        left_basis=u[:, kept].T,
        right_basis=vh[kept, :],
        left_layout=left,
        right_layout=right,
    )


def validate_density(
    mat: np.ndarray,
    layout: SubsystemLayout,
    atol: float = ATOL,
) -> DensityMatrix:
    mat = np.asarray(mat, dtype=complex)
    dim = layout.total_dim
    if mat.shape != (dim, dim):
        raise DimensionMismatch(
            f"Matrix of shape {mat.shape} for layout of dimension {dim}"
        )
    if not np.all(np.isfinite(mat)):
        raise NotHermitian("Matrix has non-finite entries")
    asymmetry = float(np.max(np.abs(mat - mat.conj().T)))
    if not asymmetry <= atol:
        raise NotHermitian(f"Matrix deviates from Hermitian by {asymmetry:.3e}")
    mat = (mat + mat.conj().T) / 2
    trace = float(np.real(np.trace(mat)))
    if not abs(trace - 1.0) <= atol:
        raise BadTrace(f"Trace is {trace!r}, expected 1")
    values, vectors = np.linalg.eigh(mat)
    if values[0] < -atol:
        raise NotPositive(f"Minimum eigenvalue {values[0]:.3e} is negative")
    if values[0] < 0:
        values = np.clip(values, 0.0, None)
        mat = (vectors * values) @ vectors.conj().T
        mat = mat / np.real(np.trace(mat))
    return DensityMatrix(layout, mat)


def spectrum(
    rho: DensityMatrix,
    floor: float = COEFF_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues above ``floor`` in descending order with their eigenvectors."""
    values, vectors = np.linalg.eigh(rho.mat)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    kept = values > floor
    return values[kept], vectors[:, kept]


def eigen_ensemble(rho: DensityMatrix) -> PureEnsemble:
    values, vectors = spectrum(rho)
    states = [StateVector.normalized(rho.layout, vectors[:, i]) for i in range(len(values))]
    return PureEnsemble.from_weights(values, states)


def purify(rho: DensityMatrix) -> StateVector:
    """Canonical purification with an ancilla of dimension rank(rho)."""
    values, vectors = spectrum(rho)
    rank = len(values)
    amps = (vectors * np.sqrt(values)).reshape(-1)
    label = rho.layout.fresh_label(ANCILLA_LABEL)
    return StateVector.normalized(rho.layout.extended(label, rank), amps)


def haar_state(layout: SubsystemLayout, rng: np.random.Generator) -> StateVector:
    amps = rng.standard_normal(layout.total_dim) + 1j * rng.standard_normal(
        layout.total_dim
    )
    return StateVector.normalized(layout, amps)


def random_density(
    layout: SubsystemLayout,
    rng: np.random.Generator,
    rank: int | None = None,
) -> DensityMatrix:
    """Ginibre-induced random density matrix of the given rank."""
    dim = layout.total_dim
    rank = dim if rank is None else rank
    ginibre = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    mat = ginibre @ ginibre.conj().T
    return DensityMatrix(layout, mat / np.real(np.trace(mat)))


def random_ensemble(
    layout: SubsystemLayout,
    size: int,
    rng: np.random.Generator,
) -> PureEnsemble:
    probabilities = rng.dirichlet(np.ones(size))
    states = [haar_state(layout, rng) for _ in range(size)]
    return PureEnsemble.from_weights(probabilities, states, floor=0.0)
