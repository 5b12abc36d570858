"""Unitaries, local-unitary mixtures and Kraus channels acting on labeled registers."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, overload

import numpy as np
from scipy.linalg import expm, null_space

from ebitflow.errors import (
    BadParam,
    DimensionMismatch,
    NotTracePreserving,
    NotUnitary,
    ParseError,
)
from ebitflow.states import (
    ATOL,
    COEFF_FLOOR,
    DensityMatrix,
    StateVector,
    partial_trace,
)
from ebitflow.tensor import SubsystemLayout, embed_operator, kron

ChannelKind = Literal[
    "identity",
    "depolarizing",
    "amplitude_damping",
    "phase_damping",
    "random",
]
NAMED_KINDS = ("identity", "depolarizing", "amplitude_damping", "phase_damping")
ENV_LABEL = "E"

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=complex,
)


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """Unitary on ``targets`` (in that factor order); no targets means the whole register."""

    mat: np.ndarray
    targets: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        mat = np.array(self.mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise NotUnitary(f"Unitary must be square, got shape {mat.shape}")
        error = float(np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))))
        if error > ATOL:
            raise NotUnitary(f"U^dagger U deviates from identity by {error:.3e}")
        mat.flags.writeable = False
        object.__setattr__(self, "mat", mat)
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def identity(cls, dim: int, targets: Sequence[str] | None = None) -> UnitaryOp:
        return cls(np.eye(dim, dtype=complex), None if targets is None else tuple(targets))

    def on(self, *targets: str) -> UnitaryOp:
        return UnitaryOp(self.mat, targets)

    def embedded(self, layout: SubsystemLayout) -> np.ndarray:
        if self.targets is None:
            if self.dim != layout.total_dim:
                raise DimensionMismatch(
                    f"Unitary of dimension {self.dim} on register of dimension "
                    f"{layout.total_dim}"
                )
            return self.mat
        return embed_operator(self.mat, self.targets, layout)


@dataclass(frozen=True, eq=False)
class LoccMixture:
    """Probabilistic mixture of product unitaries ``U_abc (x) U_d``."""

    terms: tuple[tuple[float, UnitaryOp, UnitaryOp], ...]

    def __post_init__(self) -> None:
        terms = tuple((float(q), u, v) for q, u, v in self.terms)
        if not terms:
            raise BadParam("Mixture must have at least one term")
        for q, _, _ in terms:
            if q <= 0:
                raise BadParam(f"Mixture probability {q} is not positive")
        total = sum(q for q, _, _ in terms)
        if abs(total - 1.0) > ATOL:
            raise BadParam(f"Mixture probabilities sum to {total!r}, expected 1")
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    kraus: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        kraus = tuple(np.array(op, dtype=complex) for op in self.kraus)
        if not kraus:
            raise NotTracePreserving("Channel needs at least one Kraus operator")
        dim = kraus[0].shape[0]
        for op in kraus:
            if op.shape != (dim, dim):
                raise DimensionMismatch(
                    f"Kraus operators must all be {dim}x{dim}, got {op.shape}"
                )
            op.flags.writeable = False
        total = sum(op.conj().T @ op for op in kraus)
        error = float(np.max(np.abs(total - np.eye(dim))))
        if error > ATOL:
            raise NotTracePreserving(
                f"Sum of K^dagger K deviates from identity by {error:.3e}"
            )
        object.__setattr__(self, "kraus", kraus)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    @property
    def env_dim(self) -> int:
        return len(self.kraus)


def compose(layout: SubsystemLayout, *ops: UnitaryOp) -> UnitaryOp:
    """Whole-register unitary applying ``ops`` in order."""
    mat = np.eye(layout.total_dim, dtype=complex)
    for op in ops:
        mat = op.embedded(layout) @ mat
    return UnitaryOp(mat)


def bell_maker(control: str, target: str) -> UnitaryOp:
    """Hadamard on ``control`` then CNOT from ``control`` to ``target``."""
    return UnitaryOp(CNOT @ np.kron(HADAMARD, IDENTITY_2), (control, target))


def two_bell_pairs_preparation(layout: SubsystemLayout) -> UnitaryOp:
    """Maps the all-zero state to Phi+ on (A, D) times Phi+ on (B, C)."""
    return compose(layout, bell_maker("A", "D"), bell_maker("B", "C"))


def haar_unitary(
    dim: int,
    rng: np.random.Generator,
    targets: Sequence[str] | None = None,
) -> UnitaryOp:
    if dim < 1:
        raise BadParam(f"Unitary dimension must be positive, got {dim}")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    return UnitaryOp(q, None if targets is None else tuple(targets))


def small_unitary(
    dim: int,
    angle: float,
    rng: np.random.Generator,
    targets: Sequence[str] | None = None,
) -> UnitaryOp:
    """``exp(i angle H)`` for a random Hermitian ``H`` of unit spectral norm."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (z + z.conj().T) / 2
    h = h / np.linalg.norm(h, 2)
    return UnitaryOp(expm(1j * angle * h), None if targets is None else tuple(targets))


@overload
def apply_unitary(state: StateVector, u: UnitaryOp) -> StateVector: ...
@overload
def apply_unitary(state: DensityMatrix, u: UnitaryOp) -> DensityMatrix: ...
def apply_unitary(
    state: StateVector | DensityMatrix,
    u: UnitaryOp,
) -> StateVector | DensityMatrix:
    full = u.embedded(state.layout)
    if isinstance(state, StateVector):
        return StateVector.normalized(state.layout, full @ state.amps)
    mat = full @ state.mat @ full.conj().T
    return DensityMatrix(state.layout, (mat + mat.conj().T) / 2)


def apply_locc_mixture(rho: DensityMatrix, mix: LoccMixture) -> DensityMatrix:
    mat = np.zeros_like(rho.mat)
    for q, u_abc, u_d in mix.terms:
        full = u_d.embedded(rho.layout) @ u_abc.embedded(rho.layout)
        mat = mat + q * (full @ rho.mat @ full.conj().T)
    return DensityMatrix(rho.layout, (mat + mat.conj().T) / 2)


def _check_channel_target(ch: QuantumChannel, layout: SubsystemLayout, target: str) -> None:
    if layout.dim(target) != ch.dim:
        raise DimensionMismatch(
            f"Channel of dimension {ch.dim} cannot act on '{target}' "
            f"of dimension {layout.dim(target)}"
        )


def apply_channel(rho: DensityMatrix, ch: QuantumChannel, target: str) -> DensityMatrix:
    _check_channel_target(ch, rho.layout, target)
    mat = np.zeros_like(rho.mat)
    for op in ch.kraus:
        full = embed_operator(op, (target,), rho.layout)
        mat = mat + full @ rho.mat @ full.conj().T
    return DensityMatrix(rho.layout, (mat + mat.conj().T) / 2)


def kraus_branches(
    psi: StateVector,
    ch: QuantumChannel,
    target: str,
) -> list[tuple[float, StateVector]]:
    """Normalized post-Kraus states of a pure state with their probabilities."""
    _check_channel_target(ch, psi.layout, target)
    branches: list[tuple[float, StateVector]] = []
    for op in ch.kraus:
        amps = embed_operator(op, (target,), psi.layout) @ psi.amps
        weight = float(np.real(np.vdot(amps, amps)))
        if weight > COEFF_FLOOR:
            branches.append((weight, StateVector.normalized(psi.layout, amps)))
    return branches


def stinespring_dilate(ch: QuantumChannel) -> tuple[np.ndarray, SubsystemLayout]:
    """Isometry ``V = sum_i K_i (x) |i_E>``, system factor first."""
    stacked = np.stack(ch.kraus)
    v = stacked.transpose(1, 0, 2).reshape(ch.dim * ch.env_dim, ch.dim)
    return v, SubsystemLayout((ENV_LABEL,), (ch.env_dim,))


def unitary_completion(v: np.ndarray, env_dim: int) -> np.ndarray:
    """Unitary on system (x) env that maps ``|t> (x) |0_E>`` to ``V|t>``."""
    total, dim = v.shape
    if total != dim * env_dim:
        raise DimensionMismatch(
            f"Isometry of shape {v.shape} does not match env dimension {env_dim}"
        )
    complement = null_space(v.conj().T)
    unitary = np.zeros((total, total), dtype=complex)
    fixed = np.arange(dim) * env_dim
    unitary[:, fixed] = v
    free = np.setdiff1d(np.arange(total), fixed)
    unitary[:, free] = complement
    return unitary


def apply_channel_via_stinespring(
    rho: DensityMatrix,
    ch: QuantumChannel,
    target: str,
) -> DensityMatrix:
    _check_channel_target(ch, rho.layout, target)
    v, _ = stinespring_dilate(ch)
    env = rho.layout.fresh_label(ENV_LABEL)
    layout = rho.layout.extended(env, ch.env_dim)
    blank = np.zeros((ch.env_dim, ch.env_dim), dtype=complex)
    blank[0, 0] = 1.0
    joint = DensityMatrix(layout, kron(rho.mat, blank))
    u = UnitaryOp(unitary_completion(v, ch.env_dim), (target, env))
    return partial_trace(apply_unitary(joint, u), rho.layout.labels)


def named_channel(kind: str, param: float = 0.0) -> QuantumChannel:
    if kind not in NAMED_KINDS:
        raise BadParam(f"Unknown channel kind '{kind}'; expected one of {NAMED_KINDS}")
    if not 0.0 <= param <= 1.0:
        raise BadParam(f"Channel parameter {param!r} is outside [0, 1]")
    match kind:
        case "identity":
            ops = [IDENTITY_2]
        case "depolarizing":
            ops = [
                math.sqrt(1.0 - 3.0 * param / 4.0) * IDENTITY_2,
                *(math.sqrt(param / 4.0) * pauli for pauli in (PAULI_X, PAULI_Y, PAULI_Z)),
            ]
        case "amplitude_damping":
            ops = [
                np.array([[1, 0], [0, math.sqrt(1.0 - param)]], dtype=complex),
                np.array([[0, math.sqrt(param)], [0, 0]], dtype=complex),
            ]
        case _:
            ops = [
                np.array([[1, 0], [0, math.sqrt(1.0 - param)]], dtype=complex),
                np.array([[0, 0], [0, math.sqrt(param)]], dtype=complex),
            ]
    return QuantumChannel(tuple(op for op in ops if np.any(op)))


def random_channel(dim: int, env_dim: int, rng: np.random.Generator) -> QuantumChannel:
    """Kraus set sliced from the first ``dim`` columns of a Haar unitary."""
    if dim < 1 or env_dim < 1:
        raise BadParam(f"Channel dimensions must be positive, got {dim}, {env_dim}")
    v = haar_unitary(dim * env_dim, rng).mat[:, :dim]
    kraus = v.reshape(dim, env_dim, dim).transpose(1, 0, 2)
    return QuantumChannel(tuple(kraus))


@dataclass(frozen=True)
class ChannelSpec:
    """Parsed ``kind:param`` or ``random:env_dim=k[:seed=s]`` channel description."""

    kind: ChannelKind
    param: float = 0.0
    env_dim: int = 2
    seed: int | None = None

    @classmethod
    def parse(cls, text: str) -> ChannelSpec:
        kind, *fields = [part.strip() for part in text.strip().split(":")]
        if kind == "random":
            return cls._parse_random(text, fields)
        if kind not in NAMED_KINDS:
            raise ParseError(f"Unknown channel kind in '{text}'")
        if kind == "identity" and not fields:
            return cls("identity")
        if len(fields) != 1:
            raise ParseError(f"Channel '{text}' must look like kind:param")
        try:
            param = float(fields[0])
        except ValueError as exc:
            raise ParseError(f"Channel parameter in '{text}' is not a number") from exc
        if not 0.0 <= param <= 1.0:
            raise ParseError(f"Channel parameter in '{text}' is outside [0, 1]")
        return cls(kind, param)

    @classmethod
    def _parse_random(cls, text: str, fields: list[str]) -> ChannelSpec:
        options: dict[str, int] = {}
        for field in fields:
            key, found, value = field.partition("=")
            if not found or key not in {"env_dim", "seed"}:
                raise ParseError(f"Unexpected option '{field}' in channel '{text}'")
            try:
                options[key] = int(value)
            except ValueError as exc:
                raise ParseError(f"Option '{field}' in '{text}' is not an integer") from exc
        if options.get("env_dim", 2) < 1:
            raise ParseError(f"env_dim in '{text}' must be positive")
        return cls("random", env_dim=options.get("env_dim", 2), seed=options.get("seed"))

    def build(self, rng: np.random.Generator | None = None, dim: int = 2) -> QuantumChannel:
        """Instantiate the channel; unseeded random channels draw from ``rng``."""
        if self.kind != "random":
            return named_channel(self.kind, self.param)
        if self.seed is not None:
            rng = np.random.default_rng(self.seed)
        if rng is None:
            raise BadParam("Unseeded random channel needs a random stream")
        return random_channel(dim, self.env_dim, rng)

    def __str__(self) -> str:
        if self.kind == "random":
            suffix = "" if self.seed is None else f":seed={self.seed}"
            return f"random:env_dim={self.env_dim}{suffix}"
        if self.kind == "identity":
            return "identity"
        return f"{self.kind}:{self.param:g}"


def dephasing_mixture(layout: SubsystemLayout, target: str = "D") -> LoccMixture:
    """Equal mixture of identity and Pauli Z on ``target``."""
    rest = tuple(label for label in layout.labels if label != target)
    rest_dim = layout.subset(rest).total_dim
    identity = UnitaryOp.identity(rest_dim, rest)
    return LoccMixture((
        (0.5, identity, UnitaryOp(IDENTITY_2, (target,))),
        (0.5, identity, UnitaryOp(PAULI_Z, (target,))),
    ))


def random_locc_mixture(
    layout: SubsystemLayout,
    terms: int,
    rng: np.random.Generator,
    sender: str = "D",
) -> LoccMixture:
    rest = tuple(label for label in layout.labels if label != sender)
    rest_dim = layout.subset(rest).total_dim
    weights = rng.dirichlet(np.ones(terms))
    return LoccMixture(tuple(
        (
            float(q),
            haar_unitary(rest_dim, rng, rest),
            haar_unitary(layout.dim(sender), rng, (sender,)),
        )
        for q in weights
    ))
