"""Entropies and entanglement measures, all in bits (ebits)."""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.linalg import expm, expm_frechet
from scipy.optimize import minimize

from ebitflow.errors import LayoutMismatch, WrongShape
from ebitflow.states import (
    COEFF_FLOOR,
    DensityMatrix,
    PureEnsemble,
    StateVector,
    eigen_ensemble,
    partial_trace,
    permute_subsystems,
    product_state,
    spectrum,
)
from ebitflow.tensor import (
    Bipartition,
    SubsystemLayout,
    kron,
    permute_amplitudes,
    permute_operator,
)

EofMethod = Literal["closed_form", "variational", "pure"]
OptMethod = Literal["L-BFGS-B", "Powell", "Nelder-Mead"]
LN2 = math.log(2.0)
SIDE_AGREEMENT_TOL = 1e-9
PRODUCT_ATOL = 1e-10
MAX_PRODUCT_MEMBERS = 4096
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)


@dataclass(frozen=True)
class EntropyValue:
    bits: float

    def __float__(self) -> float:
        return self.bits


@dataclass(frozen=True)
class OptConfig:
    max_ensemble: int | None = None
    restarts: int = 20
    tol: float = 1e-6
    max_iters: int = 5000
    seed: int = 0
    method: OptMethod = "Powell"
    variational_rank_limit: int = 4


@dataclass(frozen=True)
class EofResult:
    value: float
    method: EofMethod
    converged: bool = True
    restarts_used: int = 0
    decomposition: PureEnsemble | None = None

    @property
    def exact(self) -> bool:
        return self.method != "variational"


@dataclass(frozen=True)
class InequalityReport:
    s_ab: float
    s_c: float
    s_abc: float

    @property
    def lower_margin(self) -> float:
        return self.s_abc - abs(self.s_ab - self.s_c)

    @property
    def upper_margin(self) -> float:
        return self.s_ab + self.s_c - self.s_abc

    def holds(self, tol: float = 1e-9) -> bool:
        return min(self.lower_margin, self.upper_margin) >= -tol


def entropy_of_spectrum(values: np.ndarray, floor: float = COEFF_FLOOR) -> float:
    values = np.asarray(values, dtype=float)
    values = values[values > floor]
    return max(0.0, float(-np.sum(values * np.log2(values))))


def binary_entropy(x: float) -> float:
    return entropy_of_spectrum(np.array([x, 1.0 - x]))


def von_neumann_entropy(rho: DensityMatrix) -> EntropyValue:
    bits = entropy_of_spectrum(rho.eigenvalues())
    return EntropyValue(min(bits, math.log2(rho.layout.total_dim)))


def pure_entanglement(psi: StateVector, cut: Bipartition) -> EntropyValue:
    cut.validate(psi.layout)
    left = von_neumann_entropy(psi.marginal(cut.left)).bits
    right = von_neumann_entropy(psi.marginal(cut.right)).bits
    if abs(left - right) > SIDE_AGREEMENT_TOL:
        raise ArithmeticError(
            f"Marginal entropies across {cut} disagree: {left!r} vs {right!r}"
        )
    return EntropyValue(left)


def ensemble_avg_entanglement(ens: PureEnsemble, cut: Bipartition) -> EntropyValue:
    if sorted(cut.labels) != sorted(ens.layout.labels):
        raise LayoutMismatch(
            f"Cut {cut} does not match ensemble layout {ens.layout.labels}"
        )
    return EntropyValue(
        sum(p * pure_entanglement(state, cut).bits for p, state in ens.members)
    )


def check_entropy_inequality(
    rho_full: DensityMatrix,
    part_ab: Iterable[str],
    part_c: Iterable[str],
) -> InequalityReport:
    part_ab, part_c = tuple(part_ab), tuple(part_c)
    Bipartition(part_ab, part_c).validate(rho_full.layout)
    return InequalityReport(
        s_ab=von_neumann_entropy(partial_trace(rho_full, part_ab)).bits,
        s_c=von_neumann_entropy(partial_trace(rho_full, part_c)).bits,
        s_abc=von_neumann_entropy(rho_full).bits,
    )


def _check_two_qubit(rho: DensityMatrix) -> None:
    if rho.layout.dims != (2, 2):
        raise WrongShape(
            f"Closed-form EoF needs two qubits, got dims {rho.layout.dims}"
        )


def concurrence(rho: DensityMatrix) -> float:
    _check_two_qubit(rho)
    flip = np.kron(PAULI_Y, PAULI_Y)
    tilde = flip @ rho.mat.conj() @ flip
    values, vectors = np.linalg.eigh(rho.mat)
    root = (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T
    product = root @ tilde @ root
    product = (product + product.conj().T) / 2
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(product), 0.0, None))[::-1]
    return max(0.0, float(lam[0] - lam[1] - lam[2] - lam[3]))


def eof_two_qubit(rho: DensityMatrix) -> EofResult:
    c = min(concurrence(rho), 1.0)
    value = binary_entropy((1.0 + math.sqrt(max(0.0, 1.0 - c * c))) / 2.0)
    return EofResult(value=value, method="closed_form")


class DecompositionSearch:
    """Average cut entanglement of the decompositions of one density matrix.

    Every decomposition of size ``size`` of a rank-``r`` state is reached as
    ``W[:, :r] @ A`` where the rows of ``A`` are the square-root-weighted
    eigenvectors and ``W = expm(iH)`` for a Hermitian ``H``. Only the first ``r``
    columns of ``W`` matter, so the lower-right ``(size - r)`` block of ``H`` is
    held at zero and the remaining ``2 * size * r - r**2`` real entries are the
    search parameters.
    """

    def __init__(self, amplitudes: np.ndarray, dims: tuple[int, int], size: int):
        self.amplitudes = amplitudes
        self.rank = amplitudes.shape[0]
        self.dims = dims
        self.size = size
        rows, cols = np.triu_indices(size, 1)
        self.upper = (rows[rows < self.rank], cols[rows < self.rank])

    @property
    def n_params(self) -> int:
        return self.rank + 2 * len(self.upper[0])

    def generator(self, theta: np.ndarray) -> np.ndarray:
        k, r = self.size, self.rank
        off = len(self.upper[0])
        h = np.zeros((k, k), dtype=complex)
        h[np.arange(r), np.arange(r)] = theta[:r]
        values = theta[r : r + off] + 1j * theta[r + off :]
        h[self.upper] = values
        h[self.upper[1], self.upper[0]] = values.conj()
        return 1j * h

    def members(self, theta: np.ndarray) -> np.ndarray:
        unitary = expm(self.generator(theta))
        return unitary[:, : self.rank] @ self.amplitudes

    def value(self, theta: np.ndarray) -> float:
        return self.value_and_grad(theta, with_grad=False)[0]

    def value_and_grad(
        self,
        theta: np.ndarray,
        with_grad: bool = True,
    ) -> tuple[float, np.ndarray]:
        k, (dl, dr) = self.size, self.dims
        gen = self.generator(theta)
        unitary = expm(gen)
        members = unitary[:, : self.rank] @ self.amplitudes
        blocks = members.reshape(k, dl, dr)
        tau = blocks @ blocks.conj().transpose(0, 2, 1)
        lam, vecs = np.linalg.eigh(tau)
        lam = np.clip(lam, 0.0, None)
        weights = lam.sum(axis=1)
        log_lam = np.log(np.maximum(lam, COEFF_FLOOR))
        log_w = np.log(np.maximum(weights, COEFF_FLOOR))
        xlogx = np.where(lam > COEFF_FLOOR, lam * log_lam, 0.0).sum(axis=1)
        wlogw = np.where(weights > COEFF_FLOOR, weights * log_w, 0.0)
        value = float(np.sum(wlogw - xlogx) / LN2)
        if not with_grad:
            return value, np.empty(0)

        # d/d(conj M) of  -tr(tau log tau) + w log w  is  (log w - log tau) M
        scale = (log_w[:, None] - log_lam) / LN2
        phi = (vecs * scale[:, None, :]) @ vecs.conj().transpose(0, 2, 1)
        grad_members = (phi @ blocks).reshape(k, -1)
        grad_members[weights <= COEFF_FLOOR] = 0.0
        grad_w = np.zeros((k, k), dtype=complex)
        grad_w[:, : self.rank] = grad_members @ self.amplitudes.conj().T
        grad_gen = expm_frechet(gen.conj().T, grad_w, compute_expm=False)
        b = 1j * grad_gen.conj()
        i, j = self.upper
        grad = np.concatenate([
            2.0 * np.real(np.diag(b)[: self.rank]),
            2.0 * np.real(b[i, j] + b[j, i]),
            2.0 * (np.imag(b[j, i]) - np.imag(b[i, j])),
        ])
        return value, grad


def eof_variational(
    rho: DensityMatrix,
    cut: Bipartition,
    cfg: OptConfig | None = None,
) -> EofResult:
    cfg = cfg or OptConfig()
    cut.validate(rho.layout)
    values, vectors = spectrum(rho)
    rank = len(values)
    if rank == 1:
        psi = StateVector.normalized(rho.layout, vectors[:, 0])
        return EofResult(
            value=pure_entanglement(psi, cut).bits,
            method="variational",
            decomposition=PureEnsemble(((1.0, psi),)),
        )

    # The smaller side goes first so the per-member marginals stay small.
    left, right = cut.left, cut.right
    if rho.layout.subset(left).total_dim > rho.layout.subset(right).total_dim:
        left, right = right, left
    order = (*left, *right)
    dims = (rho.layout.subset(left).total_dim, rho.layout.subset(right).total_dim)
    amplitudes = np.stack([
        np.sqrt(values[index]) * permute_amplitudes(vectors[:, index], rho.layout, order)
        for index in range(rank)
    ])
    size = max(rank, cfg.max_ensemble or rank * rank)
    search = DecompositionSearch(amplitudes, dims, size)

    best_value = math.inf
    best_theta = np.zeros(search.n_params)
    converged = False
    restarts_used = 0
    streams = np.random.SeedSequence(cfg.seed).spawn(max(cfg.restarts, 1))
    for index, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        theta0 = (
            np.zeros(search.n_params)
            if index == 0
            else rng.standard_normal(search.n_params)
        )
        result = _local_search(search, theta0, cfg)
        restarts_used += 1
        if result.fun < best_value:
            best_value = float(result.fun)
            best_theta = result.x
            converged = bool(result.success)
        if best_value <= COEFF_FLOOR:
            break

    decomposition = _decomposition(search, best_theta, rho.layout, order)
    return EofResult(
        value=ensemble_avg_entanglement(decomposition, cut).bits,
        method="variational",
        converged=converged,
        restarts_used=restarts_used,
        decomposition=decomposition,
    )


def _local_search(search: DecompositionSearch, theta0: np.ndarray, cfg: OptConfig):
    if cfg.method == "L-BFGS-B":
        return minimize(
            search.value_and_grad,
            theta0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": cfg.max_iters, "ftol": cfg.tol * 1e-2, "gtol": cfg.tol},
        )
    return minimize(
        search.value,
        theta0,
        method=cfg.method,
        tol=cfg.tol,
        options={"maxiter": cfg.max_iters},
    )


def _decomposition(
    search: DecompositionSearch,
    theta: np.ndarray,
    layout: SubsystemLayout,
    order: Sequence[str],
) -> PureEnsemble:
    members = search.members(theta)
    working = layout.reordered(order)
    weights = np.real(np.sum(members * members.conj(), axis=1))
    states = [
        permute_subsystems(StateVector.normalized(working, row), layout.labels)
        if weight > COEFF_FLOOR
        else None
        for row, weight in zip(members, weights, strict=True)
    ]
    kept = [index for index, state in enumerate(states) if state is not None]
    return PureEnsemble.from_weights(
        [weights[index] for index in kept],
        [states[index] for index in kept],
    )


def factorize(rho: DensityMatrix, atol: float = PRODUCT_ATOL) -> list[tuple[str, ...]]:
    """Split the labels into blocks such that rho is the product of block marginals."""
    blocks: list[tuple[str, ...]] = []
    remaining = rho
    while True:
        block = _leading_factor(remaining, atol)
        if block is None:
            blocks.append(remaining.layout.labels)
            return blocks
        blocks.append(block)
        rest = [label for label in remaining.layout.labels if label not in block]
        remaining = partial_trace(remaining, rest)


def _leading_factor(rho: DensityMatrix, atol: float) -> tuple[str, ...] | None:
    labels = rho.layout.labels
    head, tail = labels[0], labels[1:]
    for size in range(len(tail)):
        for extra in itertools.combinations(tail, size):
            block = (head, *extra)
            rest = tuple(label for label in labels if label not in block)
            if _is_product(rho, block, rest, atol):
                return block
    return None


def _is_product(
    rho: DensityMatrix,
    block: tuple[str, ...],
    rest: tuple[str, ...],
    atol: float,
) -> bool:
    joint = permute_operator(rho.mat, rho.layout, (*block, *rest))
    candidate = kron(partial_trace(rho, block).mat, partial_trace(rho, rest).mat)
    return float(np.max(np.abs(joint - candidate))) <= atol


def estimate_eof(
    rho: DensityMatrix,
    cut: Bipartition,
    cfg: OptConfig | None = None,
    *,
    with_decomposition: bool = False,
    candidates: Sequence[PureEnsemble] = (),
) -> EofResult:
    """Best available EoF value of ``rho`` across ``cut``.

    Independent blocks are handled separately and their values summed: blocks on
    one side of the cut contribute zero, pure blocks use their marginal entropy,
    two-qubit blocks straddling the cut use the closed form and the rest are
    searched. Blocks above ``cfg.variational_rank_limit`` get a single
    gradient descent over rank-sized decompositions, started from the
    eigen-ensemble. With ``with_decomposition`` the closed-form blocks also carry
    a searched decomposition, so the result always holds an explicit ensemble.

    ``candidates`` are known decompositions of ``rho``; a searched value is
    replaced by the average of any candidate that does better.
    """
    cfg = cfg or OptConfig()
    cut.validate(rho.layout)
    blocks = factorize(rho)
    parts: list[tuple[tuple[str, ...], EofResult]] = []
    for block in blocks:
        sub = rho if len(blocks) == 1 else partial_trace(rho, block)
        parts.append((sub.layout.labels, _block_eof(sub, cut, cfg, with_decomposition)))

    methods = {part.method for _, part in parts}
    method: EofMethod = (
        "variational"
        if "variational" in methods
        else "pure"
        if methods == {"pure"}
        else "closed_form"
    )
    result = EofResult(
        value=sum(part.value for _, part in parts),
        method=method,
        converged=all(part.converged for _, part in parts),
        restarts_used=sum(part.restarts_used for _, part in parts),
        decomposition=_product_decomposition(parts, rho.layout),
    )
    if result.exact:
        return result
    for ensemble in candidates:
        average = ensemble_avg_entanglement(ensemble, cut).bits
        if average < result.value:
            result = replace(result, value=average, decomposition=ensemble)
    return result


def _block_eof(
    sub: DensityMatrix,
    cut: Bipartition,
    cfg: OptConfig,
    with_decomposition: bool,
) -> EofResult:
    labels = sub.layout.labels
    left = tuple(label for label in labels if label in cut.left)
    right = tuple(label for label in labels if label in cut.right)
    if not left or not right:
        return EofResult(0.0, "closed_form", decomposition=eigen_ensemble(sub))
    block_cut = Bipartition(left, right)
    values, vectors = spectrum(sub)
    rank = len(values)
    if rank == 1:
        psi = StateVector.normalized(sub.layout, vectors[:, 0])
        return EofResult(
            pure_entanglement(psi, block_cut).bits,
            "pure",
            decomposition=PureEnsemble(((1.0, psi),)),
        )
    if sub.layout.dims == (2, 2):
        exact = eof_two_qubit(sub)
        if not with_decomposition:
            return exact
        searched = eof_variational(sub, block_cut, cfg)
        return EofResult(
            exact.value,
            "closed_form",
            converged=searched.converged,
            restarts_used=searched.restarts_used,
            decomposition=searched.decomposition,
        )
    if rank <= cfg.variational_rank_limit:
        return eof_variational(sub, block_cut, cfg)
    descent = replace(cfg, max_ensemble=rank, restarts=1, method="L-BFGS-B")
    return eof_variational(sub, block_cut, descent)


def _product_decomposition(
    parts: list[tuple[tuple[str, ...], EofResult]],
    layout: SubsystemLayout,
) -> PureEnsemble | None:
    ensembles = [result.decomposition for _, result in parts]
    if any(ensemble is None for ensemble in ensembles):
        return None
    if len(ensembles) == 1:
        return ensembles[0]
    if math.prod(len(ensemble) for ensemble in ensembles) > MAX_PRODUCT_MEMBERS:
        return None
    members = []
    for combo in itertools.product(*(ensemble.members for ensemble in ensembles)):
        probability = math.prod(p for p, _ in combo)
        joined = product_state(*(state for _, state in combo))
        members.append((probability, permute_subsystems(joined, layout.labels)))
    return PureEnsemble.from_weights(
        [p for p, _ in members],
        [state for _, state in members],
        floor=0.0,
    )
