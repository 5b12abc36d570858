import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats, integers
from scipy.optimize import approx_fprime

from ebitflow.channels import apply_channel, apply_unitary, haar_unitary, random_channel
from ebitflow.entanglement import (
    DecompositionSearch,
    OptConfig,
    binary_entropy,
    check_entropy_inequality,
    concurrence,
    ensemble_avg_entanglement,
    eof_two_qubit,
    eof_variational,
    estimate_eof,
    factorize,
    pure_entanglement,
    von_neumann_entropy,
)
from ebitflow.errors import InvalidBipartition, LayoutMismatch, WrongShape
from ebitflow.states import (
    DensityMatrix,
    PureEnsemble,
    StateVector,
    eigen_ensemble,
    haar_state,
    partial_trace,
    product_state,
    pure_to_density,
    random_density,
    random_ensemble,
    validate_density,
)
from ebitflow.tensor import Bipartition, SubsystemLayout

AB = SubsystemLayout.qubits("A", "B")
A_B = Bipartition(("A",), ("B",))
FAST = OptConfig(restarts=3, max_iters=500, seed=7, method="L-BFGS-B")


def bell() -> StateVector:
    return StateVector(AB, np.array([1, 0, 0, 1]) / math.sqrt(2))


def werner(p: float) -> DensityMatrix:
    phi = pure_to_density(bell()).mat
    return validate_density(p * phi + (1 - p) * np.eye(4) / 4, AB)


def werner_eof(p: float) -> float:
    c = max(0.0, (3 * p - 1) / 2)
    return binary_entropy((1 + math.sqrt(1 - c * c)) / 2)


@pytest.mark.parametrize(
    ("x", "expected"),
    [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0), (0.25, 0.8112781244591328)],
)
def test_binary_entropy(x, expected):
    assert math.isclose(binary_entropy(x), expected, abs_tol=1e-12)


def test_von_neumann_entropy_extremes(rng):
    assert math.isclose(von_neumann_entropy(werner(0.0)).bits, 2.0)
    assert von_neumann_entropy(pure_to_density(haar_state(AB, rng))).bits < 1e-9


@settings(max_examples=25, deadline=None)
@given(integers(0, 2**32 - 1))
def test_entropy_is_unitarily_invariant(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(SubsystemLayout.qubits("A", "B", "C"), rng)
    moved = apply_unitary(rho, haar_unitary(8, rng))
    assert math.isclose(
        von_neumann_entropy(moved).bits, von_neumann_entropy(rho).bits, abs_tol=1e-9
    )


def test_local_channel_never_raises_two_qubit_eof(rng):
    for _ in range(50):
        rho = random_density(AB, rng)
        noisy = apply_channel(rho, random_channel(2, 2, rng), "A")
        assert eof_two_qubit(noisy).value <= eof_two_qubit(rho).value + 1e-9


def test_pure_entanglement_of_bell_and_product():
    assert math.isclose(pure_entanglement(bell(), A_B).bits, 1.0, abs_tol=1e-12)
    assert pure_entanglement(StateVector.basis(AB, 3), A_B).bits == 0.0


@settings(max_examples=25, deadline=None)
@given(integers(0, 2**32 - 1))
def test_pure_entanglement_is_bounded_by_smaller_side(seed):
    rng = np.random.default_rng(seed)
    layout = SubsystemLayout(("A", "B", "C"), (2, 3, 2))
    psi = haar_state(layout, rng)
    value = pure_entanglement(psi, Bipartition(("A",), ("B", "C"))).bits
    assert 0.0 <= value <= 1.0 + 1e-12
    value = pure_entanglement(psi, Bipartition(("C", "A"), ("B",))).bits
    assert value <= math.log2(3) + 1e-12


def test_ensemble_average_needs_matching_cut():
    ensemble = PureEnsemble(((1.0, bell()),))
    assert math.isclose(ensemble_avg_entanglement(ensemble, A_B).bits, 1.0)
    with pytest.raises(LayoutMismatch):
        ensemble_avg_entanglement(ensemble, Bipartition(("A",), ("C",)))


def test_entropy_inequality_holds_on_random_states(rng):
    layout = SubsystemLayout.qubits("A", "B", "C")
    for _ in range(100):
        rho = random_density(layout, rng, rank=int(rng.integers(1, 9)))
        report = check_entropy_inequality(rho, ["A", "B"], ["C"])
        assert report.holds()
        assert report.lower_margin >= -1e-9
        assert report.upper_margin >= -1e-9


def test_entropy_inequality_is_tight_for_pure_states(rng):
    psi = haar_state(SubsystemLayout.qubits("A", "B", "C"), rng)
    report = check_entropy_inequality(pure_to_density(psi), ["A", "B"], ["C"])
    assert math.isclose(report.s_ab, report.s_c, abs_tol=1e-9)
    assert abs(report.lower_margin) < 1e-9


def test_entropy_inequality_rejects_bad_partition(rng):
    rho = random_density(SubsystemLayout.qubits("A", "B", "C"), rng)
    with pytest.raises(InvalidBipartition):
        check_entropy_inequality(rho, ["A"], ["C"])


def test_concurrence_of_bell_and_product():
    assert math.isclose(concurrence(pure_to_density(bell())), 1.0, abs_tol=1e-9)
    assert concurrence(pure_to_density(StateVector.basis(AB, 1))) < 1e-9


@pytest.mark.parametrize("p", [0.0, 1 / 3, 0.5, 0.9, 1.0])
def test_werner_eof_closed_form(p):
    assert math.isclose(eof_two_qubit(werner(p)).value, werner_eof(p), abs_tol=1e-9)


def test_werner_09_value():
    result = eof_two_qubit(werner(0.9))
    assert result.exact
    assert math.isclose(concurrence(werner(0.9)), 0.85, abs_tol=1e-9)
    assert math.isclose(result.value, 0.78935, abs_tol=5e-4)


def test_closed_form_needs_two_qubits(rng):
    rho = random_density(SubsystemLayout.qubits("A", "B", "C"), rng)
    with pytest.raises(WrongShape):
        eof_two_qubit(rho)
    with pytest.raises(WrongShape):
        concurrence(random_density(SubsystemLayout(("A", "B"), (2, 3)), rng))


def test_decomposition_gradient_matches_finite_differences(rng):
    rho = random_density(AB, rng, rank=2)
    values, vectors = np.linalg.eigh(rho.mat)
    amplitudes = (vectors[:, 2:] * np.sqrt(values[2:])).T
    search = DecompositionSearch(amplitudes, (2, 2), 4)
    theta = 0.3 * rng.standard_normal(search.n_params)
    _, grad = search.value_and_grad(theta)
    numeric = approx_fprime(theta, search.value, 1e-7)
    assert np.allclose(grad, numeric, atol=1e-5)


def test_decomposition_members_reproduce_density(rng):
    rho = random_density(AB, rng, rank=3)
    values, vectors = np.linalg.eigh(rho.mat)
    amplitudes = (vectors[:, 1:] * np.sqrt(values[1:])).T
    search = DecompositionSearch(amplitudes, (2, 2), 9)
    members = search.members(rng.standard_normal(search.n_params))
    assert np.allclose(members.T @ members.conj(), rho.mat, atol=1e-12)


def test_variational_matches_closed_form_on_werner():
    cfg = OptConfig(restarts=6, max_iters=2000, seed=7, method="L-BFGS-B")
    result = eof_variational(werner(0.9), A_B, cfg)
    assert result.method == "variational"
    assert not result.exact
    assert result.value >= werner_eof(0.9) - 1e-9
    assert result.value - werner_eof(0.9) < 1e-3
    assert np.allclose(result.decomposition.density().mat, werner(0.9).mat, atol=1e-9)


def test_variational_on_separable_state_is_near_zero():
    result = eof_variational(werner(0.2), A_B, FAST)
    assert result.value < 1e-3


def test_variational_of_pure_state_skips_search(rng):
    psi = haar_state(AB, rng)
    result = eof_variational(pure_to_density(psi), A_B, FAST)
    assert result.restarts_used == 0
    assert math.isclose(result.value, pure_entanglement(psi, A_B).bits, abs_tol=1e-9)


@pytest.mark.parametrize("method", ["Powell", "Nelder-Mead", "L-BFGS-B"])
def test_local_search_methods_are_selectable(method):
    phi = pure_to_density(bell()).mat
    rho = validate_density(0.6 * phi + 0.4 * np.diag([0.0, 1.0, 0.0, 0.0]), AB)
    cfg = OptConfig(restarts=2, max_iters=2000, seed=3, method=method)
    result = eof_variational(rho, A_B, cfg)
    assert result.value >= eof_two_qubit(rho).value - 1e-9
    # the first restart starts from the eigen-ensemble, whose average is 0.6
    assert result.value <= 0.6 + 1e-9


def test_default_search_is_derivative_free_and_accurate():
    assert OptConfig().method == "Powell"
    phi = pure_to_density(bell()).mat
    rho = validate_density(0.6 * phi + 0.4 * np.diag([0.0, 1.0, 0.0, 0.0]), AB)
    result = eof_variational(rho, A_B, OptConfig(restarts=4, seed=3))
    assert result.value >= eof_two_qubit(rho).value - 1e-9
    assert result.value - eof_two_qubit(rho).value < 1e-3


def test_variational_is_deterministic_for_a_seed(rng):
    rho = random_density(AB, rng, rank=2)
    first = eof_variational(rho, A_B, FAST)
    second = eof_variational(rho, A_B, FAST)
    assert first.value == second.value


@settings(max_examples=10, deadline=None)
@given(floats(0.0, 1.0))
def test_variational_upper_bounds_closed_form_on_werner_family(p):
    cfg = OptConfig(restarts=2, max_iters=500, seed=1, method="L-BFGS-B")
    assert eof_variational(werner(p), A_B, cfg).value >= werner_eof(p) - 1e-9


@pytest.mark.slow
def test_variational_agrees_with_closed_form_on_random_states():
    rng = np.random.default_rng(99)
    cfg = OptConfig(seed=11)
    for _ in range(100):
        rho = random_density(AB, rng, rank=int(rng.integers(2, 5)))
        exact = eof_two_qubit(rho).value
        searched = eof_variational(rho, A_B, cfg).value
        assert searched >= exact - 1e-9
        assert searched - exact < 1e-3


def test_factorize_two_bell_pairs():
    layout = SubsystemLayout.qubits("A", "B", "C", "D")
    amps = np.zeros(16)
    amps[[0, 6, 9, 15]] = 0.5
    rho = pure_to_density(StateVector(layout, amps))
    assert factorize(rho) == [("A", "D"), ("B", "C")]


def test_factorize_entangled_block_stays_whole(rng):
    rho = random_density(SubsystemLayout.qubits("A", "B", "C"), rng)
    assert factorize(rho) == [("A", "B", "C")]


def test_estimate_sums_independent_blocks():
    layout = SubsystemLayout.qubits("A", "B", "C", "D")
    amps = np.zeros(16)
    amps[[0, 6, 9, 15]] = 0.5
    rho = pure_to_density(StateVector(layout, amps))
    after_d = estimate_eof(rho, Bipartition(("A", "B", "C"), ("D",)), FAST)
    after_c = estimate_eof(rho, Bipartition(("A", "B"), ("C", "D")), FAST)
    assert after_d.exact
    assert math.isclose(after_d.value, 1.0, abs_tol=1e-9)
    assert math.isclose(after_c.value, 2.0, abs_tol=1e-9)
    assert after_c.method == "pure"
    assert np.allclose(after_c.decomposition.density().mat, rho.mat, atol=1e-12)


def test_estimate_uses_closed_form_on_two_qubit_blocks():
    result = estimate_eof(werner(0.9), A_B, FAST)
    assert result.method == "closed_form"
    assert result.decomposition is None
    searched = estimate_eof(werner(0.9), A_B, FAST, with_decomposition=True)
    assert searched.value == result.value
    assert np.allclose(searched.decomposition.density().mat, werner(0.9).mat, atol=1e-9)


def test_estimate_searches_blocks_above_rank_limit(rng):
    layout = SubsystemLayout.qubits("A", "B", "C")
    cut = Bipartition(("A",), ("B", "C"))
    rho = random_ensemble(layout, 6, rng).density()
    result = estimate_eof(rho, cut, FAST)
    assert result.method == "variational"
    assert result.restarts_used == 1
    assert len(result.decomposition) <= 6
    assert np.allclose(result.decomposition.density().mat, rho.mat, atol=1e-9)
    eigen = ensemble_avg_entanglement(eigen_ensemble(rho), cut).bits
    assert result.value <= eigen + 1e-9


def test_estimate_takes_better_candidate(rng):
    plus = StateVector.normalized(SubsystemLayout.qubits("A"), np.array([1, 1]))
    zero = StateVector.basis(SubsystemLayout.qubits("A"))
    bc = SubsystemLayout.qubits("B", "C")
    separable = PureEnsemble((
        (0.5, product_state(zero, haar_state(bc, rng))),
        (0.5, product_state(plus, haar_state(bc, rng))),
    ))
    rho = separable.density()
    cut = Bipartition(("A",), ("B", "C"))
    cfg = OptConfig(restarts=1, max_iters=5, method="L-BFGS-B")
    result = estimate_eof(rho, cut, cfg, candidates=(separable,))
    assert result.method == "variational"
    assert result.value <= 1e-9
    assert np.allclose(result.decomposition.density().mat, rho.mat, atol=1e-9)


def test_exact_estimate_ignores_candidates():
    rho = werner(0.9)
    result = estimate_eof(rho, A_B, FAST, candidates=(eigen_ensemble(rho),))
    assert result.method == "closed_form"
    assert result.value == eof_two_qubit(rho).value


def test_estimate_searches_low_rank_blocks(rng):
    layout = SubsystemLayout.qubits("A", "B", "C")
    ensemble = random_ensemble(layout, 2, rng)
    result = estimate_eof(ensemble.density(), Bipartition(("A",), ("B", "C")), FAST)
    assert result.method == "variational"
    eigen = ensemble_avg_entanglement(
        eigen_ensemble(ensemble.density()), Bipartition(("A",), ("B", "C"))
    )
    assert result.value <= eigen.bits + 1e-9


def test_estimate_one_sided_block_is_zero(rng):
    rho = random_density(AB, rng)
    layout = SubsystemLayout.qubits("A", "B", "C")
    joint = DensityMatrix(layout, np.kron(rho.mat, np.diag([1.0, 0.0])))
    result = estimate_eof(joint, Bipartition(("A", "B"), ("C",)), FAST)
    assert result.value == 0.0
    assert result.exact
    assert np.allclose(partial_trace(joint, ["A", "B"]).mat, rho.mat)
