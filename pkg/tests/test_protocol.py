import math
from dataclasses import replace

import numpy as np
import pytest

from ebitflow.channels import (
    UnitaryOp,
    bell_maker,
    dephasing_mixture,
    haar_unitary,
    named_channel,
    random_channel,
    random_locc_mixture,
    small_unitary,
)
from ebitflow.entanglement import OptConfig
from ebitflow.errors import BoundViolation, LayoutMismatch
from ebitflow.experiment import depolarizing_sweep
from ebitflow.protocol import (
    CUT_AFTER_C,
    CUT_AFTER_D,
    QUBITS,
    Margin,
    equality_witness,
    initial_state,
    local_identities,
    pair_reductions,
    run_locc_protocol,
    run_mixed_protocol,
    run_noisy_protocol,
    run_pure_protocol,
    single_term,
)
from ebitflow.states import PureEnsemble, pure_to_density, random_ensemble
from ebitflow.tensor import SubsystemLayout

FAST = OptConfig(restarts=3, max_iters=500, seed=5, method="L-BFGS-B")
IDENTITY_CHANNEL = named_channel("identity")


def haar_locals(rng: np.random.Generator) -> tuple[UnitaryOp, UnitaryOp]:
    return haar_unitary(8, rng, ("A", "B", "C")), haar_unitary(2, rng, ("D",))


def rho0():
    return pure_to_density(initial_state())


def test_identity_protocol_stays_unentangled():
    trace = run_pure_protocol(UnitaryOp.identity(16), *local_identities(), strict=True)
    assert trace.values == (0.0, 0.0, 0.0, 0.0)
    assert [step.name for step in trace.steps] == ["prepare", "send_d", "local", "send_c"]
    assert trace.steps[1].cut == CUT_AFTER_D
    assert trace.steps[3].cut == CUT_AFTER_C


def test_equality_witness_saturates_the_bound():
    trace, psi = equality_witness()
    e1, e2, e3, e4 = trace.values
    assert e1 == 0.0
    assert math.isclose(e2, 1.0, abs_tol=1e-10)
    assert math.isclose(e3, 1.0, abs_tol=1e-10)
    assert math.isclose(e4, 2.0, abs_tol=1e-10)
    assert abs(trace.margins["e4_le_e2_plus_1"].value) < 1e-10
    assert abs(trace.margins["e4_minus_e3_le_s_c"].value) < 1e-10
    assert np.isclose(psi.amps[6], 0.5)
    assert not trace.violations()


def test_perturbed_witness_falls_below_two(rng):
    trace, _ = equality_witness(small_unitary(16, 0.05, rng))
    assert trace.e(4) < 2.0 - 1e-9
    assert trace.e(4) > 1.8


def test_random_pure_trials_respect_every_bound(rng):
    for _ in range(200):
        trace = run_pure_protocol(haar_unitary(16, rng), *haar_locals(rng), strict=True)
        e1, e2, e3, e4 = trace.values
        assert e1 == 0.0
        assert 0.0 <= e2 <= 1.0 + 1e-9
        assert abs(e3 - e2) < 1e-9
        assert e4 <= min(e2 + 1.0, 2.0) + 1e-9
        assert math.isclose(trace.extras["e4_bob"], e4, abs_tol=1e-9)


def test_strict_mode_raises_on_negative_margin():
    trace, _ = equality_witness()
    broken = replace(trace, margins={**trace.margins, "e2_le_1": Margin(-0.5, 1e-9)})
    assert broken.violations() == {"e2_le_1": -0.5}
    with pytest.raises(BoundViolation) as info:
        broken.check()
    assert info.value.regime == "theorem1"


def test_margin_slack():
    assert Margin(-1e-10, 1e-9).ok
    assert not Margin(-1e-8, 1e-9).ok


def test_trace_requires_four_ordered_steps():
    trace, _ = equality_witness()
    with pytest.raises(ValueError):
        replace(trace, steps=trace.steps[::-1])


def test_protocol_needs_the_four_party_layout():
    layout = SubsystemLayout.qubits("A", "B", "C", "E")
    with pytest.raises(LayoutMismatch):
        run_pure_protocol(UnitaryOp.identity(16), *local_identities(QUBITS), layout=layout)


def test_single_member_ensemble_matches_pure_run(rng):
    prep = haar_unitary(16, rng)
    u_abc, u_d = haar_locals(rng)
    pure = run_pure_protocol(prep, u_abc, u_d)
    ensemble = PureEnsemble(((1.0, initial_state()),))
    trace, members = run_mixed_protocol(ensemble, prep, u_abc, u_d, opt=FAST)
    assert np.allclose(trace.values, pure.values, atol=1e-9)
    assert all(step.exact for step in trace.steps)
    assert math.isclose(members.a2, pure.e(2), abs_tol=1e-9)


def test_mixed_protocol_without_search_reports_averages(rng):
    for _ in range(10):
        ensemble = random_ensemble(QUBITS, 3, rng)
        trace, members = run_mixed_protocol(
            ensemble,
            haar_unitary(16, rng),
            *haar_locals(rng),
            variational=False,
            strict=True,
        )
        assert trace.e(2) == members.a2
        assert trace.e(4) == members.a4
        assert trace.e(3) == trace.e(2)
        assert "e4_le_e2_plus_1" not in trace.margins
        assert len(members.member_e4) == 3


def test_mixed_protocol_with_search_respects_bounds(rng):
    for _ in range(2):
        ensemble = random_ensemble(QUBITS, 2, rng)
        trace, members = run_mixed_protocol(
            ensemble,
            haar_unitary(16, rng),
            *haar_locals(rng),
            opt=FAST,
            strict=True,
        )
        assert trace.e(2) <= members.a2 + 1e-9
        assert trace.e(4) <= trace.extras["t4"] + 1e-9
        assert trace.steps[1].method in {"eof_variational", "ensemble_avg"}


def test_product_ensemble_with_identities_stays_unentangled():
    ensemble = PureEnsemble(((0.5, initial_state()), (0.5, initial_state())))
    trace, _ = run_mixed_protocol(
        ensemble,
        UnitaryOp.identity(16),
        *local_identities(),
        opt=FAST,
    )
    assert np.allclose(trace.values, 0.0)


def test_depolarized_run_reports_searched_bounds(rng):
    depolarizing = named_channel("depolarizing", 0.3)
    noisy = run_noisy_protocol(
        rho0(),
        haar_unitary(16, rng),
        *haar_locals(rng),
        depolarizing,
        depolarizing,
        opt=FAST,
    )
    assert noisy.steps[1].method == "eof_variational"
    assert noisy.steps[3].method == "eof_variational"
    assert noisy.e(4) <= noisy.extras["a4"] + 1e-9


def test_large_ensembles_are_still_searched(rng):
    ensemble = random_ensemble(QUBITS, 5, rng)
    trace, members = run_mixed_protocol(
        ensemble,
        haar_unitary(16, rng),
        *haar_locals(rng),
        opt=FAST,
    )
    assert trace.steps[1].method == "eof_variational"
    assert trace.steps[3].method == "eof_variational"
    assert trace.e(2) <= members.a2 + 1e-9
    assert trace.e(4) <= members.a4 + 1e-9


def test_identity_channels_reproduce_the_pure_run(rng):
    prep = haar_unitary(16, rng)
    u_abc, u_d = haar_locals(rng)
    pure = run_pure_protocol(prep, u_abc, u_d)
    noisy = run_noisy_protocol(
        rho0(), prep, u_abc, u_d, IDENTITY_CHANNEL, IDENTITY_CHANNEL, opt=FAST, strict=True
    )
    assert np.allclose(noisy.values, pure.values, atol=1e-9)
    assert noisy.regime == "theorem3"
    assert noisy.steps[1].method == "pure_marginal"


def test_full_depolarizing_destroys_the_pair():
    noisy = run_noisy_protocol(
        rho0(),
        bell_maker("C", "D"),
        *local_identities(),
        named_channel("depolarizing", 1.0),
        IDENTITY_CHANNEL,
        opt=FAST,
    )
    assert noisy.e(2) < 1e-9
    assert noisy.e(4) < 1e-9
    assert noisy.pairs["step2:C~D"] < 1e-9


def test_noisy_trace_carries_pairs_and_transport(rng):
    noisy = run_noisy_protocol(
        rho0(),
        haar_unitary(16, rng),
        *haar_locals(rng),
        random_channel(2, 2, rng),
        named_channel("amplitude_damping", 0.3),
        opt=FAST,
        strict=True,
    )
    assert set(noisy.pairs) == {
        "step2:A~D",
        "step2:B~D",
        "step2:C~D",
        "step3:A~C",
        "step3:B~C",
        "step4:A~C",
        "step4:A~D",
        "step4:B~C",
        "step4:B~D",
    }
    assert noisy.extras["a4"] <= noisy.extras["a2"] + 1.0 + 1e-9
    assert noisy.extras["transported_size"] >= noisy.extras["decomposition_size"]
    assert "pair_ac_channel_monotone" in noisy.margins


def test_pair_reductions_of_two_bell_pairs():
    _, psi = equality_witness()
    rho = pure_to_density(psi)
    pairs = pair_reductions(rho, rho, rho)
    assert math.isclose(pairs["step2:A~D"], 1.0, abs_tol=1e-9)
    assert pairs["step2:B~D"] < 1e-9
    assert math.isclose(pairs["step4:B~C"], 1.0, abs_tol=1e-9)


@pytest.mark.slow
def test_depolarizing_sweep_is_monotone():
    sweep = depolarizing_sweep([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], opt=FAST)
    e2 = sweep["e2"].to_list()
    e4 = sweep["e4"].to_list()
    assert math.isclose(e2[0], 1.0, abs_tol=1e-9)
    assert math.isclose(e4[0], 2.0, abs_tol=1e-9)
    assert all(a >= b - 1e-9 for a, b in zip(e2, e2[1:], strict=False))
    assert all(a >= b - 1e-9 for a, b in zip(e4, e4[1:], strict=False))
    assert e4[-1] < 1e-9


def test_single_term_locc_matches_the_pure_run(rng):
    prep = haar_unitary(16, rng)
    u_abc, u_d = haar_locals(rng)
    pure = run_pure_protocol(prep, u_abc, u_d)
    locc = run_locc_protocol(
        rho0(), prep, single_term(u_abc, u_d), IDENTITY_CHANNEL, IDENTITY_CHANNEL, opt=FAST
    )
    assert locc.regime == "theorem4"
    assert np.allclose(locc.values, pure.values, atol=1e-9)


def test_dephasing_mixture_cannot_raise_entanglement():
    locc = run_locc_protocol(
        rho0(),
        bell_maker("C", "D"),
        dephasing_mixture(QUBITS),
        IDENTITY_CHANNEL,
        IDENTITY_CHANNEL,
        opt=FAST,
        strict=True,
    )
    assert math.isclose(locc.e(2), 1.0, abs_tol=1e-9)
    assert locc.e(3) < 1e-9
    assert locc.steps[2].exact
    assert locc.margins["e3_le_e2"].ok


def test_random_locc_trials_respect_bounds(rng):
    for _ in range(3):
        trace = run_locc_protocol(
            rho0(),
            haar_unitary(16, rng),
            random_locc_mixture(QUBITS, 3, rng),
            random_channel(2, 2, rng),
            random_channel(2, 2, rng),
            opt=FAST,
            strict=True,
        )
        assert trace.e(4) <= trace.e(2) + 1.0 + 1e-3


@pytest.mark.slow
def test_sender_entropy_bound_is_active():
    rng = np.random.default_rng(2024)
    margins = [
        run_pure_protocol(haar_unitary(16, rng), *haar_locals(rng), strict=True)
        .margins["e4_minus_e3_le_s_c"]
        .value
        for _ in range(10_000)
    ]
    assert min(margins) >= -1e-9
    assert min(margins) < 0.1
