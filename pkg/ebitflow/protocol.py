"""Four-step transmission engine.

Alice starts with every subsystem. Step 1 prepares the register, step 2 sends D
to Bob, step 3 applies local operations on each side and step 4 sends C. The
entanglement between the two parties is recorded after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ebitflow.channels import (
    LoccMixture,
    QuantumChannel,
    UnitaryOp,
    apply_channel,
    apply_locc_mixture,
    apply_unitary,
    compose,
    kraus_branches,
    two_bell_pairs_preparation,
)
from ebitflow.entanglement import (
    EofResult,
    OptConfig,
    ensemble_avg_entanglement,
    eof_two_qubit,
    estimate_eof,
    pure_entanglement,
    von_neumann_entropy,
)
from ebitflow.errors import BoundViolation, LayoutMismatch
from ebitflow.states import (
    DensityMatrix,
    PureEnsemble,
    StateVector,
    eigen_ensemble,
    partial_trace,
)
from ebitflow.tensor import ABCD, Bipartition, SubsystemLayout

Regime = Literal["theorem1", "theorem2", "theorem3", "theorem4"]
StepMethod = Literal["pure_marginal", "ensemble_avg", "eof_variational", "eof_two_qubit"]
LocalTerms = tuple[tuple[float, UnitaryOp, UnitaryOp], ...]

QUBITS = SubsystemLayout.qubits(*ABCD)
CUT_AFTER_D = Bipartition(("A", "B", "C"), ("D",))
CUT_AFTER_C = Bipartition(("A", "B"), ("C", "D"))
STEP_NAMES = ("prepare", "send_d", "local", "send_c")
DEFAULT_TOL = 1e-9
DEFAULT_EPS_VAR = 1e-3
SNAPSHOT_LIMIT = 64

_EOF_METHODS: dict[str, StepMethod] = {
    "pure": "pure_marginal",
    "closed_form": "eof_two_qubit",
    "variational": "eof_variational",
}


@dataclass(frozen=True)
class StepRecord:
    step: int
    name: str
    cut: Bipartition | None
    value: float
    method: StepMethod
    exact: bool
    state: StateVector | DensityMatrix | None = None


@dataclass(frozen=True)
class Margin:
    """A bound holds when ``value >= -slack``."""

    value: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.value >= -self.slack


@dataclass(frozen=True)
class ProtocolTrace:
    regime: Regime
    steps: tuple[StepRecord, ...]
    margins: dict[str, Margin]
    extras: dict[str, float] = field(default_factory=dict)
    pairs: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if tuple(step.step for step in self.steps) != (1, 2, 3, 4):
            raise ValueError(
                f"Trace must hold steps 1..4 in order, got "
                f"{[step.step for step in self.steps]}"
            )

    @property
    def values(self) -> tuple[float, float, float, float]:
        e1, e2, e3, e4 = (step.value for step in self.steps)
        return e1, e2, e3, e4

    def e(self, step: int) -> float:
        return self.steps[step - 1].value

    def violations(self) -> dict[str, float]:
        return {name: m.value for name, m in self.margins.items() if not m.ok}

    def check(self) -> ProtocolTrace:
        violations = self.violations()
        if violations:
            raise BoundViolation(self.regime, violations)
        return self


@dataclass(frozen=True)
class EnsembleTrace:
    ensembles: tuple[PureEnsemble, ...]
    member_e2: tuple[float, ...]
    member_e3: tuple[float, ...]
    member_e4: tuple[float, ...]

    def __post_init__(self) -> None:
        sizes = {len(ensemble) for ensemble in self.ensembles}
        if len(sizes) != 1:
            raise ValueError(f"Unitary steps changed the member count: {sorted(sizes)}")

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.ensembles[0].probabilities)

    @property
    def a2(self) -> float:
        return float(self.probabilities @ np.asarray(self.member_e2))

    @property
    def a4(self) -> float:
        return float(self.probabilities @ np.asarray(self.member_e4))


def initial_state(layout: SubsystemLayout = QUBITS) -> StateVector:
    return StateVector.basis(layout)


def _snapshot(state: StateVector | DensityMatrix) -> StateVector | DensityMatrix | None:
    return state if state.layout.total_dim <= SNAPSHOT_LIMIT else None


def _check_layout(layout: SubsystemLayout) -> None:
    if sorted(layout.labels) != sorted(ABCD):
        raise LayoutMismatch(f"Protocol needs subsystems {ABCD}, got {layout.labels}")


def run_pure_protocol(
    u_prep: UnitaryOp,
    u_abc: UnitaryOp,
    u_d: UnitaryOp,
    *,
    layout: SubsystemLayout = QUBITS,
    tol: float = DEFAULT_TOL,
    strict: bool = False,
) -> ProtocolTrace:
    _check_layout(layout)
    psi1 = apply_unitary(initial_state(layout), u_prep)
    e2 = pure_entanglement(psi1, CUT_AFTER_D).bits
    psi3 = apply_unitary(apply_unitary(psi1, u_abc), u_d)
    e3 = pure_entanglement(psi3, CUT_AFTER_D).bits
    e4 = pure_entanglement(psi3, CUT_AFTER_C).bits
    s_c = von_neumann_entropy(psi3.marginal(("C",))).bits
    e4_bob = von_neumann_entropy(psi3.marginal(("C", "D"))).bits

    steps = (
        StepRecord(1, STEP_NAMES[0], None, 0.0, "pure_marginal", True, _snapshot(psi1)),
        StepRecord(2, STEP_NAMES[1], CUT_AFTER_D, e2, "pure_marginal", True, _snapshot(psi1)),
        StepRecord(3, STEP_NAMES[2], CUT_AFTER_D, e3, "pure_marginal", True, _snapshot(psi3)),
        StepRecord(4, STEP_NAMES[3], CUT_AFTER_C, e4, "pure_marginal", True, _snapshot(psi3)),
    )
    margins = {
        "e2_le_1": Margin(1.0 - e2, tol),
        "e3_eq_e2": Margin(-abs(e3 - e2), tol),
        "e4_minus_e3_le_s_c": Margin(s_c - (e4 - e3), tol),
        "e4_le_e2_plus_1": Margin(e2 + 1.0 - e4, tol),
        "e4_le_2": Margin(2.0 - e4, tol),
        "bob_side_agrees": Margin(-abs(e4_bob - e4), tol),
    }
    trace = ProtocolTrace(
        "theorem1",
        steps,
        margins,
        extras={"s_c4": s_c, "e4_bob": e4_bob},
    )
    return trace.check() if strict else trace


def _step_bound(
    estimate: EofResult,
    average: float,
    exact_average: bool = False,
) -> tuple[float, StepMethod, bool]:
    """Smaller of an EoF estimate and a known decomposition average."""
    if estimate.exact or estimate.value <= average:
        return estimate.value, _EOF_METHODS[estimate.method], estimate.exact
    return average, "ensemble_avg", exact_average


def _transport(
    ensemble: PureEnsemble,
    terms: LocalTerms,
    ch_c: QuantumChannel | None = None,
) -> tuple[PureEnsemble, PureEnsemble]:
    """Carry a step-2 decomposition through the local step and the C channel."""
    weights: list[float] = []
    states: list[StateVector] = []
    for p, psi in ensemble.members:
        for q, u_abc, u_d in terms:
            weights.append(p * q)
            states.append(apply_unitary(apply_unitary(psi, u_abc), u_d))
    after_local = PureEnsemble.from_weights(weights, states, floor=0.0)
    if ch_c is None:
        return after_local, after_local

    weights, states = [], []
    for p, psi in after_local.members:
        for w, branch in kraus_branches(psi, ch_c, "C"):
            weights.append(p * w)
            states.append(branch)
    return after_local, PureEnsemble.from_weights(weights, states, floor=0.0)


def run_mixed_protocol(
    ens0: PureEnsemble,
    u_prep: UnitaryOp,
    u_abc: UnitaryOp,
    u_d: UnitaryOp,
    *,
    opt: OptConfig | None = None,
    variational: bool = True,
    tol: float = DEFAULT_TOL,
    eps_var: float = DEFAULT_EPS_VAR,
    strict: bool = False,
) -> tuple[ProtocolTrace, EnsembleTrace]:
    _check_layout(ens0.layout)
    ens1 = ens0.map(lambda psi: apply_unitary(psi, u_prep))
    ens3 = ens1.map(lambda psi: apply_unitary(apply_unitary(psi, u_abc), u_d))
    ensembles = EnsembleTrace(
        ensembles=(ens1, ens1, ens3, ens3),
        member_e2=tuple(pure_entanglement(psi, CUT_AFTER_D).bits for psi in ens1.states),
        member_e3=tuple(pure_entanglement(psi, CUT_AFTER_D).bits for psi in ens3.states),
        member_e4=tuple(pure_entanglement(psi, CUT_AFTER_C).bits for psi in ens3.states),
    )
    a2, a4 = ensembles.a2, ensembles.a4
    rho2, rho4 = ens1.density(), ens3.density()
    single = len(ens0) == 1

    extras = {"a2": a2, "a4": a4, "members": float(len(ens0))}
    if variational:
        est2 = estimate_eof(rho2, CUT_AFTER_D, opt, with_decomposition=True, candidates=(ens1,))
        e2, method2, exact2 = _step_bound(est2, a2, single)
        carried = est2.decomposition if method2 != "ensemble_avg" else None
        _, moved = _transport(carried or ens1, ((1.0, u_abc, u_d),))
        t4 = ensemble_avg_entanglement(moved, CUT_AFTER_C).bits
        est4 = estimate_eof(rho4, CUT_AFTER_C, opt, candidates=(ens3, moved))
        e4, method4, exact4 = _step_bound(est4, min(a4, t4), single)
        extras["t4"] = t4
    else:
        e2, method2, exact2 = a2, "ensemble_avg", single
        e4, method4, exact4 = a4, "ensemble_avg", single

    steps = (
        StepRecord(1, STEP_NAMES[0], None, 0.0, "ensemble_avg", True, _snapshot(ens1.density())),
        StepRecord(2, STEP_NAMES[1], CUT_AFTER_D, e2, method2, exact2, _snapshot(rho2)),
        StepRecord(3, STEP_NAMES[2], CUT_AFTER_D, e2, method2, exact2, _snapshot(rho4)),
        StepRecord(4, STEP_NAMES[3], CUT_AFTER_C, e4, method4, exact4, _snapshot(rho4)),
    )
    member_gap = min(
        e2_i + 1.0 - e4_i
        for e2_i, e4_i in zip(ensembles.member_e2, ensembles.member_e4, strict=True)
    )
    member_drift = max(
        abs(e3_i - e2_i)
        for e2_i, e3_i in zip(ensembles.member_e2, ensembles.member_e3, strict=True)
    )
    margins = {
        "e2_le_1": Margin(1.0 - e2, tol),
        "member_e3_eq_e2": Margin(-member_drift, tol),
        "member_e4_le_e2_plus_1": Margin(member_gap, tol),
        "a4_le_a2_plus_1": Margin(a2 + 1.0 - a4, tol),
    }
    if variational:
        slack = tol if exact2 and exact4 else eps_var
        margins["e4_le_a2_plus_1"] = Margin(a2 + 1.0 - e4, eps_var)
        margins["e4_le_e2_plus_1"] = Margin(e2 + 1.0 - e4, slack)
    trace = ProtocolTrace("theorem2", steps, margins, extras=extras)
    return (trace.check() if strict else trace), ensembles


def run_noisy_protocol(
    rho0: DensityMatrix,
    u_prep: UnitaryOp,
    u_abc: UnitaryOp,
    u_d: UnitaryOp,
    ch_d: QuantumChannel,
    ch_c: QuantumChannel,
    *,
    opt: OptConfig | None = None,
    tol: float = DEFAULT_TOL,
    eps_var: float = DEFAULT_EPS_VAR,
    strict: bool = False,
) -> ProtocolTrace:
    return _run_channel_protocol(
        "theorem3",
        rho0,
        u_prep,
        ((1.0, u_abc, u_d),),
        ch_d,
        ch_c,
        opt=opt,
        tol=tol,
        eps_var=eps_var,
        strict=strict,
    )


def run_locc_protocol(
    rho0: DensityMatrix,
    u_prep: UnitaryOp,
    mix: LoccMixture,
    ch_d: QuantumChannel,
    ch_c: QuantumChannel,
    *,
    opt: OptConfig | None = None,
    tol: float = DEFAULT_TOL,
    eps_var: float = DEFAULT_EPS_VAR,
    strict: bool = False,
) -> ProtocolTrace:
    return _run_channel_protocol(
        "theorem4",
        rho0,
        u_prep,
        mix.terms,
        ch_d,
        ch_c,
        opt=opt,
        tol=tol,
        eps_var=eps_var,
        strict=strict,
    )


def _run_channel_protocol(
    regime: Regime,
    rho0: DensityMatrix,
    u_prep: UnitaryOp,
    terms: LocalTerms,
    ch_d: QuantumChannel,
    ch_c: QuantumChannel,
    *,
    opt: OptConfig | None,
    tol: float,
    eps_var: float,
    strict: bool,
) -> ProtocolTrace:
    _check_layout(rho0.layout)
    opt = opt or OptConfig()
    rho1 = apply_unitary(rho0, u_prep)
    rho2 = apply_channel(rho1, ch_d, "D")
    rho3 = apply_locc_mixture(rho2, LoccMixture(terms))
    rho4 = apply_channel(rho3, ch_c, "C")

    est2 = estimate_eof(rho2, CUT_AFTER_D, opt, with_decomposition=True)
    decomposition = (
        est2.decomposition if est2.decomposition is not None else eigen_ensemble(rho2)
    )
    a2 = ensemble_avg_entanglement(decomposition, CUT_AFTER_D).bits
    e2, method2, exact2 = _step_bound(est2, a2)
    moved3, moved4 = _transport(decomposition, terms, ch_c)
    a3 = ensemble_avg_entanglement(moved3, CUT_AFTER_D).bits
    a4 = ensemble_avg_entanglement(moved4, CUT_AFTER_C).bits

    if regime == "theorem3":
        e3, method3, exact3 = e2, method2, exact2
    else:
        est3 = estimate_eof(rho3, CUT_AFTER_D, opt, candidates=(moved3,))
        e3, method3, exact3 = _step_bound(est3, a3)
    est4 = estimate_eof(rho4, CUT_AFTER_C, opt, candidates=(moved4,))
    e4, method4, exact4 = _step_bound(est4, a4)

    steps = (
        StepRecord(1, STEP_NAMES[0], None, 0.0, "ensemble_avg", True, _snapshot(rho1)),
        StepRecord(2, STEP_NAMES[1], CUT_AFTER_D, e2, method2, exact2, _snapshot(rho2)),
        StepRecord(3, STEP_NAMES[2], CUT_AFTER_D, e3, method3, exact3, _snapshot(rho3)),
        StepRecord(4, STEP_NAMES[3], CUT_AFTER_C, e4, method4, exact4, _snapshot(rho4)),
    )
    pairs = pair_reductions(rho2, rho3, rho4)
    margins = {
        "e2_le_1": Margin(1.0 - e2, tol if exact2 else eps_var),
        "e4_le_e2_plus_1": Margin(e2 + 1.0 - e4, tol if exact2 and exact4 else eps_var),
        "transported_e4_le_a2_plus_1": Margin(a2 + 1.0 - a4, tol),
    }
    if regime == "theorem4":
        margins["e3_le_e2"] = Margin(e2 - e3, tol if exact2 and exact3 else eps_var)
    for x in ("A", "B"):
        before, after = pairs[f"step3:{x}~C"], pairs[f"step4:{x}~C"]
        margins[f"pair_{x.lower()}c_channel_monotone"] = Margin(before - after, tol)

    trace = ProtocolTrace(
        regime,
        steps,
        margins,
        extras={
            "a2": a2,
            "a3": a3,
            "a4": a4,
            "decomposition_size": float(len(decomposition)),
            "transported_size": float(len(moved4)),
        },
        pairs=pairs,
    )
    return trace.check() if strict else trace


def pair_reductions(
    rho2: DensityMatrix,
    rho3: DensityMatrix,
    rho4: DensityMatrix,
) -> dict[str, float]:
    """Closed-form EoF of each Alice-qubit/Bob-qubit pair around the transmissions."""
    pairs: dict[str, float] = {}
    for x in ("A", "B", "C"):
        pairs[f"step2:{x}~D"] = _pair_eof(rho2, x, "D")
    for x in ("A", "B"):
        pairs[f"step3:{x}~C"] = _pair_eof(rho3, x, "C")
        for y in ("C", "D"):
            pairs[f"step4:{x}~{y}"] = _pair_eof(rho4, x, y)
    return pairs


def _pair_eof(rho: DensityMatrix, x: str, y: str) -> float:
    return eof_two_qubit(partial_trace(rho, (x, y))).value


def equality_witness(
    perturbation: UnitaryOp | None = None,
    *,
    layout: SubsystemLayout = QUBITS,
) -> tuple[ProtocolTrace, StateVector]:
    """Phi+ on (A, D) and Phi+ on (B, C): E2 = 1 and E4 = 2."""
    prep = two_bell_pairs_preparation(layout)
    if perturbation is not None:
        prep = compose(layout, prep, perturbation)
    trace = run_pure_protocol(prep, *local_identities(layout), layout=layout)
    return trace, apply_unitary(initial_state(layout), prep)


def local_identities(layout: SubsystemLayout = QUBITS) -> tuple[UnitaryOp, UnitaryOp]:
    alice = ("A", "B", "C")
    return (
        UnitaryOp.identity(layout.subset(alice).total_dim, alice),
        UnitaryOp.identity(layout.dim("D"), ("D",)),
    )


def single_term(u_abc: UnitaryOp, u_d: UnitaryOp) -> LoccMixture:
    return LoccMixture(((1.0, u_abc, u_d),))
