"""Qubit transmission protocol simulator and entanglement bound verifier."""

from .channels import (
    ChannelSpec,
    LoccMixture,
    QuantumChannel,
    UnitaryOp,
    apply_channel,
    apply_locc_mixture,
    apply_unitary,
    haar_unitary,
    named_channel,
    random_channel,
    stinespring_dilate,
)
from .entanglement import (
    EofResult,
    OptConfig,
    eof_two_qubit,
    eof_variational,
    estimate_eof,
    pure_entanglement,
    von_neumann_entropy,
)
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .protocol import (
    ProtocolTrace,
    equality_witness,
    run_locc_protocol,
    run_mixed_protocol,
    run_noisy_protocol,
    run_pure_protocol,
)
from .states import (
    DensityMatrix,
    PureEnsemble,
    SchmidtForm,
    StateVector,
    partial_trace,
    schmidt_decompose,
    validate_density,
)
from .tensor import Bipartition, SubsystemLayout

__all__ = [
    "Bipartition",
    "ChannelSpec",
    "DensityMatrix",
    "EofResult",
    "ExperimentConfig",
    "ExperimentReport",
    "LoccMixture",
    "OptConfig",
    "ProtocolTrace",
    "PureEnsemble",
    "QuantumChannel",
    "SchmidtForm",
    "StateVector",
    "SubsystemLayout",
    "UnitaryOp",
    "apply_channel",
    "apply_locc_mixture",
    "apply_unitary",
    "eof_two_qubit",
    "eof_variational",
    "equality_witness",
    "estimate_eof",
    "haar_unitary",
    "named_channel",
    "partial_trace",
    "pure_entanglement",
    "random_channel",
    "run_experiment",
    "run_locc_protocol",
    "run_mixed_protocol",
    "run_noisy_protocol",
    "run_pure_protocol",
    "schmidt_decompose",
    "stinespring_dilate",
    "validate_density",
    "von_neumann_entropy",
]
