"""Seeded randomized sweeps of the transmission protocol, one theorem at a time."""

from __future__ import annotations

import time
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, Literal

import numpy as np
import polars as pl

from ebitflow.api import MAX_SEED, save_trials
from ebitflow.channels import (
    ChannelSpec,
    UnitaryOp,
    haar_unitary,
    named_channel,
    random_locc_mixture,
    two_bell_pairs_preparation,
)
from ebitflow.checks import (
    SLACK_SUFFIX,
    CheckResult,
    LineReporter,
    margin_columns,
    run_bound_checks,
)
from ebitflow.entanglement import OptConfig
from ebitflow.errors import ConfigError, ParseError
from ebitflow.protocol import (
    DEFAULT_EPS_VAR,
    DEFAULT_TOL,
    QUBITS,
    ProtocolTrace,
    initial_state,
    local_identities,
    run_locc_protocol,
    run_mixed_protocol,
    run_noisy_protocol,
    run_pure_protocol,
)
from ebitflow.serialize import write_json
from ebitflow.states import pure_to_density, random_ensemble

OutputFormat = Literal["json", "csv"]
Preparation = Literal["haar", "bell-pairs"]
THEOREMS = (1, 2, 3, 4)
PREPARATIONS = ("haar", "bell-pairs")
OUTPUT_FORMATS = ("json", "csv")
DEFAULT_ENSEMBLE_SIZE = 3
DEFAULT_MIXTURE_TERMS = 3

_MASK = 2**64 - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class ExperimentConfig:
    theorem: int
    trials: int = 100
    seed: int = 0
    tol: float = DEFAULT_TOL
    eps_var: float = DEFAULT_EPS_VAR
    channel_spec: str | None = None
    ensemble_size: int | None = None
    opt: OptConfig = field(default_factory=OptConfig)
    output_format: OutputFormat = "json"
    output_path: Path | None = None
    jobs: int = 1
    identity: bool = False
    preparation: Preparation = "haar"
    variational: bool = True
    mixture_terms: int = DEFAULT_MIXTURE_TERMS
    db_path: Path | None = None

    def diagnostics(self) -> list[str]:
        problems: list[str] = []
        if self.theorem not in THEOREMS:
            problems.append(f"theorem: {self.theorem} is not one of {THEOREMS}")
        if self.trials < 1:
            problems.append(f"trials: must be at least 1, got {self.trials}")
        if not 0 <= self.seed <= MAX_SEED:
            problems.append(f"seed: {self.seed} is outside [0, 2**64)")
        if not self.tol > 0:
            problems.append(f"tol: must be positive, got {self.tol}")
        if not self.eps_var > 0:
            problems.append(f"eps_var: must be positive, got {self.eps_var}")
        if self.theorem in (3, 4) and self.channel_spec is None:
            problems.append(f"channel_spec: required for theorem {self.theorem}")
        if self.theorem in (1, 2) and self.channel_spec is not None:
            problems.append(f"channel_spec: not used by theorem {self.theorem}")
        if self.channel_spec is not None:
            try:
                ChannelSpec.parse(self.channel_spec)
            except ParseError as exc:
                problems.append(f"channel_spec: {exc}")
        if self.ensemble_size is not None and self.ensemble_size < 1:
            problems.append(f"ensemble_size: must be at least 1, got {self.ensemble_size}")
        if self.mixture_terms < 1:
            problems.append(f"mixture_terms: must be at least 1, got {self.mixture_terms}")
        if self.jobs < 1:
            problems.append(f"jobs: must be at least 1, got {self.jobs}")
        if self.identity and self.theorem != 1:
            problems.append("identity: only supported for theorem 1")
        if self.preparation not in PREPARATIONS:
            problems.append(f"preparation: '{self.preparation}' is not one of {PREPARATIONS}")
        if self.output_format not in OUTPUT_FORMATS:
            problems.append(
                f"output_format: '{self.output_format}' is not one of {OUTPUT_FORMATS}"
            )
        if self.opt.restarts < 1:
            problems.append(f"opt.restarts: must be at least 1, got {self.opt.restarts}")
        if self.opt.max_iters < 1:
            problems.append(f"opt.max_iters: must be at least 1, got {self.opt.max_iters}")
        if not self.opt.tol > 0:
            problems.append(f"opt.tol: must be positive, got {self.opt.tol}")
        if self.opt.max_ensemble is not None and self.opt.max_ensemble < 1:
            problems.append(
                f"opt.max_ensemble: must be at least 1, got {self.opt.max_ensemble}"
            )
        return problems

    def validate(self) -> ExperimentConfig:
        problems = self.diagnostics()
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def channel(self) -> ChannelSpec | None:
        return None if self.channel_spec is None else ChannelSpec.parse(self.channel_spec)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["output_path"] = None if self.output_path is None else str(self.output_path)
        data["db_path"] = None if self.db_path is None else str(self.db_path)
        return data


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    trials: pl.DataFrame
    checks: tuple[CheckResult, ...]
    violation_count: int
    wall_time: float
    library_version: str

    @property
    def margin_columns(self) -> list[str]:
        return margin_columns(self.trials)

    @property
    def aggregate(self) -> dict[str, Any]:
        margins = self.margin_columns
        min_margin = (
            float(self.trials.select(pl.min_horizontal(margins)).to_series().min())
            if margins
            else None
        )
        return {
            "trials": self.trials.height,
            "min_margin": min_margin,
            "max_e2": float(self.trials["e2"].max()),
            "max_e4": float(self.trials["e4"].max()),
            "violation_count": self.violation_count,
        }

    def margin_arrays(self) -> dict[str, list[float]]:
        return {name: self.trials[name].to_list() for name in self.margin_columns}

    def to_dict(self) -> dict[str, Any]:
        margins = self.margin_columns
        value_columns = [
            name
            for name in self.trials.columns
            if name not in margins and not name.endswith(SLACK_SUFFIX)
        ]
        trials = [
            {
                **{name: row[name] for name in value_columns},
                "margins": {
                    name: {"value": row[name], "slack": row[f"{name}{SLACK_SUFFIX}"]}
                    for name in margins
                },
            }
            for row in self.trials.iter_rows(named=True)
        ]
        return {
            "library_version": self.library_version,
            "config": self.config.to_dict(),
            "aggregate": self.aggregate,
            "checks": [
                {"name": check.name, "failing_rows": check.failing_rows}
                for check in self.checks
            ],
            "trials": trials,
            "wall_time": self.wall_time,
        }


def derive_trial_seed(seed: int, index: int) -> int:
    """splitmix64 of ``seed + (index + 1) * golden``, the per-trial stream seed."""
    z = (seed + (index + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def library_version() -> str:
    try:
        return version("ebitflow")
    except PackageNotFoundError:
        return "0.0.0"


def _haar_locals(rng: np.random.Generator) -> tuple[UnitaryOp, UnitaryOp]:
    return haar_unitary(8, rng, ("A", "B", "C")), haar_unitary(2, rng, ("D",))


def _preparation(
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> tuple[UnitaryOp, UnitaryOp, UnitaryOp]:
    if cfg.preparation == "bell-pairs":
        return two_bell_pairs_preparation(QUBITS), *local_identities()
    return haar_unitary(16, rng), *_haar_locals(rng)


def _theorem1_trial(cfg: ExperimentConfig, rng: np.random.Generator, _: int) -> ProtocolTrace:
    if cfg.identity:
        return run_pure_protocol(UnitaryOp.identity(16), *local_identities(), tol=cfg.tol)
    return run_pure_protocol(haar_unitary(16, rng), *_haar_locals(rng), tol=cfg.tol)


def _theorem2_trial(cfg: ExperimentConfig, rng: np.random.Generator, seed: int) -> ProtocolTrace:
    ensemble = random_ensemble(QUBITS, cfg.ensemble_size or DEFAULT_ENSEMBLE_SIZE, rng)
    trace, _ = run_mixed_protocol(
        ensemble,
        haar_unitary(16, rng),
        *_haar_locals(rng),
        opt=replace(cfg.opt, seed=seed),
        variational=cfg.variational,
        tol=cfg.tol,
        eps_var=cfg.eps_var,
    )
    return trace


def _channels(cfg: ExperimentConfig, rng: np.random.Generator):
    spec = cfg.channel or ChannelSpec("identity")
    return spec.build(rng), spec.build(rng)


def _theorem3_trial(cfg: ExperimentConfig, rng: np.random.Generator, seed: int) -> ProtocolTrace:
    u_prep, u_abc, u_d = _preparation(cfg, rng)
    ch_d, ch_c = _channels(cfg, rng)
    return run_noisy_protocol(
        pure_to_density(initial_state()),
        u_prep,
        u_abc,
        u_d,
        ch_d,
        ch_c,
        opt=replace(cfg.opt, seed=seed),
        tol=cfg.tol,
        eps_var=cfg.eps_var,
    )


def _theorem4_trial(cfg: ExperimentConfig, rng: np.random.Generator, seed: int) -> ProtocolTrace:
    u_prep, _, _ = _preparation(cfg, rng)
    mix = random_locc_mixture(QUBITS, cfg.mixture_terms, rng)
    ch_d, ch_c = _channels(cfg, rng)
    return run_locc_protocol(
        pure_to_density(initial_state()),
        u_prep,
        mix,
        ch_d,
        ch_c,
        opt=replace(cfg.opt, seed=seed),
        tol=cfg.tol,
        eps_var=cfg.eps_var,
    )


TrialFunc = Callable[[ExperimentConfig, np.random.Generator, int], ProtocolTrace]
TRIALS: dict[int, TrialFunc] = {
    1: _theorem1_trial,
    2: _theorem2_trial,
    3: _theorem3_trial,
    4: _theorem4_trial,
}


def trace_row(index: int, seed: int, trace: ProtocolTrace) -> dict[str, Any]:
    row: dict[str, Any] = {"trial": index, "seed": seed}
    for step in trace.steps:
        row[f"e{step.step}"] = step.value
    for step in trace.steps[1:]:
        row[f"e{step.step}_method"] = step.method
        row[f"e{step.step}_exact"] = step.exact
    row.update(trace.extras)
    for key, value in trace.pairs.items():
        row["pair_" + key.replace(":", "_").replace("~", "_")] = value
    for name, margin in trace.margins.items():
        row[name] = margin.value
        row[f"{name}{SLACK_SUFFIX}"] = margin.slack
    return row


def run_trial(cfg: ExperimentConfig, index: int) -> dict[str, Any]:
    seed = derive_trial_seed(cfg.seed, index)
    rng = np.random.default_rng(seed)
    return trace_row(index, seed, TRIALS[cfg.theorem](cfg, rng, seed))


def run_trials(cfg: ExperimentConfig) -> pl.DataFrame:
    rows: dict[int, dict[str, Any]] = {}
    if cfg.jobs == 1:
        for index in range(cfg.trials):
            rows[index] = run_trial(cfg, index)
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as executor:
            futures = {
                executor.submit(run_trial, cfg, index): index
                for index in range(cfg.trials)
            }
            for future in as_completed(futures):
                rows[futures[future]] = future.result()
    return pl.DataFrame(
        [rows[index] for index in range(cfg.trials)],
        schema_overrides={"seed": pl.UInt64},
    )


def run_experiment(
    cfg: ExperimentConfig,
    *,
    reporter: LineReporter | None = None,
) -> ExperimentReport:
    cfg.validate()
    start = time.perf_counter()
    frame = run_trials(cfg)
    checks, violations = run_bound_checks(
        frame,
        f"theorem{cfg.theorem}",
        reporter=reporter,
    )
    save_trials(frame, f"verify_theorem{cfg.theorem}", db_path=cfg.db_path)
    return ExperimentReport(
        config=cfg,
        trials=frame,
        checks=tuple(checks),
        violation_count=violations,
        wall_time=time.perf_counter() - start,
        library_version=library_version(),
    )


def write_report(report: ExperimentReport, path: Path | str, fmt: OutputFormat = "json") -> Path:
    path = Path(path)
    if fmt == "csv":
        path.parent.mkdir(parents=True, exist_ok=True)
        report.trials.write_csv(path)
        return path
    return write_json(report.to_dict(), path)


def depolarizing_sweep(
    probabilities: Iterable[float],
    *,
    opt: OptConfig | None = None,
    tol: float = DEFAULT_TOL,
    eps_var: float = DEFAULT_EPS_VAR,
) -> pl.DataFrame:
    """Two-Bell-pair preparation with the same depolarizing noise on both transmissions."""
    rows = []
    rho0 = pure_to_density(initial_state())
    prep = two_bell_pairs_preparation(QUBITS)
    for index, p in enumerate(probabilities):
        channel = named_channel("depolarizing", p)
        trace = run_noisy_protocol(
            rho0,
            prep,
            *local_identities(),
            channel,
            channel,
            opt=opt,
            tol=tol,
            eps_var=eps_var,
        )
        rows.append({"p": float(p), **trace_row(index, 0, trace)})
    return pl.DataFrame(rows)
