import argparse
import sys
from pathlib import Path
from typing import get_args

import numpy as np

from ebitflow.api import find_assets_root, get_default_seed, resolve_state_path
from ebitflow.channels import small_unitary
from ebitflow.entanglement import (
    OptConfig,
    OptMethod,
    eof_two_qubit,
    eof_variational,
    estimate_eof,
    pure_entanglement,
    von_neumann_entropy,
)
from ebitflow.errors import (
    BoundViolation,
    ConfigError,
    EbitflowError,
    ParseError,
    ValidationError,
)
from ebitflow.experiment import (
    OUTPUT_FORMATS,
    PREPARATIONS,
    ExperimentConfig,
    run_experiment,
    write_report,
)
from ebitflow.protocol import equality_witness
from ebitflow.serialize import load_state, trace_to_dict, write_json
from ebitflow.show import render_eof, render_schmidt, render_trace
from ebitflow.states import (
    DensityMatrix,
    StateVector,
    partial_trace,
    pure_to_density,
    schmidt_decompose,
)
from ebitflow.tensor import Bipartition, SubsystemLayout

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_VIOLATION = 4
EXIT_PARSE = 5
STATUS_WIDTH = 28


def format_status(label: str, status: str) -> str:
    return f"{label:.<{STATUS_WIDTH}} {status}"


def _opt_config(args: argparse.Namespace) -> OptConfig:
    return OptConfig(
        max_ensemble=args.max_ensemble,
        restarts=args.restarts,
        tol=args.opt_tol,
        max_iters=args.max_iters,
        seed=get_default_seed(getattr(args, "seed", None)),
        method=args.opt_method,
    )


def _load(path: str) -> StateVector | DensityMatrix:
    return load_state(resolve_state_path(path))


def _cut(text: str | None, layout: SubsystemLayout) -> Bipartition:
    if text is None:
        return Bipartition.split(layout, layout.labels[:1])
    return Bipartition.parse(text, layout)


def _verify(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig(
        theorem=args.theorem,
        trials=args.trials,
        seed=get_default_seed(args.seed),
        tol=args.tol,
        eps_var=args.eps_var,
        channel_spec=args.channel,
        ensemble_size=args.ensemble_size,
        opt=_opt_config(args),
        output_format=args.format,
        output_path=None if args.out is None else Path(args.out),
        jobs=args.jobs,
        identity=args.identity,
        preparation=args.preparation,
        variational=not args.no_variational,
        db_path=None if args.db is None else Path(args.db),
    )
    try:
        cfg.validate()
    except ConfigError:
        print(format_status("validate config", "FAIL"), flush=True)
        raise
    print(format_status("validate config", "OK"), flush=True)
    print(
        f"theorem {cfg.theorem}: {cfg.trials} trials, seed {cfg.seed}, jobs {cfg.jobs}",
        flush=True,
    )

    report = run_experiment(cfg, reporter=lambda line: print(line, flush=True))
    aggregate = report.aggregate
    min_margin = aggregate["min_margin"]
    print(
        f"{aggregate['trials']} trials, {report.violation_count} violations, "
        f"min margin {'n/a' if min_margin is None else f'{min_margin:.3e}'}, "
        f"max E2 {aggregate['max_e2']:.7f}, max E4 {aggregate['max_e4']:.7f} "
        f"in {report.wall_time:.2f}s",
        flush=True,
    )
    if cfg.output_path is not None:
        path = write_report(report, cfg.output_path, cfg.output_format)
        print(f"report: {path}", flush=True)
    return EXIT_VIOLATION if report.violation_count else EXIT_OK


def _entropy(args: argparse.Namespace) -> int:
    state = _load(args.state)
    if isinstance(state, StateVector):
        if len(state.layout.labels) == 1:
            value = 0.0
        else:
            value = pure_entanglement(state, _cut(args.cut, state.layout)).bits
    elif args.cut is None:
        value = von_neumann_entropy(state).bits
    else:
        cut = Bipartition.parse(args.cut, state.layout)
        value = von_neumann_entropy(partial_trace(state, cut.left)).bits
    print(f"entropy: {value:.7f}")
    return EXIT_OK


def _schmidt(args: argparse.Namespace) -> int:
    state = _load(args.state)
    if not isinstance(state, StateVector):
        raise ValidationError("Schmidt decomposition needs a pure state")
    for line in render_schmidt(schmidt_decompose(state, _cut(args.cut, state.layout))):
        print(line)
    return EXIT_OK


def _eof(args: argparse.Namespace) -> int:
    state = _load(args.state)
    rho = pure_to_density(state) if isinstance(state, StateVector) else state
    cut = _cut(args.cut, rho.layout)
    opt = _opt_config(args)
    if args.method == "auto":
        print(render_eof("eof", estimate_eof(rho, cut, opt)))
        return EXIT_OK

    values: list[float] = []
    if args.method in {"closed", "both"}:
        closed = eof_two_qubit(rho)
        values.append(closed.value)
        print(render_eof("closed_form", closed))
    if args.method in {"variational", "both"}:
        searched = eof_variational(rho, cut, opt)
        values.append(searched.value)
        print(render_eof("variational", searched))
    if len(values) == 2:
        print(f"difference: {abs(values[1] - values[0]):.3e}")
    return EXIT_OK


def _witness(args: argparse.Namespace) -> int:
    perturbation = None
    if args.perturb:
        rng = np.random.default_rng(get_default_seed(args.seed))
        perturbation = small_unitary(16, args.perturb, rng)
    trace, _ = equality_witness(perturbation)
    for line in render_trace(trace):
        print(line)
    if args.out is not None:
        print(f"trace: {write_json(trace_to_dict(trace, with_states=True), args.out)}")
    return EXIT_OK


def _fixtures(_: argparse.Namespace) -> int:
    states_root = find_assets_root() / "states"
    paths = sorted(states_root.glob("*.json"))
    if not paths:
        print("No state fixtures found.")
        return EXIT_OK
    for path in paths:
        state = load_state(path)
        kind = "pure" if isinstance(state, StateVector) else "density"
        print(f"- {path.stem} [{kind}] ({','.join(state.layout.labels)})")
    return EXIT_OK


def _add_opt_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--restarts",
        type=int,
        default=OptConfig.restarts,
        help="Random restarts of the EoF search.",
    )
    parser.add_argument(
        "--max-iters",
        type=int,
        default=OptConfig.max_iters,
        help="Iteration cap per restart.",
    )
    parser.add_argument(
        "--opt-tol",
        type=float,
        default=OptConfig.tol,
        help="Optimizer tolerance.",
    )
    parser.add_argument(
        "--opt-method",
        choices=get_args(OptMethod),
        default=OptConfig.method,
        help="Local optimizer of the EoF search.",
    )
    parser.add_argument(
        "--max-ensemble",
        type=int,
        default=None,
        help="Decomposition size. Defaults to rank squared.",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebitflow",
        description="Qubit transmission protocol simulator and bound verifier.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    verify_parser = subparsers.add_parser(
        "verify",
        help="Run a seeded randomized sweep of one theorem.",
        description="Run seeded protocol trials and check every bound margin.",
    )
    verify_parser.add_argument("--theorem", type=int, required=True, choices=[1, 2, 3, 4])
    verify_parser.add_argument("--trials", type=int, default=100, help="Number of trials.")
    verify_parser.add_argument(
        "--seed",
        type=lambda value: int(value, 0),
        default=None,
        help="Base seed. Defaults to EBITFLOW_SEED or 0.",
    )
    verify_parser.add_argument("--tol", type=float, default=1e-9, help="Exact-bound tolerance.")
    verify_parser.add_argument(
        "--eps-var",
        type=float,
        default=1e-3,
        help="Slack for bounds involving variational EoF values.",
    )
    verify_parser.add_argument(
        "--channel",
        default=None,
        help="Channel for theorems 3 and 4, e.g. depolarizing:0.3 or random:env_dim=2:seed=5.",
    )
    verify_parser.add_argument(
        "--ensemble-size",
        type=int,
        default=None,
        help="Members per random ensemble (theorem 2).",
    )
    verify_parser.add_argument(
        "--preparation",
        choices=PREPARATIONS,
        default="haar",
        help="Register preparation for theorems 3 and 4.",
    )
    verify_parser.add_argument(
        "--identity",
        action="store_true",
        help="Use identity unitaries throughout (theorem 1).",
    )
    verify_parser.add_argument(
        "--no-variational",
        action="store_true",
        help="Skip the EoF search and report ensemble averages (theorem 2).",
    )
    verify_parser.add_argument("--jobs", type=int, default=1, help="Concurrent trials.")
    verify_parser.add_argument("--format", choices=OUTPUT_FORMATS, default="json")
    verify_parser.add_argument("--out", default=None, help="Report output path.")
    verify_parser.add_argument(
        "--db",
        default=None,
        help="DuckDB file to store the trial table in. Defaults to EBITFLOW_DB_PATH.",
    )
    _add_opt_arguments(verify_parser)
    verify_parser.set_defaults(func=_verify)

    entropy_parser = subparsers.add_parser(
        "entropy",
        help="Print the entropy of a state file or of one side of a cut.",
    )
    entropy_parser.add_argument("state", metavar="STATE", help="State file or fixture name.")
    entropy_parser.add_argument("--cut", default=None, help="Cut such as A~B or AB~CD.")
    entropy_parser.set_defaults(func=_entropy)

    schmidt_parser = subparsers.add_parser(
        "schmidt",
        help="Print the Schmidt decomposition of a pure state across a cut.",
    )
    schmidt_parser.add_argument("state", metavar="STATE", help="State file or fixture name.")
    schmidt_parser.add_argument("--cut", default=None, help="Cut such as A~B or AB~CD.")
    schmidt_parser.set_defaults(func=_schmidt)

    eof_parser = subparsers.add_parser(
        "eof",
        help="Print the entanglement of formation of a state across a cut.",
    )
    eof_parser.add_argument("state", metavar="STATE", help="State file or fixture name.")
    eof_parser.add_argument("--cut", default=None, help="Cut such as A~B.")
    eof_parser.add_argument(
        "--method",
        choices=["auto", "closed", "variational", "both"],
        default="auto",
    )
    eof_parser.add_argument(
        "--seed",
        type=lambda value: int(value, 0),
        default=None,
        help="Seed of the EoF search restarts.",
    )
    _add_opt_arguments(eof_parser)
    eof_parser.set_defaults(func=_eof)

    witness_parser = subparsers.add_parser(
        "witness",
        help="Run the protocol on the state that saturates the bound.",
    )
    witness_parser.add_argument(
        "--perturb",
        type=float,
        default=0.0,
        help="Angle of a random unitary applied after the preparation.",
    )
    witness_parser.add_argument("--seed", type=lambda value: int(value, 0), default=None)
    witness_parser.add_argument("--out", default=None, help="Write the trace as JSON.")
    witness_parser.set_defaults(func=_witness)

    fixtures_parser = subparsers.add_parser(
        "fixtures",
        help="List the shipped state fixtures.",
    )
    fixtures_parser.set_defaults(func=_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BoundViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except ConfigError as exc:
        for diagnostic in exc.diagnostics:
            print(f"config error: {diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"invalid state: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EbitflowError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
